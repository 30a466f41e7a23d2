use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsa_core::grid::GridCase;
use tsa_core::sim::{FaultImpedance, FaultKind, IssueCode, Scenario, ScenarioIssue};
use tsa_llm::{
    parse_single_block, render, Bindings, LlmBackend, LlmError, Retrieved, VectorStore, TASK_PREFIX,
};

use crate::corpus::describe_case;
use crate::request::{Intent, SubRequest, SubRequestList, SCENARIO_FIELDS, SCENARIO_SCHEMA, SUBREQUEST_FIELDS, SUBREQUEST_SCHEMA};
use crate::transcript::{AgentTranscript, AttemptRecord, Outcome, Stage};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("empty request")]
    EmptyRequest,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("decomposition could not be parsed after one reformat round: {0}")]
    Unparseable(String),
    #[error("the request decomposed into no sub-requests")]
    EmptyDecomposition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub max_retries: usize,
    pub top_k: usize,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self { max_retries: 3, top_k: 3, seed: 0 }
    }
}

/// A validated scenario and the prose that accompanied it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDraft {
    pub scenario: Scenario,
    pub rationale: String,
}

/// A model reply that did not yield a valid scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejected {
    pub response: String,
    pub errors: Vec<String>,
    pub issues: Vec<ScenarioIssue>,
}

/// The repair loop gave up; `errors` is the final error list.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("scenario still invalid after {attempts} attempts: {}", errors.join("; "))]
pub struct RepairFailure {
    pub attempts: usize,
    pub errors: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum DraftError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Failed(RepairFailure),
}

/// Drafts, validates and repairs scenarios for one case.
pub struct ScenarioAgent<'a> {
    backend: &'a dyn LlmBackend,
    case: &'a GridCase,
    store: Option<&'a VectorStore>,
    cfg: AgentConfig,
    description: String,
}

fn rationale_of(response: &str) -> String {
    let mut out = Vec::new();
    let mut inside = false;
    for line in response.lines() {
        if line.trim_start().starts_with("```") {
            inside = !inside;
            continue;
        }
        if !inside {
            out.push(line);
        }
    }
    out.join("\n").trim().to_string()
}

/// Short diagnosis for the feedback prompt, from the dominant issue.
fn diagnose(issues: &[ScenarioIssue], parse_failed: bool) -> &'static str {
    if parse_failed {
        return "the structure of the scenario block";
    }
    match issues.first().map(|i| i.code) {
        Some(IssueCode::UnknownBus | IssueCode::UnknownLine | IssueCode::UnknownGenerator) => "element numbering",
        Some(IssueCode::Ordering | IssueCode::Horizon) => "the fault timing",
        Some(IssueCode::Impedance) => "the fault impedance",
        Some(IssueCode::LoadScale) => "the load level",
        Some(IssueCode::Islanding) => "the clearing action",
        None => "the scenario definition",
    }
}

impl<'a> ScenarioAgent<'a> {
    pub fn new(backend: &'a dyn LlmBackend, case: &'a GridCase, store: Option<&'a VectorStore>, cfg: AgentConfig) -> Self {
        let description = describe_case(case);
        Self { backend, case, store, cfg, description }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn case(&self) -> &GridCase {
        self.case
    }

    fn bindings(&self) -> Bindings {
        let mut b = Bindings::new();
        b.insert("system_description".into(), self.description.clone());
        b.insert("case_name".into(), self.case.name.clone());
        b
    }

    fn context(&self, query: &str) -> Result<Vec<Retrieved>, LlmError> {
        match self.store {
            Some(store) if !store.is_empty() && self.cfg.top_k > 0 => store.retrieve(self.backend, query, self.cfg.top_k),
            _ => Ok(Vec::new()),
        }
    }

    fn parse_subrequests(response: &str) -> Result<Vec<SubRequest>, String> {
        let list: SubRequestList = parse_single_block(response, SUBREQUEST_SCHEMA).map_err(|e| e.to_string())?;
        for (i, s) in list.subrequests.iter().enumerate() {
            s.validate().map_err(|e| format!("sub-request {i}: {e}"))?;
        }
        Ok(list.subrequests)
    }

    /// Splits a request into sub-requests, allowing one reformat round.
    pub fn decompose(&self, request: &str, tr: &mut AgentTranscript) -> Result<Vec<SubRequest>, AgentError> {
        if request.trim().is_empty() {
            return Err(AgentError::EmptyRequest);
        }
        let mut b = self.bindings();
        b.insert("request".into(), request.trim().to_string());
        b.insert("schema".into(), SUBREQUEST_FIELDS.into());
        let ex = render("conversion", &b, &self.context(request)?)?;
        let response = self.backend.chat(&ex)?;
        let first = Self::parse_subrequests(&response);
        let (outcome, errors) = match &first {
            Ok(_) => (Outcome::Valid, Vec::new()),
            Err(e) => (Outcome::ParseError, vec![e.clone()]),
        };
        tr.record(AttemptRecord { stage: Stage::Decompose, sub_request: None, prompt_digest: ex.digest(), response: response.clone(), outcome, errors });
        let subs = match first {
            Ok(s) => s,
            Err(e) => {
                let follow = ex.continued(
                    &response,
                    format!(
                        "{TASK_PREFIX}reformat\n\nThe reply could not be used: {e}. Reply again with exactly one \
                         ```{SUBREQUEST_SCHEMA}``` block using the documented fields."
                    ),
                );
                let retry = self.backend.chat(&follow)?;
                let second = Self::parse_subrequests(&retry);
                let (outcome, errors) = match &second {
                    Ok(_) => (Outcome::Valid, Vec::new()),
                    Err(e) => (Outcome::ParseError, vec![e.clone()]),
                };
                tr.record(AttemptRecord { stage: Stage::Reformat, sub_request: None, prompt_digest: follow.digest(), response: retry, outcome, errors });
                second.map_err(AgentError::Unparseable)?
            }
        };
        if subs.is_empty() {
            return Err(AgentError::EmptyDecomposition);
        }
        tr.sub_requests = subs.clone();
        Ok(subs)
    }

    /// Checks a scenario against the case.
    pub fn validate(&self, scenario: &Scenario) -> Result<(), Vec<ScenarioIssue>> {
        let issues = scenario.check(self.case);
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    fn judge(&self, response: &str) -> Result<ScenarioDraft, Rejected> {
        match parse_single_block::<Scenario>(response, SCENARIO_SCHEMA) {
            Err(e) => Err(Rejected { response: response.to_string(), errors: vec![e.to_string()], issues: Vec::new() }),
            Ok(scenario) => match self.validate(&scenario) {
                Ok(()) => Ok(ScenarioDraft { scenario, rationale: rationale_of(response) }),
                Err(issues) => Err(Rejected {
                    response: response.to_string(),
                    errors: issues.iter().map(ToString::to_string).collect(),
                    issues,
                }),
            },
        }
    }

    fn log(tr: &mut AgentTranscript, stage: Stage, index: usize, digest: String, verdict: &Result<ScenarioDraft, Rejected>, response: &str) {
        let (outcome, errors) = match verdict {
            Ok(_) => (Outcome::Valid, Vec::new()),
            Err(r) if r.issues.is_empty() => (Outcome::ParseError, r.errors.clone()),
            Err(r) => (Outcome::Invalid, r.errors.clone()),
        };
        tr.record(AttemptRecord { stage, sub_request: Some(index), prompt_digest: digest, response: response.to_string(), outcome, errors });
    }

    /// One drafting call for sub-request `index`.
    pub fn draft(&self, index: usize, sub: &SubRequest, tr: &mut AgentTranscript) -> Result<Result<ScenarioDraft, Rejected>, LlmError> {
        let mut b = self.bindings();
        b.insert("sub_request".into(), sub.to_toml());
        b.insert("schema".into(), SCENARIO_FIELDS.into());
        let ex = render("architecture", &b, &self.context(&sub.to_toml())?)?;
        let response = self.backend.chat(&ex)?;
        let verdict = self.judge(&response);
        Self::log(tr, Stage::Draft, index, ex.digest(), &verdict, &response);
        Ok(verdict)
    }

    /// Feedback loop: up to `max_retries` corrected drafts.
    pub fn repair(&self, index: usize, first: Result<ScenarioDraft, Rejected>, tr: &mut AgentTranscript) -> Result<ScenarioDraft, DraftError> {
        let mut current = match first {
            Ok(d) => return Ok(d),
            Err(r) => r,
        };
        for _ in 0..self.cfg.max_retries {
            let mut b = self.bindings();
            b.insert("error_message".into(), current.errors.join("; "));
            b.insert("diagnosis".into(), diagnose(&current.issues, current.issues.is_empty()).into());
            b.insert("previous_response".into(), current.response.clone());
            let ex = render("feedback", &b, &[])?;
            let response = self.backend.chat(&ex)?;
            let verdict = self.judge(&response);
            Self::log(tr, Stage::Repair, index, ex.digest(), &verdict, &response);
            match verdict {
                Ok(d) => return Ok(d),
                Err(r) => current = r,
            }
        }
        Err(DraftError::Failed(RepairFailure { attempts: self.cfg.max_retries + 1, errors: current.errors }))
    }

    /// Draft followed by repair.
    pub fn obtain(&self, index: usize, sub: &SubRequest, tr: &mut AgentTranscript) -> Result<ScenarioDraft, DraftError> {
        let first = self.draft(index, sub, tr)?;
        self.repair(index, first, tr)
    }

    fn default_locations(&self, kind: FaultKind) -> Vec<usize> {
        match kind {
            FaultKind::ThreePhase | FaultKind::Slg => self.case.buses.iter().map(|b| b.id).collect(),
            FaultKind::LineTrip => (0..self.case.lines.len())
                .filter(|&k| self.case.lines[k].in_service() && self.case.islands(&BTreeSet::from([k])).len() == 1)
                .collect(),
            FaultKind::GenTrip => (0..self.case.generators.len()).collect(),
        }
    }

    fn variant(template: &Scenario, sub: &SubRequest, kind: FaultKind, location: usize, duration: f64) -> Scenario {
        let z_fault = if kind.is_bus_fault() {
            template.z_fault.or(Some(FaultImpedance { r_f: sub.r_f.unwrap_or(0.01), x_f: sub.x_f.unwrap_or(0.001) }))
        } else {
            None
        };
        let bus_fault_template = template.fault_kind.is_bus_fault() && kind.is_bus_fault();
        Scenario {
            fault_kind: kind,
            location,
            t_clear: template.t_fault + duration,
            z_fault,
            clearing_action: if bus_fault_template { template.clearing_action } else { Default::default() },
            clear_line: if bus_fault_template && location == template.location { template.clear_line } else { None },
            ..template.clone()
        }
    }

    /// Scenarios a validated template stands for. Sweeps and dataset goals
    /// are expanded here without further model calls.
    pub fn expand(&self, index: usize, sub: &SubRequest, template: &Scenario) -> Vec<Scenario> {
        let kinds = if sub.fault_kinds.is_empty() { vec![template.fault_kind] } else { sub.fault_kinds.clone() };
        let locations_for = |kind: FaultKind| -> Vec<usize> {
            if !sub.locations.is_empty() {
                sub.locations.clone()
            } else if kind == template.fault_kind && sub.intent == Intent::Sweep {
                vec![template.location]
            } else {
                self.default_locations(kind)
            }
        };
        match sub.intent {
            Intent::FaultScenario => vec![template.clone()],
            Intent::Sweep => {
                let grid = match sub.clearing_grid() {
                    g if g.is_empty() => vec![template.duration()],
                    g => g,
                };
                let mut out = Vec::new();
                for &kind in &kinds {
                    for loc in locations_for(kind) {
                        for &d in &grid {
                            out.push(Self::variant(template, sub, kind, loc, d));
                        }
                    }
                }
                out
            }
            Intent::DatasetGoal => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                let [c_lo, c_hi] = sub.clearing_ms.unwrap_or([template.duration() * 1000.0; 2]);
                let [l_lo, l_hi] = sub.load_range.unwrap_or([template.load_scale; 2]);
                let locs: Vec<Vec<usize>> = kinds.iter().map(|&k| locations_for(k)).collect();
                (0..sub.count)
                    .filter_map(|_| {
                        let ki = rng.random_range(0..kinds.len());
                        let pool = &locs[ki];
                        if pool.is_empty() {
                            return None;
                        }
                        let loc = pool[rng.random_range(0..pool.len())];
                        let ms = (c_lo + (c_hi - c_lo) * rng.random::<f64>()).round();
                        let load = ((l_lo + (l_hi - l_lo) * rng.random::<f64>()) * 100.0).round() / 100.0;
                        let mut s = Self::variant(template, sub, kinds[ki], loc, ms / 1000.0);
                        s.load_scale = load;
                        Some(s)
                    })
                    .collect()
            }
        }
    }

    /// Scenarios a sub-request would have produced, for validity accounting
    /// when its template could not be obtained.
    pub fn planned_count(&self, sub: &SubRequest) -> usize {
        match sub.intent {
            Intent::FaultScenario => 1,
            Intent::DatasetGoal => sub.count,
            Intent::Sweep => {
                let kinds = sub.fault_kinds.len().max(1);
                let locs = sub.locations.len().max(1);
                kinds * locs * sub.clearing_grid().len().max(1)
            }
        }
    }
}
