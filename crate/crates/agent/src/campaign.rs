use rayon::prelude::*;
use tsa_core::dataset::{assemble, extract_features, Dataset, DatasetError, DatasetMetadata, FeatureScheme, LabeledSample};
use tsa_core::grid::GridCase;
use tsa_core::labeling::{classify, StabilityClass, StabilityThresholds};
use tsa_core::sim::{simulate, Scenario, SimulationConfig, SCENARIO_SCHEMA_VERSION};
use tsa_llm::{LlmBackend, VectorStore};

use crate::agent::{AgentConfig, AgentError, DraftError, ScenarioAgent};
use crate::transcript::AgentTranscript;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// 0 = stable, 1 = unstable.
    #[default]
    Binary,
    /// Stable plus one class per violated criterion.
    Multiclass,
}

impl LabelMode {
    pub fn n_classes(self) -> usize {
        match self {
            LabelMode::Binary => 2,
            LabelMode::Multiclass => StabilityClass::NAMES.len(),
        }
    }

    pub fn class_names(self) -> Vec<String> {
        match self {
            LabelMode::Binary => vec!["stable".into(), "unstable".into()],
            LabelMode::Multiclass => StabilityClass::NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub thresholds: StabilityThresholds,
    pub scheme: FeatureScheme,
    pub sim: SimulationConfig,
    pub labels: LabelMode,
    /// Minority share target; a sub-request's own target takes precedence.
    pub balance: Option<f64>,
    pub seed: u64,
    pub max_retries: usize,
    pub top_k: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            thresholds: StabilityThresholds::default(),
            scheme: FeatureScheme::Statistical,
            sim: SimulationConfig::default(),
            labels: LabelMode::Binary,
            balance: Some(0.5),
            seed: 0,
            max_retries: 3,
            top_k: 3,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("no scenario was both valid and integrable (validity rate {:.3})", transcript.validity_rate)]
    NoValidScenarios { transcript: Box<AgentTranscript> },
    #[error("outcomes cover only classes {counts:?}; the balance target needs stable and unstable samples")]
    SingleClass { counts: Vec<usize>, transcript: Box<AgentTranscript> },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl CampaignError {
    pub fn transcript(&self) -> Option<&AgentTranscript> {
        match self {
            CampaignError::NoValidScenarios { transcript } | CampaignError::SingleClass { transcript, .. } => Some(transcript),
            _ => None,
        }
    }
}

/// Decompose, draft and repair, simulate, label and assemble a dataset.
pub fn run_campaign(
    backend: &dyn LlmBackend,
    case: &GridCase,
    store: Option<&VectorStore>,
    request: &str,
    cfg: &CampaignConfig,
) -> Result<(Dataset, AgentTranscript), CampaignError> {
    let agent = ScenarioAgent::new(
        backend,
        case,
        store,
        AgentConfig { max_retries: cfg.max_retries, top_k: cfg.top_k, seed: cfg.seed },
    );
    let mut tr = AgentTranscript::new(request);
    let subs = agent.decompose(request, &mut tr)?;

    let mut total = 0;
    let mut valid: Vec<Scenario> = Vec::new();
    for (i, sub) in subs.iter().enumerate() {
        match agent.obtain(i, sub, &mut tr) {
            Ok(draft) => {
                let expanded = agent.expand(i, sub, &draft.scenario);
                total += expanded.len();
                valid.extend(expanded.into_iter().filter(|s| agent.validate(s).is_ok()));
            }
            Err(DraftError::Failed(f)) => {
                log::warn!("sub-request {i} abandoned: {f}");
                total += agent.planned_count(sub);
            }
            Err(DraftError::Llm(e)) => return Err(AgentError::Llm(e).into()),
        }
    }

    let outcomes: Vec<Option<LabeledSample>> = valid
        .par_iter()
        .map(|s| match simulate(case, s, &cfg.sim) {
            Ok(traj) => {
                let label = classify(&traj, &cfg.thresholds);
                let y = match cfg.labels {
                    LabelMode::Binary => u32::from(label.is_unstable()),
                    LabelMode::Multiclass => label.multiclass.index() as u32,
                };
                Some(LabeledSample { features: extract_features(&traj, cfg.scheme), label: y })
            }
            Err(e) => {
                log::warn!("scenario {} at {} did not integrate: {e}", s.fault_kind, s.location);
                None
            }
        })
        .collect();
    let mut samples = Vec::new();
    for (s, o) in valid.iter().zip(outcomes) {
        if let Some(sample) = o {
            tr.scenarios.push(s.clone());
            samples.push(sample);
        }
    }
    tr.set_outcome(total, samples.len());
    if samples.is_empty() {
        return Err(CampaignError::NoValidScenarios { transcript: Box::new(tr) });
    }

    let n_classes = cfg.labels.n_classes();
    let raw = tsa_core::dataset::class_counts(&samples.iter().map(|s| s.label).collect::<Vec<_>>(), n_classes);
    let balance = subs.iter().find_map(|s| s.balance_target).or(cfg.balance);
    if balance.is_some() && (raw[0] == 0 || raw[0] == samples.len()) {
        tr.class_counts = raw.clone();
        return Err(CampaignError::SingleClass { counts: raw, transcript: Box::new(tr) });
    }
    let metadata = DatasetMetadata {
        case_name: case.name.clone(),
        scheme: Some(cfg.scheme),
        thresholds: Some(cfg.thresholds),
        scenario_schema_version: SCENARIO_SCHEMA_VERSION,
        class_names: cfg.labels.class_names(),
        ..Default::default()
    };
    let mut ds = assemble(&samples, n_classes, balance, &[], cfg.seed, metadata)?;
    tr.class_counts = ds.counts();
    let extra = &mut ds.metadata.extra;
    extra.insert("transcript_digest".into(), tr.digest().into());
    extra.insert("validity_rate".into(), tr.validity_rate.into());
    extra.insert("request".into(), request.into());
    Ok((ds, tr))
}
