use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tsa_core::dataset::{split, Dataset, DatasetError};
use tsa_llm::{render, Bindings, LlmBackend};
use tsa_nn::{evaluate, train, ArchitectureDescriptor, Metrics, Model, NnError, TrainReport};

use crate::evaluate::{evaluate_candidate, Budget, Evaluator, TrainingEvaluator};
use crate::feedback::{feedback_report, Feedback};
use crate::history::{summarize, Archive, History, Record};
use crate::requirements::{Requirements, RequirementsError};
use crate::roles::{generator_step, operator_validate, strategist_step, LlmCall, RoleError, Strategy};
use crate::space::{canonical_digest, SearchSpace, SpaceError};

/// Train, validation and test fractions used by [`search_dataset`].
pub const SPLIT_FRACTIONS: [f64; 3] = [0.7, 0.15, 0.15];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub candidates_per_iteration: usize,
    pub budget: Budget,
    /// Run seed; candidate seeds and the data split derive from it.
    pub seed: u64,
    /// Retrain the winner without the epoch cap once the search ends.
    pub retrain_winner: bool,
    /// Evaluate the candidates of one iteration concurrently.
    pub parallel: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { candidates_per_iteration: 4, budget: Budget::default(), seed: 0, retrain_winner: true, parallel: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetMet,
    IterationsExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Duplicate,
    OutOfSpace { reasons: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateLog {
    pub digest: String,
    pub summary: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

/// Everything one iteration produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub strategy: Strategy,
    pub warnings: Vec<String>,
    pub generator_error: Option<String>,
    pub candidates: Vec<CandidateLog>,
    /// Digests evaluated this iteration, in evaluation-join order.
    pub evaluated: Vec<String>,
    /// Best feasible accuracy after this iteration (0 while none exists).
    pub p_star: f64,
    pub best_digest: Option<String>,
    pub feedback: Feedback,
    /// Rendered Operator summary of the validation outcome.
    pub operator_report: String,
}

#[derive(Debug)]
pub struct SearchResult {
    pub best: ArchitectureDescriptor,
    pub best_record: Record,
    pub p_star: f64,
    pub stop_reason: StopReason,
    pub history: History,
    pub archive: Archive,
    pub iterations: Vec<IterationLog>,
    pub calls: Vec<LlmCall>,
    /// Weights of the winner: retrained in full, or cached from the search.
    pub model: Option<Model<f32>>,
    /// Report of the winner's full training run.
    pub final_report: Option<TrainReport>,
    pub test_metrics: Option<Metrics>,
}

impl SearchResult {
    /// Best accuracy after each iteration.
    pub fn p_star_trace(&self) -> Vec<f64> {
        self.iterations.iter().map(|i| i.p_star).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error(transparent)]
    Requirements(#[from] RequirementsError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("task {task:?} does not match a dataset with {n_classes} classes")]
    Task { task: crate::requirements::Task, n_classes: usize },
    #[error("iteration {iteration}: {source}")]
    Role { iteration: usize, source: RoleError },
    #[error("no feasible architecture after {0} iterations")]
    NoFeasible(usize),
    #[error("dataset cannot be split: {0}")]
    Split(#[from] DatasetError),
    #[error("final training failed: {0}")]
    Final(#[from] NnError),
}

/// Lexicographic preference among feasible records: higher accuracy, then
/// fewer parameters, then the smaller digest.
fn better(a: &Record, b: &Record) -> bool {
    match a.accuracy.total_cmp(&b.accuracy) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => (a.params, &a.digest) < (b.params, &b.digest),
    }
}

/// Best feasible record of `records` under the search's preference order.
pub fn select_best<'r>(records: impl IntoIterator<Item = &'r Record>, req: &Requirements) -> Option<&'r Record> {
    records.into_iter().filter(|r| r.feasible(req)).fold(None, |best, r| match best {
        Some(b) if !better(r, b) => Some(b),
        _ => Some(r),
    })
}

fn operator_report(iteration: usize, logs: &[CandidateLog]) -> String {
    let candidates = if logs.is_empty() {
        "(none)".to_string()
    } else {
        logs.iter().map(|c| format!("- {} {}", &c.digest[..12], c.summary)).collect::<Vec<_>>().join("\n")
    };
    let outcome = logs
        .iter()
        .map(|c| match &c.verdict {
            Verdict::Accepted => format!("- {}: accepted", &c.digest[..12]),
            Verdict::Duplicate => format!("- {}: already archived", &c.digest[..12]),
            Verdict::OutOfSpace { reasons } => format!("- {}: outside the space ({})", &c.digest[..12], reasons.join("; ")),
        })
        .collect::<Vec<_>>()
        .join("\n");
    let mut b = Bindings::new();
    b.insert("iteration".into(), iteration.to_string());
    b.insert("candidates".into(), candidates);
    b.insert("outcome".into(), if outcome.is_empty() { "(nothing to validate)".into() } else { outcome });
    render("operator", &b, &[]).expect("operator template binds its slots").last_user().to_string()
}

/// The Strategist / Generator / Operator loop. Stops once the best feasible
/// accuracy reaches the target or after `t_max` iterations.
pub fn search(
    backend: &dyn LlmBackend,
    space: &SearchSpace,
    req: &Requirements,
    evaluator: &dyn Evaluator,
    config: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    req.validate()?;
    space.validate()?;
    if !req.task.accepts(evaluator.n_classes()) {
        return Err(SearchError::Task { task: req.task, n_classes: evaluator.n_classes() });
    }
    let class_names = evaluator.class_names();
    let mut history = History::new();
    let mut archive = Archive::new();
    let mut iterations = Vec::new();
    let mut calls = Vec::new();
    let mut best: Option<(Record, Option<Model<f32>>)> = None;
    let mut feedback = "No feedback yet: this is the first round.".to_string();
    let mut stop_reason = StopReason::IterationsExhausted;

    for t in 1..=req.t_max {
        let outcome = strategist_step(backend, &history, req, space, &feedback, t, &mut calls)
            .map_err(|source| SearchError::Role { iteration: t, source })?;
        let (proposed, generator_error) =
            match generator_step(backend, &outcome, config.candidates_per_iteration.max(1), t, &mut calls) {
                Ok(c) => (c, None),
                Err(RoleError::NoCandidates(errors)) => {
                    log::warn!("iteration {t}: the generator produced no candidate: {}", errors.join("; "));
                    (Vec::new(), Some(errors.join("; ")))
                }
                Err(source) => return Err(SearchError::Role { iteration: t, source }),
            };

        let mut logs = Vec::new();
        let mut accepted = Vec::new();
        for desc in proposed {
            let digest = canonical_digest(&desc);
            let verdict = if operator_validate(&desc, space, &archive) {
                archive.insert(&digest);
                accepted.push((digest.clone(), desc.clone()));
                Verdict::Accepted
            } else if let Err(reasons) = space.point_of(&desc) {
                Verdict::OutOfSpace { reasons }
            } else {
                Verdict::Duplicate
            };
            logs.push(CandidateLog { digest, summary: summarize(&desc), verdict });
        }
        accepted.sort_by(|a, b| a.0.cmp(&b.0));
        let direction = outcome.strategy.direction.as_str();
        let run = |(_, d): &(String, ArchitectureDescriptor)| evaluate_candidate(d, evaluator, req, config.seed, t, direction);
        let results: Vec<(Record, Option<Model<f32>>)> =
            if config.parallel { accepted.par_iter().map(run).collect() } else { accepted.iter().map(run).collect() };

        let evaluated: Vec<String> = results.iter().map(|(r, _)| r.digest.clone()).collect();
        for (record, model) in results.iter().cloned() {
            let improves = record.feasible(req) && best.as_ref().is_none_or(|(b, _)| better(&record, b));
            history.push(record.clone());
            if improves {
                best = Some((record, model));
            }
        }
        let round: Vec<&Record> = results.iter().map(|(r, _)| r).collect();
        let focus = select_best(round.iter().copied(), req)
            .or_else(|| round.iter().copied().max_by(|a, b| a.accuracy.total_cmp(&b.accuracy)));
        let fb = match focus {
            Some(r) => feedback_report(r, req, &class_names),
            None => {
                let mut reasons: Vec<String> = logs
                    .iter()
                    .map(|c| match &c.verdict {
                        Verdict::Duplicate => format!("{} is already archived", &c.digest[..12]),
                        Verdict::OutOfSpace { reasons } => format!("{} is outside the space: {}", &c.digest[..12], reasons.join("; ")),
                        Verdict::Accepted => String::new(),
                    })
                    .collect();
                if let Some(e) = &generator_error {
                    reasons.push(format!("the generator reply held no usable candidate: {e}"));
                }
                Feedback::empty_round(&reasons)
            }
        };
        feedback = fb.render();
        let p_star = best.as_ref().map_or(0.0, |(b, _)| b.accuracy);
        log::info!("iteration {t}: {} proposed, {} evaluated, p* = {p_star:.4}", logs.len(), evaluated.len());
        iterations.push(IterationLog {
            iteration: t,
            strategy: outcome.strategy,
            warnings: outcome.warnings,
            generator_error,
            operator_report: operator_report(t, &logs),
            candidates: logs,
            evaluated,
            p_star,
            best_digest: best.as_ref().map(|(b, _)| b.digest.clone()),
            feedback: fb,
        });
        if best.is_some() && p_star >= req.p_target {
            stop_reason = StopReason::TargetMet;
            break;
        }
    }

    let (best_record, model) = best.ok_or(SearchError::NoFeasible(iterations.len()))?;
    Ok(SearchResult {
        best: best_record.descriptor.clone(),
        p_star: best_record.accuracy,
        best_record,
        stop_reason,
        history,
        archive,
        iterations,
        calls,
        model,
        final_report: None,
        test_metrics: None,
    })
}

/// Splits `dataset`, searches with budgeted training and, when configured,
/// retrains the winner in full before scoring it on the test split.
pub fn search_dataset(
    backend: &dyn LlmBackend,
    dataset: &Dataset,
    space: &SearchSpace,
    req: &Requirements,
    config: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    let parts = split(dataset, SPLIT_FRACTIONS, config.seed)?;
    let evaluator = TrainingEvaluator { train: &parts.train, val: &parts.val, budget: config.budget };
    let mut result = search(backend, space, req, &evaluator, config)?;
    if config.retrain_winner {
        let mut model = Model::<f32>::instantiate(&result.best, parts.train.dim(), parts.train.n_classes)?;
        let report = train(&mut model, &parts.train, &parts.val)?;
        result.final_report = Some(report);
        result.model = Some(model);
    }
    if let Some(model) = &result.model {
        result.test_metrics = Some(evaluate(model, &parts.test)?);
    }
    Ok(result)
}
