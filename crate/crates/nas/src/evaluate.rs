use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tsa_core::dataset::Dataset;
use tsa_nn::{evaluate, train_with, ArchitectureDescriptor, Metrics, Model, TrainOptions};

use crate::history::{Record, Status};
use crate::requirements::Requirements;
use crate::space::{canonical, canonical_digest};

/// Per-candidate training budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    pub epoch_cap: usize,
    pub latency_samples: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self { epoch_cap: 30, latency_samples: 100 }
    }
}

/// Outcome of training one candidate.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub accuracy: f64,
    pub train_accuracy: Option<f64>,
    pub latency_ms: f64,
    pub metrics: Option<Metrics>,
    pub epochs_run: usize,
    pub aborted: Option<String>,
    pub model: Option<Model<f32>>,
}

/// Scores candidate descriptors. Implementations must be deterministic in
/// the descriptor (including its seed) for searches to be reproducible.
pub trait Evaluator: Sync {
    fn input_dim(&self) -> usize;
    fn n_classes(&self) -> usize;
    fn class_names(&self) -> Vec<String> {
        Vec::new()
    }
    fn evaluate(&self, desc: &ArchitectureDescriptor) -> Evaluation;
}

/// Budgeted from-scratch training on a train/validation pair.
pub struct TrainingEvaluator<'a> {
    pub train: &'a Dataset,
    pub val: &'a Dataset,
    pub budget: Budget,
}

impl Evaluator for TrainingEvaluator<'_> {
    fn input_dim(&self) -> usize {
        self.train.dim()
    }

    fn n_classes(&self) -> usize {
        self.train.n_classes
    }

    fn class_names(&self) -> Vec<String> {
        self.train.metadata.class_names.clone()
    }

    fn evaluate(&self, desc: &ArchitectureDescriptor) -> Evaluation {
        let failed = |why: String| Evaluation {
            accuracy: 0.0,
            train_accuracy: None,
            latency_ms: 0.0,
            metrics: None,
            epochs_run: 0,
            aborted: Some(why),
            model: None,
        };
        let mut model = match Model::<f32>::instantiate(desc, self.input_dim(), self.n_classes()) {
            Ok(m) => m,
            Err(e) => return failed(e.to_string()),
        };
        let opts = TrainOptions { epoch_cap: Some(self.budget.epoch_cap), latency_samples: self.budget.latency_samples };
        let report = match train_with(&mut model, self.train, self.val, &opts) {
            Ok(r) => r,
            Err(e) => return failed(e.to_string()),
        };
        if let Some(why) = report.aborted {
            return Evaluation { epochs_run: report.epochs_run, ..failed(why) };
        }
        let train_accuracy = evaluate(&model, self.train).ok().map(|m| m.accuracy);
        Evaluation {
            accuracy: report.best_val_accuracy,
            train_accuracy,
            latency_ms: report.latency_ms,
            metrics: Some(report.metrics),
            epochs_run: report.epochs_run,
            aborted: None,
            model: Some(model),
        }
    }
}

/// Training seed of a candidate: the first eight bytes of
/// SHA-256(run seed, little-endian || descriptor digest).
pub fn candidate_seed(run_seed: u64, digest: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update(digest.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("eight bytes"))
}

/// Seeds, gates and trains one validated candidate. Designs whose analytic
/// parameter count exceeds the limit are refused without training.
pub fn evaluate_candidate(
    desc: &ArchitectureDescriptor,
    evaluator: &dyn Evaluator,
    req: &Requirements,
    run_seed: u64,
    iteration: usize,
    strategy: &str,
) -> (Record, Option<Model<f32>>) {
    let digest = canonical_digest(desc);
    let mut d = canonical(desc);
    d.seed = candidate_seed(run_seed, &digest);
    let base = Record {
        iteration,
        digest,
        descriptor: d.clone(),
        accuracy: 0.0,
        params: 0,
        latency_ms: 0.0,
        status: Status::Rejected,
        note: None,
        train_accuracy: None,
        metrics: None,
        epochs_run: 0,
        strategy: strategy.to_string(),
    };
    let params = match d.param_count(evaluator.input_dim(), evaluator.n_classes()) {
        Ok(p) => p,
        Err(e) => return (Record { note: Some(e.to_string()), ..base }, None),
    };
    if params > req.lambda_params {
        let note = format!("{params} parameters exceed the limit of {}", req.lambda_params);
        return (Record { params, note: Some(note), ..base }, None);
    }
    let ev = evaluator.evaluate(&d);
    let status = if ev.aborted.is_some() { Status::Aborted } else { Status::Evaluated };
    let record = Record {
        accuracy: if ev.aborted.is_some() { 0.0 } else { ev.accuracy },
        params,
        latency_ms: ev.latency_ms,
        status,
        note: ev.aborted,
        train_accuracy: ev.train_accuracy,
        metrics: ev.metrics,
        epochs_run: ev.epochs_run,
        ..base
    };
    (record, ev.model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidate_seed_depends_on_both_inputs() {
        let d = "ab".repeat(32);
        assert_eq!(candidate_seed(7, &d), candidate_seed(7, &d));
        assert_ne!(candidate_seed(7, &d), candidate_seed(8, &d));
        assert_ne!(candidate_seed(7, &d), candidate_seed(7, &"cd".repeat(32)));
    }

    #[test]
    fn candidate_seed_matches_direct_hash() {
        let mut bytes = 42u64.to_le_bytes().to_vec();
        bytes.extend_from_slice(b"digest");
        let full = Sha256::digest(&bytes);
        let mut expect = 0u64;
        for (i, b) in full[..8].iter().enumerate() {
            expect |= u64::from(*b) << (8 * i);
        }
        assert_eq!(candidate_seed(42, "digest"), expect);
    }
}
