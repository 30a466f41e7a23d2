use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tsa_core::dataset::Dataset;

use crate::descriptor::LossSpec;
use crate::error::NnError;
use crate::layers::Mode;
use crate::loss::class_weights;
use crate::metrics::Metrics;
use crate::model::Model;
use crate::optim::{onecycle_lr, AdamW};
use crate::real::Real;

const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub best_val_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub history: Vec<EpochRecord>,
    pub param_count: usize,
    pub latency_ms: f64,
    /// Validation metrics of the restored best weights.
    pub metrics: Metrics,
    /// Set when training stopped on a non-finite loss or gradient.
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    /// Upper bound on epochs regardless of the descriptor.
    pub epoch_cap: Option<usize>,
    /// Single-sample forwards averaged into `latency_ms`.
    pub latency_samples: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { epoch_cap: None, latency_samples: 100 }
    }
}

pub fn to_matrix<T: Real>(ds: &Dataset) -> Array2<T> {
    Array2::from_shape_fn((ds.len(), ds.dim()), |(i, j)| T::of(f64::from(ds.x[i * ds.dim() + j])))
}

fn rows<T: Real>(x: &Array2<T>, idx: &[usize]) -> Array2<T> {
    x.select(Axis(0), idx)
}

/// Column means and standard deviations of the training inputs; constant
/// columns keep unit scale.
pub fn fit_standardization<T: Real>(x: &Array2<T>) -> (Array1<T>, Array1<T>) {
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let var = x.var_axis(Axis(0), T::zero());
    let tiny = T::of(1e-12);
    let scale = var.mapv(|v| if v.sqrt() > tiny { v.sqrt() } else { T::one() });
    (mean, scale)
}

/// Class probabilities for every row, computed in parallel fixed-size chunks.
pub fn predict_proba_all<T: Real>(model: &Model<T>, x: &Array2<T>) -> Result<Array2<T>, NnError> {
    let starts: Vec<usize> = (0..x.nrows()).step_by(EVAL_CHUNK).collect();
    let parts: Vec<Array2<T>> = starts
        .par_iter()
        .map(|&s| {
            let e = (s + EVAL_CHUNK).min(x.nrows());
            model.predict_proba(&x.slice(ndarray::s![s..e, ..]).to_owned())
        })
        .collect::<Result<_, _>>()?;
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    Ok(ndarray::concatenate(Axis(0), &views).expect("same width"))
}

fn argmax<T: Real>(p: &Array2<T>) -> Vec<u32> {
    p.rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for j in 1..r.len() {
                if r[j] > r[best] {
                    best = j;
                }
            }
            best as u32
        })
        .collect()
}

/// Metrics of `model` on a split.
pub fn evaluate<T: Real>(model: &Model<T>, split: &Dataset) -> Result<Metrics, NnError> {
    if split.is_empty() {
        return Err(NnError::EmptySplit("evaluation"));
    }
    let p = predict_proba_all(model, &to_matrix::<T>(split))?;
    let pred = argmax(&p);
    let scores: Vec<f64> = if model.n_classes() == 2 { p.column(1).iter().map(|v| v.as_f64()).collect() } else { Vec::new() };
    Ok(Metrics::from_predictions(&split.y, &pred, model.n_classes(), (model.n_classes() == 2).then_some(&scores[..])))
}

fn accuracy<T: Real>(model: &Model<T>, x: &Array2<T>, y: &[u32]) -> Result<f64, NnError> {
    let pred = argmax(&predict_proba_all(model, x)?);
    Ok(pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64)
}

/// Mean wall time in milliseconds of single-sample eval-mode forwards.
pub fn measure_latency<T: Real>(model: &Model<T>, x: &Array2<T>, samples: usize) -> Result<f64, NnError> {
    let samples = samples.max(1);
    let start = Instant::now();
    for i in 0..samples {
        let r = i % x.nrows();
        std::hint::black_box(model.predict_logits(&x.slice(ndarray::s![r..r + 1, ..]).to_owned())?);
    }
    let ms = start.elapsed().as_secs_f64() * 1e3 / samples as f64;
    Ok(ms.max(1e-6))
}

/// Mini-batch training with seeded shuffling, early stopping on validation
/// accuracy and restoration of the best weights.
pub fn train<T: Real>(model: &mut Model<T>, train: &Dataset, val: &Dataset) -> Result<TrainReport, NnError> {
    train_with(model, train, val, &TrainOptions::default())
}

pub fn train_with<T: Real>(
    model: &mut Model<T>,
    train: &Dataset,
    val: &Dataset,
    opts: &TrainOptions,
) -> Result<TrainReport, NnError> {
    if train.is_empty() {
        return Err(NnError::EmptySplit("training"));
    }
    if val.is_empty() {
        return Err(NnError::EmptySplit("validation"));
    }
    for ds in [train, val] {
        if ds.dim() != model.input_dim() {
            return Err(NnError::Shape { what: "dataset width", expected: model.input_dim(), found: ds.dim() });
        }
        if let Some(&bad) = ds.y.iter().find(|&&y| y as usize >= model.n_classes()) {
            return Err(NnError::Label { label: bad, n_classes: model.n_classes() });
        }
    }
    let desc = model.descriptor().clone();
    let xt = to_matrix::<T>(train);
    let xv = to_matrix::<T>(val);
    let (shift, scale) = fit_standardization(&xt);
    model.shift = shift;
    model.scale = scale;

    let weights = class_weights(&train.y, model.n_classes());
    let weights = matches!(desc.loss, LossSpec::WeightedCe).then_some(&weights[..]);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(desc.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(desc.seed);
    dropout_rng.set_stream(2);

    let n = train.len();
    let bs = desc.batch_size.min(n);
    let epochs = opts.epoch_cap.map_or(desc.epochs, |c| c.min(desc.epochs)).max(1);
    let steps_per_epoch = n.div_ceil(bs);
    let total_steps = epochs * steps_per_epoch;
    let mut opt = AdamW::<T>::new(desc.optim.weight_decay);

    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::new();
    let mut best = (f64::NEG_INFINITY, 0usize, model.clone());
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut aborted = None;
    let mut step = 0;
    'epochs: for epoch in 0..epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut seen = 0;
        let mut lr = desc.optim.lr;
        for batch in order.chunks(bs) {
            lr = desc.schedule.as_ref().map_or(desc.optim.lr, |s| onecycle_lr(step, total_steps, s));
            step += 1;
            if batch.len() < 2 && n > 1 {
                continue;
            }
            let x = rows(&xt, batch);
            let y: Vec<u32> = batch.iter().map(|&i| train.y[i]).collect();
            model.zero_grad();
            let l = model.loss_and_backward(&x, &y, &desc.loss, weights, Mode::Train, &mut dropout_rng)?;
            if !l.is_finite() {
                aborted = Some(format!("non-finite loss at epoch {epoch}"));
                break 'epochs;
            }
            if let Err(NnError::NonFiniteGradient { layer }) = opt.step(&mut model.params_mut(), lr) {
                aborted = Some(format!("non-finite gradient in {layer} at epoch {epoch}"));
                break 'epochs;
            }
            loss_sum += l.as_f64() * batch.len() as f64;
            seen += batch.len();
        }
        let val_accuracy = accuracy(model, &xv, &val.y)?;
        history.push(EpochRecord { epoch, train_loss: loss_sum / seen.max(1) as f64, val_accuracy, lr });
        if val_accuracy > best.0 {
            best = (val_accuracy, epoch, model.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > desc.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (best_val_accuracy, best_epoch, best_model) = best;
    if best_val_accuracy.is_finite() {
        *model = best_model;
    }
    let metrics = evaluate(model, val)?;
    let latency_ms = measure_latency(model, &xv, opts.latency_samples)?;
    Ok(TrainReport {
        best_val_accuracy: if best_val_accuracy.is_finite() { best_val_accuracy } else { metrics.accuracy },
        best_epoch,
        epochs_run: history.len(),
        stopped_early,
        history,
        param_count: model.param_count(),
        latency_ms,
        metrics,
        aborted,
    })
}
