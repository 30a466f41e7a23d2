use std::f64::consts::PI;

use ndarray::Array2;

use crate::descriptor::ScheduleSpec;
use crate::error::NnError;
use crate::layers::Param;
use crate::real::Real;

/// Adam with decoupled weight decay and bias-corrected moments.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Array2<T>>,
    v: Vec<Array2<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(weight_decay: f64) -> Self {
        Self { weight_decay, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update with learning rate `lr`. Nothing is modified when
    /// any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Param<T>], lr: f64) -> Result<(), NnError> {
        if let Some(p) = params.iter().find(|p| p.grad.iter().any(|g| !g.is_finite())) {
            return Err(NnError::NonFiniteGradient { layer: p.name.clone() });
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Array2::zeros(p.value.raw_dim())).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter list changed between steps");
        self.t += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(self.t as i32));
        let c2 = T::of(1.0 - self.beta2.powi(self.t as i32));
        let eps = T::of(self.eps);
        let lr_t = T::of(lr);
        let decay = T::of(1.0 - lr * self.weight_decay);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(&mut p.value).and(&p.grad).and(m).and(v).for_each(|w, &g, m, v| {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *w = *w * decay - lr_t * mhat / (vhat.sqrt() + eps);
            });
        }
        Ok(())
    }
}

/// Step index (fractional) at which the one-cycle schedule peaks.
pub fn onecycle_peak(total_steps: usize, schedule: &ScheduleSpec) -> f64 {
    schedule.warmup_frac * total_steps as f64 - 1.0
}

fn cos_anneal(start: f64, end: f64, pct: f64) -> f64 {
    end + (start - end) / 2.0 * (1.0 + (PI * pct).cos())
}

/// One-cycle learning rate: cosine warm-up from `max_lr / div_factor` to
/// `max_lr`, then cosine annealing to `max_lr / (div_factor * final_div)`
/// at the last step.
pub fn onecycle_lr(step: usize, total_steps: usize, schedule: &ScheduleSpec) -> f64 {
    let initial = schedule.max_lr / schedule.div_factor;
    let min = initial / schedule.final_div;
    let peak = onecycle_peak(total_steps, schedule);
    let end = total_steps as f64 - 1.0;
    let s = step as f64;
    if s <= peak {
        if peak <= 0.0 {
            return schedule.max_lr;
        }
        cos_anneal(initial, schedule.max_lr, s / peak)
    } else {
        let span = end - peak;
        if span <= 0.0 {
            return min;
        }
        cos_anneal(schedule.max_lr, min, ((s - peak) / span).min(1.0))
    }
}
