use ndarray::{Array2, Axis};

use crate::descriptor::LossSpec;
use crate::error::NnError;
use crate::real::Real;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Real>(z: &Array2<T>) -> Array2<T> {
    let mut p = z.clone();
    for mut row in p.rows_mut() {
        let m = row.fold(T::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}

/// Row-wise log-softmax.
pub fn log_softmax_rows<T: Real>(z: &Array2<T>) -> Array2<T> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(T::neg_infinity(), |a, &b| a.max(b));
        let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Inverse-frequency class weights `n / (k * n_c)`; absent classes get 0.
/// Equal class counts give all-ones weights.
pub fn class_weights(labels: &[u32], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &y in labels {
        if let Some(c) = counts.get_mut(y as usize) {
            *c += 1;
        }
    }
    let n = labels.len() as f64;
    counts.iter().map(|&c| if c == 0 { 0.0 } else { n / (n_classes as f64 * c as f64) }).collect()
}

/// Mean loss over the batch and its gradient with respect to the logits.
/// `weights` is only read by `weighted_ce`; without it the weights are uniform.
pub fn loss<T: Real>(
    logits: &Array2<T>,
    labels: &[u32],
    spec: &LossSpec,
    weights: Option<&[f64]>,
) -> Result<(T, Array2<T>), NnError> {
    let (n, k) = logits.dim();
    if labels.len() != n {
        return Err(NnError::Shape { what: "labels", expected: n, found: labels.len() });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y as usize >= k) {
        return Err(NnError::Label { label: bad, n_classes: k });
    }
    if let (LossSpec::WeightedCe, Some(w)) = (spec, weights) {
        if w.len() != k {
            return Err(NnError::Shape { what: "class weights", expected: k, found: w.len() });
        }
    }
    let logp = log_softmax_rows(logits);
    let p = logp.mapv(|v| v.exp());
    let inv_n = T::of(1.0 / n as f64);
    let mut total = T::zero();
    let mut grad = p.clone();
    for (i, (&y, mut g)) in labels.iter().zip(grad.axis_iter_mut(Axis(0))).enumerate() {
        let t = y as usize;
        let lp = logp[[i, t]];
        let pt = p[[i, t]];
        g[t] -= T::one();
        // g now holds (s_j - delta_jt); scale it by dL_i/dz = c_i * (s - e_t)
        let (li, c) = match *spec {
            LossSpec::Ce => (-lp, T::one()),
            LossSpec::WeightedCe => {
                let w = T::of(weights.map_or(1.0, |w| w[t]));
                (-lp * w, w)
            }
            LossSpec::Focal { alpha, gamma } => {
                let a = T::of(alpha);
                let gm = T::of(gamma);
                let q = T::one() - pt;
                let mod_ = q.powf(gm);
                let li = -a * mod_ * lp;
                let dpow = if gamma == 0.0 || q <= T::zero() { T::zero() } else { gm * q.powf(gm - T::one()) * pt * lp };
                // dL/dz_j = a * [gamma q^(gamma-1) p ln p - q^gamma] * (delta_jt - s_j)
                (li, a * (mod_ - dpow))
            }
        };
        total += li;
        g.mapv_inplace(|v| v * c * inv_n);
    }
    Ok((total * inv_n, grad))
}
