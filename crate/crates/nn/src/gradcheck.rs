use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::descriptor::LossSpec;
use crate::error::NnError;
use crate::layers::Mode;
use crate::loss::loss;
use crate::model::Model;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Parameter entry with the largest error, as `name[index]`.
    pub worst: String,
    pub checked: usize,
}

/// Relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Compares backpropagated parameter gradients with central differences.
/// Every forward pass reuses the dropout RNG seeded with `seed`, so train
/// mode sees the same masks throughout. At most `per_param` entries of each
/// parameter are probed, spread evenly over the tensor.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check(
    model: &mut Model<f64>,
    x: &Array2<f64>,
    y: &[u32],
    spec: &LossSpec,
    weights: Option<&[f64]>,
    mode: Mode,
    seed: u64,
    per_param: usize,
) -> Result<GradCheck, NnError> {
    let h = 1e-5;
    let eval = |m: &mut Model<f64>| -> Result<f64, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = m.forward(x, mode, &mut rng)?;
        Ok(loss(&m.class_logits(&raw), y, spec, weights)?.0)
    };
    model.zero_grad();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model.loss_and_backward(x, y, spec, weights, mode, &mut rng)?;
    let analytic: Vec<(String, Array2<f64>)> = model.params().iter().map(|p| (p.name.clone(), p.grad.clone())).collect();

    let mut report = GradCheck { max_rel_error: 0.0, worst: String::new(), checked: 0 };
    for (k, (name, grad)) in analytic.iter().enumerate() {
        let len = grad.len();
        let stride = len.div_ceil(per_param.max(1)).max(1);
        for flat in (0..len).step_by(stride) {
            let idx = (flat / grad.ncols(), flat % grad.ncols());
            let orig = model.params()[k].value[idx];
            model.params_mut()[k].value[idx] = orig + h;
            let up = eval(model)?;
            model.params_mut()[k].value[idx] = orig - h;
            let down = eval(model)?;
            model.params_mut()[k].value[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = relative_error(grad[idx], numeric, 1e-6);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_empty() {
                report.max_rel_error = err.max(report.max_rel_error);
                report.worst = format!("{name}[{}, {}]", idx.0, idx.1);
            }
        }
    }
    Ok(report)
}
