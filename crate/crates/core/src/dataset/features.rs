use serde::{Deserialize, Serialize};

use crate::sim::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureScheme {
    FlatTimeseries,
    #[default]
    Statistical,
}

impl FeatureScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureScheme::FlatTimeseries => "flat_timeseries",
            FeatureScheme::Statistical => "statistical",
        }
    }
}

/// Per-channel statistics of the statistical scheme, in output order.
pub const STATISTICS: [&str; 6] = ["mean", "std", "min", "max", "final", "max_abs_diff"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub scheme: FeatureScheme,
    pub names: Vec<String>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Channel names in extraction order: COI-relative angles, speeds, bus voltages, system frequency.
pub fn channel_names(n_gen: usize, n_bus: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(2 * n_gen + n_bus + 1);
    names.extend((0..n_gen).map(|g| format!("delta_coi.g{g}")));
    names.extend((0..n_gen).map(|g| format!("omega.g{g}")));
    names.extend((0..n_bus).map(|b| format!("v.b{b}")));
    names.push("f_coi".to_string());
    names
}

/// Feature names for a system of the given size.
pub fn feature_names(n_gen: usize, n_bus: usize, n_points: usize, scheme: FeatureScheme) -> Vec<String> {
    let channels = channel_names(n_gen, n_bus);
    match scheme {
        FeatureScheme::Statistical => channels
            .iter()
            .flat_map(|c| STATISTICS.iter().map(move |s| format!("{c}.{s}")))
            .collect(),
        FeatureScheme::FlatTimeseries => {
            let width = n_points.saturating_sub(1).to_string().len().max(3);
            channels
                .iter()
                .flat_map(|c| (0..n_points).map(move |k| format!("{c}.t{k:0width$}")))
                .collect()
        }
    }
}

fn channels(traj: &Trajectory) -> Vec<Vec<f64>> {
    let mut out = traj.delta_coi();
    out.extend(traj.omega.iter().cloned());
    out.extend(traj.v_mag.iter().cloned());
    out.push(traj.f_coi.clone());
    out
}

/// `[mean, population std, min, max, final, max |first difference|]`.
pub fn channel_statistics(x: &[f64]) -> [f64; 6] {
    let n = x.len() as f64;
    // Shifting by the first sample keeps constant channels exact.
    let shift = x[0];
    let offset = x.iter().map(|v| v - shift).sum::<f64>() / n;
    let mean = shift + offset;
    let var = x.iter().map(|v| (v - shift - offset).powi(2)).sum::<f64>() / n;
    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let diff = x.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    [mean, var.sqrt(), min, max, x[x.len() - 1], diff]
}

pub fn extract_features(traj: &Trajectory, scheme: FeatureScheme) -> FeatureVector {
    let names = feature_names(traj.n_gen(), traj.n_bus(), traj.n_points(), scheme);
    let values: Vec<f64> = match scheme {
        FeatureScheme::Statistical => channels(traj).iter().flat_map(|c| channel_statistics(c)).collect(),
        FeatureScheme::FlatTimeseries => channels(traj).concat(),
    };
    debug_assert_eq!(values.len(), names.len());
    FeatureVector { values, scheme, names }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(n_gen: usize, n_bus: usize) -> Trajectory {
        let n = 101;
        Trajectory {
            t: (0..n).map(|k| 0.05 * k as f64).collect(),
            delta: vec![vec![0.0; n]; n_gen],
            omega: vec![vec![0.0; n]; n_gen],
            v_mag: vec![vec![1.0; n]; n_bus],
            f_coi: vec![60.0; n],
            f0: 60.0,
            inertia: vec![2.0; n_gen],
            gen_in_service: vec![true; n_gen],
            converged: true,
            abort_time: None,
            scenario: None,
        }
    }

    #[test]
    fn constant_channel_statistics() {
        assert_eq!(channel_statistics(&[0.7; 101]), [0.7, 0.0, 0.7, 0.7, 0.7, 0.0]);
    }

    #[test]
    fn ramp_has_hundredth_step() {
        let ramp: Vec<f64> = (0..101).map(|k| k as f64 / 100.0).collect();
        let s = channel_statistics(&ramp);
        assert!((s[5] - 0.01).abs() < 1e-12);
        assert!((s[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn nine_bus_statistical_dimension() {
        let fv = extract_features(&traj(3, 9), FeatureScheme::Statistical);
        assert_eq!(fv.dim(), (3 + 3 + 9 + 1) * 6);
        assert_eq!(fv.dim(), 96);
        assert_eq!(fv.names[0], "delta_coi.g0.mean");
        assert_eq!(fv.names[95], "f_coi.max_abs_diff");
        let unique: std::collections::BTreeSet<_> = fv.names.iter().collect();
        assert_eq!(unique.len(), 96);
    }

    #[test]
    fn flat_scheme_concatenates_samples() {
        let mut tr = traj(2, 1);
        tr.f_coi[100] = 61.0;
        let fv = extract_features(&tr, FeatureScheme::FlatTimeseries);
        assert_eq!(fv.dim(), (2 + 2 + 1 + 1) * 101);
        assert_eq!(fv.names[101], "delta_coi.g1.t000");
        assert_eq!(*fv.values.last().unwrap(), 61.0);
    }
}
