use rayon::prelude::*;

use crate::grid::GridCase;
use crate::labeling::{classify, StabilityLabel, StabilityThresholds};

use super::{simulate, Scenario, SimError, SimulationConfig, Trajectory};

#[derive(Debug, Clone)]
pub struct SweepPoint {
    /// Fault-on duration, seconds.
    pub duration: f64,
    pub trajectory: Trajectory,
    pub label: StabilityLabel,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// `true` for each unstable point.
    pub fn outcomes(&self) -> Vec<bool> {
        self.points.iter().map(|p| p.label.is_unstable()).collect()
    }

    /// No unstable point is followed by a stable one.
    pub fn is_monotone(&self) -> bool {
        self.outcomes().windows(2).all(|w| !(w[0] && !w[1]))
    }

    /// Index of the first unstable point (`len` if all stable).
    pub fn threshold_index(&self) -> usize {
        self.outcomes().iter().position(|&u| u).unwrap_or(self.points.len())
    }
}

/// Runs the template once per fault-on duration in `durations` (ascending).
pub fn critical_clearing_sweep(
    case: &GridCase,
    template: &Scenario,
    durations: &[f64],
    cfg: &SimulationConfig,
    thresholds: &StabilityThresholds,
) -> Result<SweepResult, SimError> {
    if durations.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SimError::Config("clearing grid must be strictly ascending".into()));
    }
    let points = durations
        .par_iter()
        .map(|&duration| {
            let scenario = Scenario { t_clear: template.t_fault + duration, ..template.clone() };
            let trajectory = simulate(case, &scenario, cfg)?;
            let label = classify(&trajectory, thresholds);
            Ok(SweepPoint { duration, trajectory, label })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(SweepResult { points })
}
