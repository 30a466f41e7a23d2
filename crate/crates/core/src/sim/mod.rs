//! Scenario staging and classical multi-machine transient simulation.

mod integrate;
mod scenario;
mod stage;
mod sweep;
#[cfg(test)]
mod tests;

pub use integrate::{coi_frequency, electrical_power, integrate, integrate_perturbed, Method, SimulationConfig, Trajectory};
pub use scenario::{
    auto_clear_line, ClearingAction, FaultImpedance, FaultKind, IssueCode, Scenario, ScenarioIssue,
    LOAD_SCALE_RANGE, SCENARIO_SCHEMA_VERSION,
};
pub use stage::{stage_scenario, stage_scenario_with, MachineSet, StagedScenario, StagingOptions};
pub use sweep::{critical_clearing_sweep, SweepPoint, SweepResult};

use crate::grid::{GridCase, GridError};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {}", join_issues(.0))]
    InvalidScenario(Vec<ScenarioIssue>),
    #[error("power flow did not converge at load_scale {load_scale} (mismatch {mismatch:.3e})")]
    PowerFlowDiverged { load_scale: f64, mismatch: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid simulation config: {0}")]
    Config(String),
}

fn join_issues(issues: &[ScenarioIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

/// Stages and integrates one scenario.
pub fn simulate(case: &GridCase, scenario: &Scenario, cfg: &SimulationConfig) -> Result<Trajectory, SimError> {
    let staged = stage_scenario(case, scenario)?;
    integrate(&staged, cfg)
}
