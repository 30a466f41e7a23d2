use crate::grid::{power_flow, reduce_network, GridCase, Overlay, PowerFlowOptions, PowerFlowSolution, ReducedNetwork, C64};

use super::{FaultKind, Scenario, SimError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StagingOptions {
    /// Single-line-to-ground faults use this multiple of the given impedance.
    pub slg_factor: f64,
    pub power_flow: PowerFlowOptions,
}

impl Default for StagingOptions {
    fn default() -> Self {
        Self { slg_factor: 10.0, power_flow: PowerFlowOptions::default() }
    }
}

/// Per-machine constants on the system base.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineSet {
    pub h: Vec<f64>,
    pub d: Vec<f64>,
    /// Initial internal EMF phasors, one per generator of the case.
    pub emf: Vec<C64>,
}

/// Reduced networks for the three intervals of a scenario.
#[derive(Debug, Clone)]
pub struct StagedScenario {
    pub scenario: Scenario,
    pub f0: f64,
    pub n_bus: usize,
    pub machines: MachineSet,
    pub operating_point: PowerFlowSolution,
    pub pre: ReducedNetwork,
    pub fault_on: ReducedNetwork,
    pub post: ReducedNetwork,
}

impl StagedScenario {
    /// Window-relative switching instant between fault-on and post networks.
    pub fn clearing_offset(&self) -> f64 {
        self.scenario.t_clear - self.scenario.t_fault
    }
}

/// Stages a scenario with default options.
pub fn stage_scenario(case: &GridCase, scenario: &Scenario) -> Result<StagedScenario, SimError> {
    stage_scenario_with(case, scenario, &StagingOptions::default())
}

pub fn stage_scenario_with(case: &GridCase, scenario: &Scenario, opts: &StagingOptions) -> Result<StagedScenario, SimError> {
    let issues = scenario.check(case);
    if !issues.is_empty() {
        return Err(SimError::InvalidScenario(issues));
    }
    let scaled = case.with_load_scale(scenario.load_scale);
    let op = power_flow(&scaled, opts.power_flow)?;
    if !op.converged {
        return Err(SimError::PowerFlowDiverged { load_scale: scenario.load_scale, mismatch: op.max_mismatch });
    }
    let pre = reduce_network(&scaled, &op, &[])?;

    let (fault_on, post) = match scenario.fault_kind {
        FaultKind::ThreePhase | FaultKind::Slg => {
            let z = scenario.z_fault.expect("checked");
            let bus = scenario.location;
            let mut z_pu = C64::new(
                scaled.ohms_to_pu(bus, z.r_f).expect("checked"),
                scaled.ohms_to_pu(bus, z.x_f).expect("checked"),
            );
            if scenario.fault_kind == FaultKind::Slg {
                z_pu *= opts.slg_factor;
            }
            let fault_on = reduce_network(&scaled, &op, &[Overlay::fault(bus, z_pu)])?;
            let post = match scenario.removed_line(&scaled) {
                Some(line) => reduce_network(&scaled, &op, &[Overlay::RemoveLine { line }])?,
                None => pre.clone(),
            };
            (fault_on, post)
        }
        FaultKind::LineTrip => {
            let net = reduce_network(&scaled, &op, &[Overlay::RemoveLine { line: scenario.location }])?;
            (net.clone(), net)
        }
        FaultKind::GenTrip => {
            let net = reduce_network(&scaled, &op, &[Overlay::RemoveGenerator { gen: scenario.location }])?;
            (net.clone(), net)
        }
    };

    let machines = MachineSet {
        h: (0..scaled.n_gen()).map(|g| scaled.h_sys(g)).collect(),
        d: (0..scaled.n_gen()).map(|g| scaled.d_sys(g)).collect(),
        emf: crate::grid::generator_emfs(&scaled, &op),
    };
    Ok(StagedScenario {
        scenario: scenario.clone(),
        f0: scaled.f0_hz,
        n_bus: scaled.n_bus(),
        machines,
        operating_point: op,
        pre,
        fault_on,
        post,
    })
}
