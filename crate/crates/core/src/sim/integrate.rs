//! Fixed-step RK4 integration of the classical multi-machine swing equations.
//!
//! Per machine, with speed as per-unit deviation `w`:
//!
//! ```text
//! dδ/dt = ω_s · w
//! 2H · dw/dt = P_m − P_e − D · w
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::grid::{ReducedNetwork, C64};

use super::{Scenario, SimError, StagedScenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub dt: f64,
    pub output_points: usize,
    #[serde(default)]
    pub method: Method,
    /// Abort threshold on |δ_i − δ_COI|, radians.
    pub divergence_cap: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { dt: 1e-3, output_points: 101, method: Method::Rk4, divergence_cap: 3.0 * PI }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::Config(format!("dt must be positive (got {})", self.dt)));
        }
        if self.output_points < 2 {
            return Err(SimError::Config(format!("output_points must be at least 2 (got {})", self.output_points)));
        }
        if !(self.divergence_cap > 0.0) {
            return Err(SimError::Config("divergence_cap must be positive".into()));
        }
        Ok(())
    }
}

/// Sampled system response over the observed window. Time is measured from
/// fault inception; row-major arrays are indexed `[element][sample]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub delta: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    pub v_mag: Vec<Vec<f64>>,
    pub f_coi: Vec<f64>,
    pub f0: f64,
    /// Inertia constants on the system base (COI weights).
    pub inertia: Vec<f64>,
    /// Whether each machine is still connected after the disturbance.
    pub gen_in_service: Vec<bool>,
    pub converged: bool,
    /// Window-relative time at which integration stopped early.
    pub abort_time: Option<f64>,
    pub scenario: Option<Scenario>,
}

impl Trajectory {
    pub fn n_points(&self) -> usize {
        self.t.len()
    }

    pub fn n_gen(&self) -> usize {
        self.delta.len()
    }

    pub fn n_bus(&self) -> usize {
        self.v_mag.len()
    }

    /// Window-relative fault-on interval of a bus fault, if the scenario is known.
    pub fn fault_interval(&self) -> Option<(f64, f64)> {
        self.scenario
            .as_ref()
            .filter(|s| s.fault_kind.is_bus_fault())
            .map(|s| (0.0, s.t_clear - s.t_fault))
    }

    /// Rotor angles relative to the inertia-weighted center of the in-service machines.
    pub fn delta_coi(&self) -> Vec<Vec<f64>> {
        let active: Vec<usize> = (0..self.n_gen()).filter(|&g| self.gen_in_service[g]).collect();
        let htot: f64 = active.iter().map(|&g| self.inertia[g]).sum();
        let coi: Vec<f64> = (0..self.n_points())
            .map(|k| active.iter().map(|&g| self.inertia[g] * self.delta[g][k]).sum::<f64>() / htot)
            .collect();
        self.delta
            .iter()
            .map(|row| row.iter().zip(&coi).map(|(d, c)| d - c).collect())
            .collect()
    }

    pub fn check_shapes(&self) -> bool {
        let n = self.t.len();
        let g = self.delta.len();
        self.f_coi.len() == n
            && self.omega.len() == g
            && self.inertia.len() == g
            && self.gen_in_service.len() == g
            && self.delta.iter().chain(&self.omega).chain(&self.v_mag).all(|r| r.len() == n)
            && self.t.windows(2).all(|w| w[1] > w[0])
    }
}

/// System frequency from the inertia-weighted mean speed deviation.
pub fn coi_frequency(f0: f64, inertia: &[f64], omega: &[f64], active: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for g in 0..inertia.len() {
        if active[g] {
            num += inertia[g] * omega[g];
            den += inertia[g];
        }
    }
    f0 * (1.0 + num / den)
}

/// Active power injected at each internal node of `net`, in node order.
pub fn electrical_power(delta: &[f64], emf: &[f64], net: &ReducedNetwork) -> Vec<f64> {
    let n = delta.len();
    let mut p = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            let y = net.y_red[(i, j)];
            let dij = delta[i] - delta[j];
            acc += emf[j] * (y.re * dij.cos() + y.im * dij.sin());
        }
        p[i] = emf[i] * acc;
    }
    p
}

struct Phase<'a> {
    net: &'a ReducedNetwork,
    /// Node position of every generator, `None` when disconnected.
    slot: Vec<Option<usize>>,
}

impl<'a> Phase<'a> {
    fn new(net: &'a ReducedNetwork, n_gen: usize) -> Self {
        let mut slot = vec![None; n_gen];
        for (k, &g) in net.gens.iter().enumerate() {
            slot[g] = Some(k);
        }
        Self { net, slot }
    }

    fn active(&self) -> Vec<bool> {
        self.slot.iter().map(|s| s.is_some()).collect()
    }
}

struct Model<'a> {
    omega_s: f64,
    e_mag: Vec<f64>,
    h: &'a [f64],
    d: &'a [f64],
    pm: Vec<f64>,
}

impl Model<'_> {
    fn n(&self) -> usize {
        self.e_mag.len()
    }

    fn node_power(&self, phase: &Phase, state: &[f64]) -> Vec<f64> {
        let n = self.n();
        let gens = &phase.net.gens;
        let delta: Vec<f64> = gens.iter().map(|&g| state[g]).collect();
        let emf: Vec<f64> = gens.iter().map(|&g| self.e_mag[g]).collect();
        let p = electrical_power(&delta, &emf, phase.net);
        let mut out = vec![0.0; n];
        for (k, &g) in gens.iter().enumerate() {
            out[g] = p[k];
        }
        out
    }

    fn derivative(&self, phase: &Phase, state: &[f64], out: &mut [f64]) {
        let n = self.n();
        let pe = self.node_power(phase, state);
        for g in 0..n {
            if phase.slot[g].is_some() {
                let w = state[n + g];
                out[g] = self.omega_s * w;
                out[n + g] = (self.pm[g] - pe[g] - self.d[g] * w) / (2.0 * self.h[g]);
            } else {
                out[g] = 0.0;
                out[n + g] = 0.0;
            }
        }
    }

    fn rk4(&self, phase: &Phase, state: &mut [f64], h: f64, scratch: &mut [Vec<f64>; 5]) {
        let m = state.len();
        let [k1, k2, k3, k4, tmp] = scratch;
        self.derivative(phase, state, k1);
        for i in 0..m {
            tmp[i] = state[i] + 0.5 * h * k1[i];
        }
        self.derivative(phase, tmp, k2);
        for i in 0..m {
            tmp[i] = state[i] + 0.5 * h * k2[i];
        }
        self.derivative(phase, tmp, k3);
        for i in 0..m {
            tmp[i] = state[i] + h * k3[i];
        }
        self.derivative(phase, tmp, k4);
        for i in 0..m {
            state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Largest |δ_i − δ_COI| over connected machines; `NaN` propagates as infinity.
fn coi_spread(state: &[f64], h: &[f64], active: &[bool]) -> f64 {
    let n = h.len();
    let (mut num, mut den) = (0.0, 0.0);
    for g in 0..n {
        if active[g] {
            num += h[g] * state[g];
            den += h[g];
        }
    }
    let coi = num / den;
    let mut worst: f64 = 0.0;
    for g in 0..n {
        if active[g] {
            let d = (state[g] - coi).abs();
            if !d.is_finite() {
                return f64::INFINITY;
            }
            worst = worst.max(d);
        }
    }
    worst
}

/// Integrates a staged scenario over its observed window.
///
/// The window starts at fault inception from the pre-disturbance equilibrium.
/// Instability is a result, not an error: a run whose angle spread exceeds the
/// divergence cap stops early with `converged = false` and holds the last
/// state for the remaining samples.
pub fn integrate(staged: &StagedScenario, cfg: &SimulationConfig) -> Result<Trajectory, SimError> {
    integrate_perturbed(staged, cfg, &vec![0.0; staged.machines.h.len()])
}

/// As [`integrate`], with rotor angles displaced by `delta_offset` (radians)
/// from the equilibrium at which mechanical power is fixed.
pub fn integrate_perturbed(
    staged: &StagedScenario,
    cfg: &SimulationConfig,
    delta_offset: &[f64],
) -> Result<Trajectory, SimError> {
    cfg.validate()?;
    let n_gen = staged.machines.h.len();
    if delta_offset.len() != n_gen {
        return Err(SimError::Config(format!("{} angle offsets for {n_gen} machines", delta_offset.len())));
    }
    let horizon = staged.scenario.horizon;
    if !(horizon > 0.0) {
        return Err(SimError::Config("horizon must be positive".into()));
    }
    for net in [&staged.pre, &staged.fault_on, &staged.post] {
        if net.gens.iter().any(|&g| g >= n_gen) || net.y_red.nrows() != net.gens.len() {
            return Err(SimError::Config("staged network does not match the machine set".into()));
        }
    }

    let pre = Phase::new(&staged.pre, n_gen);
    let fault_on = Phase::new(&staged.fault_on, n_gen);
    let post = Phase::new(&staged.post, n_gen);
    let t_switch = staged.clearing_offset();

    let e_mag: Vec<f64> = staged.machines.emf.iter().map(|e| e.norm()).collect();
    let mut state = vec![0.0; 2 * n_gen];
    for (angle, emf) in state.iter_mut().zip(&staged.machines.emf) {
        *angle = emf.arg();
    }
    let mut model = Model {
        omega_s: 2.0 * PI * staged.f0,
        e_mag,
        h: &staged.machines.h,
        d: &staged.machines.d,
        pm: vec![0.0; n_gen],
    };
    // Mechanical power balances the pre-disturbance electrical output exactly.
    model.pm = model.node_power(&pre, &state);
    for g in 0..n_gen {
        state[g] += delta_offset[g];
    }

    // Breakpoints within this distance of each other are one instant, so a
    // sample that absorbed the switching time already sees the post-fault network.
    const SAME_INSTANT: f64 = 1e-12;
    let phase_at = |t: f64| if t < t_switch - SAME_INSTANT { &fault_on } else { &post };

    let npts = cfg.output_points;
    let samples: Vec<f64> = (0..npts).map(|k| horizon * k as f64 / (npts - 1) as f64).collect();
    let mut traj = Trajectory {
        t: samples.clone(),
        delta: vec![Vec::with_capacity(npts); n_gen],
        omega: vec![Vec::with_capacity(npts); n_gen],
        v_mag: vec![Vec::with_capacity(npts); staged.n_bus],
        f_coi: Vec::with_capacity(npts),
        f0: staged.f0,
        inertia: staged.machines.h.clone(),
        gen_in_service: post.active(),
        converged: true,
        abort_time: None,
        scenario: Some(staged.scenario.clone()),
    };

    let record = |traj: &mut Trajectory, phase: &Phase, state: &[f64]| {
        let active = phase.active();
        for g in 0..n_gen {
            traj.delta[g].push(state[g]);
            traj.omega[g].push(state[n_gen + g]);
        }
        let e: Vec<C64> = phase
            .net
            .gens
            .iter()
            .map(|&g| C64::from_polar(model.e_mag[g], state[g]))
            .collect();
        let v = phase.net.recover(&e);
        for (b, row) in traj.v_mag.iter_mut().enumerate() {
            row.push(v[b].norm());
        }
        traj.f_coi
            .push(coi_frequency(staged.f0, &staged.machines.h, &state[n_gen..], &active));
    };

    let mut breakpoints = samples.clone();
    if t_switch > 0.0 && t_switch < horizon {
        breakpoints.push(t_switch);
    }
    breakpoints.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    breakpoints.dedup_by(|a, b| (*a - *b).abs() < SAME_INSTANT);

    let mut scratch: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; 2 * n_gen]);
    let mut next_sample = 0;
    record(&mut traj, phase_at(0.0), &state);
    next_sample += 1;

    'outer: for w in breakpoints.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let phase = phase_at(t0);
        let active = phase.active();
        let steps = ((t1 - t0) / cfg.dt - 1e-9).ceil().max(1.0) as usize;
        let h = (t1 - t0) / steps as f64;
        for s in 0..steps {
            model.rk4(phase, &mut state, h, &mut scratch);
            let spread = coi_spread(&state, &staged.machines.h, &active);
            if !(spread <= cfg.divergence_cap) {
                let t_abort = t0 + h * (s + 1) as f64;
                traj.converged = false;
                traj.abort_time = Some(t_abort);
                if state.iter().any(|v| !v.is_finite()) {
                    // Hold the last finite sample.
                    while next_sample < npts {
                        for row in traj
                            .delta
                            .iter_mut()
                            .chain(traj.omega.iter_mut())
                            .chain(traj.v_mag.iter_mut())
                        {
                            let last = *row.last().expect("first sample recorded");
                            row.push(last);
                        }
                        let last = *traj.f_coi.last().expect("first sample recorded");
                        traj.f_coi.push(last);
                        next_sample += 1;
                    }
                } else {
                    let phase = phase_at(t_abort);
                    while next_sample < npts {
                        record(&mut traj, phase, &state);
                        next_sample += 1;
                    }
                }
                break 'outer;
            }
        }
        if next_sample < npts && (samples[next_sample] - t1).abs() < SAME_INSTANT {
            record(&mut traj, phase_at(t1), &state);
            next_sample += 1;
        }
    }
    debug_assert_eq!(traj.f_coi.len(), npts);
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{kron_reduce, CMatrix};

    fn two_machine_net(b12: f64) -> ReducedNetwork {
        let y = CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(0.0, -b12), C64::new(0.0, b12), C64::new(0.0, b12), C64::new(0.0, -b12)],
        );
        let mut net = kron_reduce(&y, &[0, 1]).unwrap();
        net.gens = vec![0, 1];
        net
    }

    #[test]
    fn zero_angle_symmetric_network_has_no_transfer() {
        let net = two_machine_net(2.0);
        let p = electrical_power(&[0.3, 0.3], &[1.0, 1.0], &net);
        assert!(p.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn thirty_degree_transfer_over_half_ohm_reactance() {
        // B_12 = −1/(j0.5) imaginary part = 2.0 ⇒ P_12 = 2·sin 30° = 1.0.
        let net = two_machine_net(2.0);
        let p = electrical_power(&[30f64.to_radians(), 0.0], &[1.0, 1.0], &net);
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert!((p[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn lossless_network_conserves_power() {
        let net = two_machine_net(3.7);
        let p = electrical_power(&[1.2, -0.4], &[1.1, 0.95], &net);
        assert!(p.iter().sum::<f64>().abs() <= 1e-10);
    }

    #[test]
    fn coi_identity_for_uniform_speed() {
        let f = coi_frequency(60.0, &[3.0, 5.0, 7.5], &[0.01, 0.01, 0.01], &[true, true, true]);
        assert_eq!(f, 60.0 * (1.0 + 0.01));
    }

    #[test]
    fn config_rejects_degenerate_values() {
        let mut cfg = SimulationConfig { output_points: 1, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg.output_points = 2;
        cfg.dt = 0.0;
        assert!(cfg.validate().is_err());
    }
}
