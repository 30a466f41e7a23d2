use std::f64::consts::PI;

use crate::cases;
use crate::grid::C64;
use crate::labeling::{check_angle, StabilityThresholds};

use super::*;

fn bolted(bus: usize, duration: f64) -> Scenario {
    // Purely reactive, near-zero impedance keeps the fault lossless.
    Scenario::bus_fault(FaultKind::ThreePhase, bus, 1.0, duration, FaultImpedance { r_f: 0.0, x_f: 1e-4 })
}

/// Closed-form SMIB operating point: internal EMFs, peak transfer and rotor
/// angle, derived from the case data without the library's power flow.
struct SmibOracle {
    p_m: f64,
    p_max: f64,
    delta0: f64,
    h_eq: f64,
    omega_s: f64,
}

fn smib_oracle() -> SmibOracle {
    let (x_line, xd1, xd2, p): (f64, f64, f64, f64) = (0.2, 0.3, 0.01, 0.8);
    let (h1, h2) = (3.5, 1000.0);
    let theta = (p * x_line).asin();
    let v1 = C64::from_polar(1.0, theta);
    let v2 = C64::new(1.0, 0.0);
    let i = (v1 - v2) / C64::new(0.0, x_line);
    let e1 = v1 + C64::new(0.0, xd1) * i;
    let e2 = v2 - C64::new(0.0, xd2) * i;
    SmibOracle {
        p_m: p,
        p_max: e1.norm() * e2.norm() / (xd1 + x_line + xd2),
        delta0: e1.arg() - e2.arg(),
        h_eq: h1 * h2 / (h1 + h2),
        omega_s: 2.0 * PI * 60.0,
    }
}

impl SmibOracle {
    /// Equal-area critical clearing time for a lossless bolted fault with the
    /// pre-fault network restored on clearing.
    fn cct(&self) -> f64 {
        let d0 = self.delta0;
        let dc = ((PI - 2.0 * d0) * d0.sin() - d0.cos()).acos();
        (4.0 * self.h_eq * (dc - d0) / (self.omega_s * self.p_m)).sqrt()
    }
}

fn max_drift(traj: &Trajectory) -> f64 {
    traj.delta
        .iter()
        .map(|row| row.iter().map(|d| (d - row[0]).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

#[test]
fn undisturbed_system_stays_at_equilibrium() {
    for name in ["smib", "wscc9", "ieee39"] {
        let case = cases::bundled(name).unwrap();
        let mut staged = stage_scenario(&case, &bolted(case.buses[0].id, 0.1)).unwrap();
        staged.fault_on = staged.pre.clone();
        staged.post = staged.pre.clone();
        let traj = integrate(&staged, &SimulationConfig::default()).unwrap();
        assert!(traj.converged);
        assert!(max_drift(&traj) <= 1e-6, "{name}: drift {}", max_drift(&traj));
    }
}

#[test]
fn oracle_matches_staged_smib() {
    let case = cases::bundled("smib").unwrap();
    let staged = stage_scenario(&case, &bolted(1, 0.1)).unwrap();
    let o = smib_oracle();
    let e = &staged.machines.emf;
    assert!((e[0].arg() - e[1].arg() - o.delta0).abs() < 1e-8);
    let b12 = staged.pre.y_red[(0, 1)].im;
    assert!((e[0].norm() * e[1].norm() * b12 - o.p_max).abs() < 1e-8);
}

#[test]
fn smib_small_signal_frequency() {
    let case = cases::bundled("smib").unwrap();
    let mut staged = stage_scenario(&case, &bolted(1, 0.1)).unwrap();
    staged.fault_on = staged.pre.clone();
    staged.post = staged.pre.clone();
    let cfg = SimulationConfig { output_points: 5001, ..Default::default() };
    let traj = integrate_perturbed(&staged, &cfg, &[0.01, 0.0]).unwrap();

    let rel: Vec<f64> = (0..traj.n_points()).map(|k| traj.delta[0][k] - traj.delta[1][k]).collect();
    let mean = rel.iter().sum::<f64>() / rel.len() as f64;
    let mut crossings = Vec::new();
    for k in 1..rel.len() {
        let (a, b) = (rel[k - 1] - mean, rel[k] - mean);
        if a < 0.0 && b >= 0.0 {
            crossings.push(traj.t[k - 1] + (traj.t[k] - traj.t[k - 1]) * (-a) / (b - a));
        }
    }
    assert!(crossings.len() >= 3);
    let period = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
    let measured = 2.0 * PI / period;

    let o = smib_oracle();
    let k_sync = o.omega_s * o.p_max * o.delta0.cos();
    for h in [o.h_eq, 3.5] {
        let expected = (k_sync / (2.0 * h)).sqrt();
        assert!((measured - expected).abs() / expected < 0.02, "measured {measured}, expected {expected}");
    }
}

#[test]
fn sustained_smib_fault_loses_synchronism() {
    let case = cases::bundled("smib").unwrap();
    let s = bolted(1, 5.0);
    let traj = simulate(&case, &s, &SimulationConfig::default()).unwrap();
    assert!(!traj.converged || check_angle(&traj, &StabilityThresholds::default()).is_some());
}

#[test]
fn divergent_run_holds_last_sample() {
    let case = cases::bundled("smib").unwrap();
    let traj = simulate(&case, &bolted(1, 5.0), &SimulationConfig::default()).unwrap();
    assert!(!traj.converged);
    let t_abort = traj.abort_time.unwrap();
    assert!(t_abort > 0.0 && t_abort < 5.0);
    assert!(traj.check_shapes());
    let last = traj.n_points() - 1;
    assert_eq!(traj.delta[0][last], traj.delta[0][last - 1]);
}

#[test]
fn output_grid_spans_window() {
    let case = cases::bundled("wscc9").unwrap();
    let traj = simulate(&case, &bolted(7, 0.08), &SimulationConfig::default()).unwrap();
    assert_eq!(traj.n_points(), 101);
    assert_eq!(traj.t[0], 0.0);
    assert_eq!(traj.t[100], 5.0);
    assert!(traj.check_shapes());
    assert_eq!(traj.n_bus(), 9);
}

#[test]
fn step_halving_changes_final_angle_little() {
    let case = cases::bundled("wscc9").unwrap();
    let s = bolted(7, 0.08);
    let coarse = simulate(&case, &s, &SimulationConfig::default()).unwrap();
    let fine = simulate(&case, &s, &SimulationConfig { dt: 5e-4, ..Default::default() }).unwrap();
    assert!(coarse.converged && fine.converged);
    for g in 0..3 {
        let d = (coarse.delta[g][100] - fine.delta[g][100]).abs();
        assert!(d <= 1e-4, "gen {g}: {d}");
    }
}

#[test]
fn clearing_on_a_sample_does_not_depend_on_the_output_grid() {
    let case = cases::bundled("wscc9").unwrap();
    for duration in [0.34, 0.35, 0.7] {
        let s = bolted(5, duration);
        let coarse = simulate(&case, &s, &SimulationConfig::default()).unwrap();
        let fine = simulate(&case, &s, &SimulationConfig { output_points: 5001, ..Default::default() }).unwrap();
        for k in 0..coarse.n_points() {
            let d = (coarse.f_coi[k] - fine.f_coi[50 * k]).abs();
            assert!(d <= 1e-6, "duration {duration}, t = {}: {d}", coarse.t[k]);
        }
    }
}

#[test]
fn coi_frequency_tracks_uniform_speed() {
    let case = cases::bundled("wscc9").unwrap();
    let traj = simulate(&case, &bolted(7, 0.08), &SimulationConfig::default()).unwrap();
    for k in [0, 50, 100] {
        let num: f64 = (0..3).map(|g| traj.inertia[g] * traj.omega[g][k]).sum();
        let den: f64 = traj.inertia.iter().sum();
        assert!((traj.f_coi[k] - 60.0 * (1.0 + num / den)).abs() < 1e-12);
    }
}

fn clearing_grid() -> Vec<f64> {
    (1..=10).map(|k| 0.05 * k as f64).collect()
}

#[test]
fn smib_sweep_threshold_matches_equal_area() {
    let case = cases::bundled("smib").unwrap();
    let cct = smib_oracle().cct();
    assert!(cct > 0.05 && cct < 0.5, "oracle CCT {cct}");
    let grid = clearing_grid();
    let sweep = critical_clearing_sweep(&case, &bolted(1, 0.1), &grid, &SimulationConfig::default(), &StabilityThresholds::default()).unwrap();
    assert!(sweep.is_monotone());
    let idx = sweep.threshold_index();
    assert!(idx > 0 && idx < grid.len());
    // The first unstable grid point is the first one beyond the oracle CCT,
    // up to one grid step.
    let expected = grid.iter().position(|&d| d > cct).unwrap();
    assert!(idx.abs_diff(expected) <= 1, "sweep threshold {idx}, oracle {expected} (cct {cct})");
}

#[test]
fn sweep_below_and_above_cct() {
    let case = cases::bundled("smib").unwrap();
    let cct = smib_oracle().cct();
    let cfg = SimulationConfig::default();
    let th = StabilityThresholds::default();
    let below: Vec<f64> = (1..=4).map(|k| cct * 0.2 * k as f64).collect();
    let sweep = critical_clearing_sweep(&case, &bolted(1, 0.1), &below, &cfg, &th).unwrap();
    assert!(sweep.outcomes().iter().all(|&u| !u));
    let above: Vec<f64> = (1..=4).map(|k| cct * (1.2 + 0.2 * k as f64)).collect();
    let sweep = critical_clearing_sweep(&case, &bolted(1, 0.1), &above, &cfg, &th).unwrap();
    assert!(sweep.outcomes().iter().all(|&u| u));
}

#[test]
fn nine_bus_sweep_is_monotone() {
    let case = cases::bundled("wscc9").unwrap();
    let sweep = critical_clearing_sweep(&case, &bolted(7, 0.1), &clearing_grid(), &SimulationConfig::default(), &StabilityThresholds::default()).unwrap();
    assert!(sweep.is_monotone(), "{:?}", sweep.outcomes());
}

#[test]
fn unsorted_grid_is_rejected() {
    let case = cases::bundled("smib").unwrap();
    let r = critical_clearing_sweep(&case, &bolted(1, 0.1), &[0.2, 0.1], &SimulationConfig::default(), &StabilityThresholds::default());
    assert!(matches!(r, Err(SimError::Config(_))));
}

#[test]
fn gen_trip_freezes_the_tripped_machine() {
    let case = cases::bundled("wscc9").unwrap();
    let s = Scenario { fault_kind: FaultKind::GenTrip, location: 2, z_fault: None, ..bolted(7, 0.1) };
    let traj = simulate(&case, &s, &SimulationConfig::default()).unwrap();
    assert_eq!(traj.gen_in_service, vec![true, true, false]);
    assert!(traj.delta[2].iter().all(|&d| d == traj.delta[2][0]));
    // Lost generation decelerates the remaining machines.
    assert!(traj.f_coi[100] < 60.0);
}
