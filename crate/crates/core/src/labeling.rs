//! Rotor-angle, voltage and frequency stability criteria.

use serde::{Deserialize, Serialize};

use crate::sim::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityThresholds {
    /// Degrees.
    pub angle_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Hz.
    pub df_max: f64,
    /// Seconds a voltage excursion must persist.
    pub v_dwell: f64,
}

impl Default for StabilityThresholds {
    fn default() -> Self {
        Self { angle_max: 180.0, v_min: 0.8, v_max: 1.2, df_max: 2.0, v_dwell: 0.5 }
    }
}

impl StabilityThresholds {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.v_min < self.v_max) {
            return Err(format!("v_min ({}) must be below v_max ({})", self.v_min, self.v_max));
        }
        if !(self.df_max > 0.0) {
            return Err(format!("df_max must be positive (got {})", self.df_max));
        }
        if !(self.angle_max > 0.0) {
            return Err(format!("angle_max must be positive (got {})", self.angle_max));
        }
        if !(self.v_dwell >= 0.0) {
            return Err(format!("v_dwell must be non-negative (got {})", self.v_dwell));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Angle,
    Voltage,
    Frequency,
}

impl Criterion {
    /// Tie-break rank: lower wins.
    fn priority(self) -> u8 {
        match self {
            Criterion::Angle => 0,
            Criterion::Frequency => 1,
            Criterion::Voltage => 2,
        }
    }

    pub fn class(self) -> StabilityClass {
        match self {
            Criterion::Angle => StabilityClass::Angle,
            Criterion::Voltage => StabilityClass::Voltage,
            Criterion::Frequency => StabilityClass::Frequency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub criterion: Criterion,
    /// Window-relative time of the first violating sample.
    pub time: f64,
    pub sample: usize,
    /// Offending elements: generator pair for angle, bus index for voltage.
    pub elements: Vec<usize>,
    /// Magnitude at the first violating sample (degrees, per-unit or Hz).
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binary {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityClass {
    Stable = 0,
    Angle = 1,
    Voltage = 2,
    Frequency = 3,
}

impl StabilityClass {
    pub const NAMES: [&'static str; 4] = ["stable", "angle", "voltage", "frequency"];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityLabel {
    pub binary: Binary,
    pub multiclass: StabilityClass,
    pub violated: Vec<Violation>,
}

impl StabilityLabel {
    pub fn is_unstable(&self) -> bool {
        self.binary == Binary::Unstable
    }
}

/// First sample at which the angle spread among connected machines reaches `angle_max`.
pub fn check_angle(traj: &Trajectory, th: &StabilityThresholds) -> Option<Violation> {
    let active: Vec<usize> = (0..traj.n_gen()).filter(|&g| traj.gen_in_service[g]).collect();
    if active.len() < 2 {
        return None;
    }
    let limit = th.angle_max.to_radians();
    for k in 0..traj.n_points() {
        let (mut hi, mut lo) = (active[0], active[0]);
        for &g in &active {
            if traj.delta[g][k] > traj.delta[hi][k] {
                hi = g;
            }
            if traj.delta[g][k] < traj.delta[lo][k] {
                lo = g;
            }
        }
        let spread = traj.delta[hi][k] - traj.delta[lo][k];
        if spread >= limit {
            return Some(Violation {
                criterion: Criterion::Angle,
                time: traj.t[k],
                sample: k,
                elements: vec![hi, lo],
                value: spread.to_degrees(),
            });
        }
    }
    None
}

/// Earliest out-of-band voltage run lasting at least `v_dwell`, ignoring fault-on samples.
pub fn check_voltage(traj: &Trajectory, th: &StabilityThresholds) -> Option<Violation> {
    let fault_end = traj.fault_interval().map_or(0.0, |(_, end)| end);
    let mut best: Option<Violation> = None;
    for (bus, v) in traj.v_mag.iter().enumerate() {
        let mut run_start: Option<usize> = None;
        for k in 0..traj.n_points() {
            let counted = traj.t[k] >= fault_end - 1e-12;
            let out = counted && (v[k] < th.v_min || v[k] > th.v_max);
            if !out {
                run_start = None;
                continue;
            }
            let start = *run_start.get_or_insert(k);
            if traj.t[k] - traj.t[start] >= th.v_dwell - 1e-12 {
                if best.as_ref().is_none_or(|b| start < b.sample) {
                    best = Some(Violation {
                        criterion: Criterion::Voltage,
                        time: traj.t[start],
                        sample: start,
                        elements: vec![bus],
                        value: v[start],
                    });
                }
                break;
            }
        }
    }
    best
}

/// First sample at which the system frequency leaves `f0 ± df_max`.
pub fn check_frequency(traj: &Trajectory, th: &StabilityThresholds) -> Option<Violation> {
    traj.f_coi.iter().enumerate().find_map(|(k, &f)| {
        let dev = (f - traj.f0).abs();
        (dev > th.df_max).then(|| Violation {
            criterion: Criterion::Frequency,
            time: traj.t[k],
            sample: k,
            elements: Vec::new(),
            value: dev,
        })
    })
}

/// Applies all criteria; the class is the earliest violation, ties going to
/// angle, then frequency, then voltage.
pub fn classify(traj: &Trajectory, th: &StabilityThresholds) -> StabilityLabel {
    let mut violated: Vec<Violation> = [check_angle(traj, th), check_frequency(traj, th), check_voltage(traj, th)]
        .into_iter()
        .flatten()
        .collect();
    violated.sort_by(|a, b| {
        a.sample.cmp(&b.sample).then(a.criterion.priority().cmp(&b.criterion.priority()))
    });
    match violated.first() {
        None => StabilityLabel { binary: Binary::Stable, multiclass: StabilityClass::Stable, violated },
        Some(v) => {
            let multiclass = v.criterion.class();
            StabilityLabel { binary: Binary::Unstable, multiclass, violated }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(n_gen: usize, n_bus: usize) -> Trajectory {
        let n = 101;
        Trajectory {
            t: (0..n).map(|k| 5.0 * k as f64 / 100.0).collect(),
            delta: vec![vec![0.2; n]; n_gen],
            omega: vec![vec![0.0; n]; n_gen],
            v_mag: vec![vec![1.0; n]; n_bus],
            f_coi: vec![60.0; n],
            f0: 60.0,
            inertia: vec![1.0; n_gen],
            gen_in_service: vec![true; n_gen],
            converged: true,
            abort_time: None,
            scenario: None,
        }
    }

    #[test]
    fn flat_trajectory_is_stable() {
        let tr = flat(3, 4);
        let label = classify(&tr, &StabilityThresholds::default());
        assert_eq!(label.binary, Binary::Stable);
        assert_eq!(label.multiclass, StabilityClass::Stable);
        assert!(label.violated.is_empty());
    }

    #[test]
    fn angle_ramp_to_200_degrees() {
        let mut tr = flat(2, 1);
        tr.delta[0] = (0..101).map(|k| (200.0 * k as f64 / 100.0).to_radians()).collect();
        tr.delta[1] = vec![0.0; 101];
        let v = check_angle(&tr, &StabilityThresholds::default()).unwrap();
        // 2° per sample: the first sample with spread ≥ 180° is k = 90.
        assert_eq!(v.sample, 90);
        assert_eq!(v.elements, vec![0, 1]);
    }

    #[test]
    fn persistent_low_voltage_after_clearing() {
        let mut tr = flat(2, 3);
        tr.v_mag[2] = vec![0.5; 101];
        let v = check_voltage(&tr, &StabilityThresholds::default()).unwrap();
        assert_eq!(v.elements, vec![2]);
        assert_eq!(v.sample, 0);
    }

    #[test]
    fn constant_frequency_offset() {
        let mut tr = flat(2, 1);
        tr.f_coi = vec![62.5; 101];
        assert!(check_frequency(&tr, &StabilityThresholds::default()).is_some());
        tr.f_coi = vec![61.9; 101];
        assert!(check_frequency(&tr, &StabilityThresholds::default()).is_none());
    }

    #[test]
    fn thresholds_validate() {
        assert!(StabilityThresholds::default().validate().is_ok());
        let bad = StabilityThresholds { v_min: 1.3, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    fn with_fault(mut tr: Trajectory, clear_after: f64) -> Trajectory {
        tr.scenario = Some(crate::sim::Scenario::bus_fault(
            crate::sim::FaultKind::ThreePhase,
            1,
            1.0,
            clear_after,
            crate::sim::FaultImpedance { r_f: 0.0, x_f: 1.0 },
        ));
        tr
    }

    #[test]
    fn dip_confined_to_fault_on_interval_is_ignored() {
        let mut tr = with_fault(flat(2, 2), 0.6);
        // Samples every 0.05 s; 0.6 pu for t < 0.6 only (12 samples, 0.55 s run).
        for k in 0..12 {
            tr.v_mag[1][k] = 0.6;
        }
        assert!(check_voltage(&tr, &StabilityThresholds::default()).is_none());
        // Without the scenario record the same dip breaches the dwell.
        tr.scenario = None;
        assert!(check_voltage(&tr, &StabilityThresholds::default()).is_some());
    }

    #[test]
    fn short_post_fault_excursion_is_tolerated() {
        let mut tr = with_fault(flat(2, 2), 0.1);
        // 10 samples from t = 1.0 to 1.45: 0.45 s < 0.5 s dwell.
        for k in 20..30 {
            tr.v_mag[0][k] = 0.7;
        }
        assert!(check_voltage(&tr, &StabilityThresholds::default()).is_none());
        tr.v_mag[0][30] = 0.7;
        let v = check_voltage(&tr, &StabilityThresholds::default()).unwrap();
        assert_eq!(v.sample, 20);
    }

    #[test]
    fn earliest_violation_sets_the_class() {
        let mut tr = flat(2, 1);
        // Angle spread reaches 180° at t = 1.4 s (k = 28); frequency leaves the band at 2.0 s (k = 40).
        for k in 28..101 {
            tr.delta[0][k] = PI_F + 0.2;
        }
        for k in 40..101 {
            tr.f_coi[k] = 62.5;
        }
        let label = classify(&tr, &StabilityThresholds::default());
        assert_eq!(label.binary, Binary::Unstable);
        assert_eq!(label.multiclass, StabilityClass::Angle);
        assert_eq!(label.violated.len(), 2);
        assert!((label.violated[0].time - 1.4).abs() < 1e-12);
    }

    #[test]
    fn simultaneous_violations_prefer_angle_then_frequency() {
        let mut tr = flat(2, 1);
        for k in 28..101 {
            tr.delta[0][k] = PI_F + 0.2;
            tr.f_coi[k] = 62.5;
            tr.v_mag[0][k] = 0.5;
        }
        assert_eq!(classify(&tr, &StabilityThresholds::default()).multiclass, StabilityClass::Angle);
        tr.delta[0] = vec![0.2; 101];
        assert_eq!(classify(&tr, &StabilityThresholds::default()).multiclass, StabilityClass::Frequency);
        tr.f_coi = vec![60.0; 101];
        assert_eq!(classify(&tr, &StabilityThresholds::default()).multiclass, StabilityClass::Voltage);
    }

    #[test]
    fn tripped_machine_does_not_count_toward_spread() {
        let mut tr = flat(3, 1);
        tr.delta[2] = vec![10.0; 101];
        assert!(check_angle(&tr, &StabilityThresholds::default()).is_some());
        tr.gen_in_service[2] = false;
        assert!(check_angle(&tr, &StabilityThresholds::default()).is_none());
    }

    const PI_F: f64 = std::f64::consts::PI;

    // Exhaustive per-sample scans used as oracles.
    fn scan_angle(tr: &Trajectory, th: &StabilityThresholds) -> Option<(usize, f64)> {
        for k in 0..tr.n_points() {
            let mut worst: f64 = 0.0;
            for i in 0..tr.n_gen() {
                for j in 0..tr.n_gen() {
                    worst = worst.max((tr.delta[i][k] - tr.delta[j][k]).abs());
                }
            }
            if worst.to_degrees() >= th.angle_max {
                return Some((k, worst.to_degrees()));
            }
        }
        None
    }

    fn scan_voltage(tr: &Trajectory, th: &StabilityThresholds) -> Option<usize> {
        let fault_end = tr.fault_interval().map_or(0.0, |(_, e)| e);
        let bad = |b: usize, k: usize| {
            tr.t[k] >= fault_end - 1e-12 && (tr.v_mag[b][k] < th.v_min || tr.v_mag[b][k] > th.v_max)
        };
        let mut best: Option<usize> = None;
        for b in 0..tr.n_bus() {
            for start in 0..tr.n_points() {
                if start > 0 && bad(b, start - 1) || !bad(b, start) {
                    continue;
                }
                let mut end = start;
                while end + 1 < tr.n_points() && bad(b, end + 1) {
                    end += 1;
                }
                if tr.t[end] - tr.t[start] >= th.v_dwell - 1e-12 {
                    best = Some(best.map_or(start, |s| s.min(start)));
                }
            }
        }
        best
    }

    fn scan_frequency(tr: &Trajectory, th: &StabilityThresholds) -> Option<usize> {
        (0..tr.n_points()).find(|&k| (tr.f_coi[k] - tr.f0).abs() > th.df_max)
    }

    fn random_traj(seed: u64) -> Trajectory {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut tr = with_fault(flat(3, 4), rng.random_range(0.05..0.5));
        let walk = |rng: &mut rand_chacha::ChaCha8Rng, start: f64, step: f64| {
            let mut x = start;
            (0..101)
                .map(|_| {
                    x += rng.random_range(-step..step);
                    x
                })
                .collect::<Vec<f64>>()
        };
        for g in 0..3 {
            tr.delta[g] = walk(&mut rng, 0.0, 0.3);
        }
        for b in 0..4 {
            tr.v_mag[b] = walk(&mut rng, 1.0, 0.02);
        }
        tr.f_coi = walk(&mut rng, 60.0, 0.25);
        tr
    }

    #[test]
    fn checkers_agree_with_exhaustive_scans() {
        let th = StabilityThresholds::default();
        let mut hits = [0; 3];
        for seed in 0..400 {
            let tr = random_traj(seed);
            let a = check_angle(&tr, &th);
            assert_eq!(a.as_ref().map(|v| v.sample), scan_angle(&tr, &th).map(|x| x.0), "seed {seed}");
            if let (Some(v), Some((_, deg))) = (&a, scan_angle(&tr, &th)) {
                assert!((v.value - deg).abs() < 1e-9);
            }
            let v = check_voltage(&tr, &th).map(|v| v.sample);
            assert_eq!(v, scan_voltage(&tr, &th), "seed {seed}");
            let f = check_frequency(&tr, &th).map(|v| v.sample);
            assert_eq!(f, scan_frequency(&tr, &th), "seed {seed}");
            hits[0] += a.is_some() as usize;
            hits[1] += v.is_some() as usize;
            hits[2] += f.is_some() as usize;
        }
        // The random walks exercise both outcomes of every criterion.
        assert!(hits.iter().all(|&h| h > 20 && h < 380), "{hits:?}");
    }

    #[test]
    fn widening_thresholds_never_destabilizes() {
        let base = StabilityThresholds::default();
        let wider = StabilityThresholds { angle_max: 200.0, v_min: 0.7, v_max: 1.3, df_max: 2.5, v_dwell: 0.7 };
        for seed in 0..200 {
            let tr = random_traj(seed);
            if !classify(&tr, &base).is_unstable() {
                assert!(!classify(&tr, &wider).is_unstable(), "seed {seed}");
            }
        }
    }

    #[test]
    fn smib_sustained_fault_matches_pairwise_scan() {
        let case = crate::cases::bundled("smib").unwrap();
        let s = crate::sim::Scenario::bus_fault(
            crate::sim::FaultKind::ThreePhase,
            1,
            1.0,
            5.0,
            crate::sim::FaultImpedance { r_f: 0.01, x_f: 0.001 },
        );
        let tr = crate::sim::simulate(&case, &s, &Default::default()).unwrap();
        let th = StabilityThresholds::default();
        let v = check_angle(&tr, &th).expect("sustained fault must violate");
        let (k, _) = scan_angle(&tr, &th).unwrap();
        assert_eq!(v.sample, k);
        assert_eq!(v.time, tr.t[k]);
    }
}
