//! Simulation through labeling and feature extraction into a dataset file.

use tsa_core::cases;
use tsa_core::dataset::{assemble, extract_features, split, Dataset, DatasetMetadata, FeatureScheme, LabeledSample};
use tsa_core::labeling::{classify, StabilityClass, StabilityThresholds};
use tsa_core::sim::{critical_clearing_sweep, FaultImpedance, FaultKind, Scenario, SimulationConfig, SCENARIO_SCHEMA_VERSION};

#[test]
fn nine_bus_sweep_packs_into_a_balanced_dataset() {
    let case = cases::bundled("wscc9").unwrap();
    let th = StabilityThresholds::default();
    let cfg = SimulationConfig::default();
    let durations: Vec<f64> = (1..=10).map(|k| 0.05 * k as f64).collect();
    let mut samples = Vec::new();
    for bus in [4, 5, 7, 8, 9] {
        let template = Scenario::bus_fault(FaultKind::ThreePhase, bus, 1.0, 0.1, FaultImpedance { r_f: 0.01, x_f: 0.001 });
        let sweep = critical_clearing_sweep(&case, &template, &durations, &cfg, &th).unwrap();
        assert!(sweep.is_monotone(), "bus {bus}: {:?}", sweep.outcomes());
        for p in &sweep.points {
            assert_eq!(classify(&p.trajectory, &th), p.label);
            samples.push(LabeledSample {
                features: extract_features(&p.trajectory, FeatureScheme::Statistical),
                label: u32::from(p.label.is_unstable()),
            });
        }
    }
    let meta = DatasetMetadata {
        case_name: case.name.clone(),
        thresholds: Some(th),
        scenario_schema_version: SCENARIO_SCHEMA_VERSION,
        class_names: vec!["stable".into(), "unstable".into()],
        ..Default::default()
    };
    let ds = assemble(&samples, 2, Some(0.5), &[0, 1], 42, meta).unwrap();
    let c = ds.counts();
    assert!(c[0] > 0 && c[1] > 0, "{c:?}");
    let share = c[1] as f64 / ds.len() as f64;
    assert!((share - 0.5).abs() <= 0.05, "{c:?}");
    assert_eq!(ds.dim(), 96);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nine.tsds");
    ds.write(&path).unwrap();
    let back = Dataset::read(&path).unwrap();
    assert_eq!(back, ds);
    assert_eq!(back.metadata.thresholds, Some(th));

    let parts = split(&back, [0.6, 0.2, 0.2], 1).unwrap();
    assert_eq!(parts.train.len() + parts.val.len() + parts.test.len(), ds.len());
}

#[test]
fn multiclass_labels_follow_the_taxonomy() {
    let case = cases::bundled("wscc9").unwrap();
    let th = StabilityThresholds::default();
    let s = Scenario::bus_fault(FaultKind::ThreePhase, 7, 1.0, 0.45, FaultImpedance { r_f: 0.01, x_f: 0.001 });
    let tr = tsa_core::sim::simulate(&case, &s, &SimulationConfig::default()).unwrap();
    let label = classify(&tr, &th);
    assert!(label.is_unstable());
    assert_ne!(label.multiclass, StabilityClass::Stable);
    assert_eq!(label.multiclass, label.violated[0].criterion.class());
}
