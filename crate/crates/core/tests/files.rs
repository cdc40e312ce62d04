//! Scenario, graph and readout files working together from disk.

use fockcage::device::DeviceSpec;
use fockcage::fsl::{named_configuration, ConfigParams, FslGraph, Regime};
use fockcage::measurement::ReadoutMatrix;
use fockcage::scenarios::{run_scenario, run_scenario_in, Registry, ScenarioDocument};

fn caged_plaquette() -> FslGraph {
    named_configuration(
        "plaquette-2d",
        &ConfigParams {
            regime: Regime::Localization,
            j_nn_mhz: Some(18.4),
            ..Default::default()
        },
    )
    .unwrap()
}

#[test]
fn graph_and_readout_files_match_builtin_sources() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("g.json"), caged_plaquette().to_json()).unwrap();
    let readout = ReadoutMatrix::from_device(&DeviceSpec::four_qutrit_plaquette()).unwrap();
    std::fs::write(dir.path().join("r.txt"), readout.to_text()).unwrap();
    assert_eq!(ReadoutMatrix::load(&dir.path().join("r.txt")).unwrap().matrix(), readout.matrix());

    let text = r#"
schema = "fockcage.scenario/v1"
name = "files"
horizon = 0.2
sample_step = 0.002
[graph]
file = "g.json"
[initial_state]
site = 1
[spam]
file = "r.txt"
"#;
    std::fs::write(dir.path().join("s.toml"), text).unwrap();
    let doc = ScenarioDocument::load(&dir.path().join("s.toml")).unwrap();
    let from_files = run_scenario_in(&doc.config().unwrap(), doc.base_dir()).unwrap();

    let builtin = Registry::builtin()
        .document("plaquette-2d-fluxpi-spam")
        .unwrap()
        .with_overrides(&["shots=false".into()])
        .map(|d| d.config().unwrap());
    // `shots` is an integer; a boolean must be rejected rather than coerced.
    assert!(builtin.is_err());

    let mut cfg = Registry::builtin().get("plaquette-2d-fluxpi-spam").unwrap();
    cfg.shots = None;
    let reference = run_scenario(&cfg).unwrap();
    let a = from_files.measured.unwrap();
    let b = reference.measured.unwrap();
    assert_eq!(a.populations.len(), b.populations.len());
    for (x, y) in a.populations.iter().zip(&b.populations) {
        for (p, q) in x.iter().zip(y) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}

#[test]
fn missing_files_are_reported_by_path() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
schema = "fockcage.scenario/v1"
name = "missing"
[graph]
file = "absent.json"
[initial_state]
site = 1
"#;
    std::fs::write(dir.path().join("s.toml"), text).unwrap();
    let doc = ScenarioDocument::load(&dir.path().join("s.toml")).unwrap();
    let err = run_scenario_in(&doc.config().unwrap(), doc.base_dir()).unwrap_err();
    assert!(err.to_string().contains("absent.json"), "{err}");
    assert!(!err.is_numerical());
}

#[test]
fn every_builtin_scenario_validates_and_runs() {
    let reg = Registry::builtin();
    for e in reg.entries() {
        let cfg = reg.get(&e.name).unwrap();
        assert!(!cfg.reproduces.is_empty(), "{}", e.name);
        let bundle = run_scenario(&cfg).unwrap();
        assert!(bundle.metrics.values().all(|v| v.is_finite()), "{}", e.name);
        assert!(bundle.trajectory.max_norm_error() < 1e-6, "{}", e.name);
    }
}
