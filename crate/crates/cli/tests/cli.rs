use std::path::Path;
use std::process::{Command, Output};

fn fockcage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fockcage"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn list_shows_the_registry() {
    let o = fockcage(&["list"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().count() > 14);
    assert!(text.contains("plaquette-2d-fluxpi"));
    assert!(text.contains("2D caging"));
}

#[test]
fn empty_registry_lists_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let o = fockcage(&["--registry-dir", dir.path().to_str().unwrap(), "list"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
}

#[test]
fn run_writes_caged_series_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pi.csv");
    let o = fockcage(&["run", "--scenario", "plaquette-2d-fluxpi", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "time_us,P_site_1,P_site_2,P_site_3,P_site_4");
    let p3 = column(&csv, "P_site_3");
    assert_eq!(p3.len(), 501);
    assert!(p3.iter().all(|&p| p <= 1e-10));
    let metrics = std::fs::read_to_string(dir.path().join("pi.metrics.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&metrics).unwrap();
    assert_eq!(doc["format"], "fockcage.metrics/v1");
    assert!(doc["metrics"]["max_forbidden"].as_f64().unwrap() <= 1e-10);
    assert_eq!(doc["provenance"]["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn json_output_and_amplitudes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cage.json");
    let o = fockcage(&[
        "run",
        "--scenario",
        "3d-cage-superposition",
        "--format",
        "json",
        "--amplitudes",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["format"], "fockcage.series/v1");
    assert_eq!(doc["amplitudes"][0][1][0].as_f64().unwrap(), std::f64::consts::FRAC_1_SQRT_2);
    assert!(doc["projected"]["P_z"].as_array().unwrap().iter().all(|v| v.as_f64().unwrap() < 1e-10));
}

#[test]
fn zero_horizon_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let o = fockcage(&[
        "run",
        "--scenario",
        "plaquette-2d-fluxpi",
        "--override",
        "horizon=0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("horizon"));
    assert!(!out.exists());
}

#[test]
fn unknown_scenario_and_bad_override() {
    assert_eq!(fockcage(&["validate", "--scenario", "nope"]).status.code(), Some(2));
    let o = fockcage(&["validate", "--scenario", "plaquette-2d-flux0", "--override", "graph.jnn=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("graph.jnn"));
    let ok = fockcage(&["validate", "--scenario", "plaquette-2d-flux0"]);
    assert!(ok.status.success());
}

#[test]
fn numerical_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let o = fockcage(&[
        "run",
        "--scenario",
        "floquet-swap",
        "--override",
        "tolerances.max_steps=100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("t ="));
}

#[test]
fn shot_sampled_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = fockcage(&[
            "run",
            "--scenario",
            "plaquette-2d-fluxpi-spam",
            "--override",
            "shots=1000",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        (
            std::fs::read(&out).unwrap(),
            std::fs::read(dir.path().join(name.replace(".csv", ".metrics.json"))).unwrap(),
        )
    };
    let a = run("a.csv");
    let b = run("b.csv");
    assert_eq!(a, b);
    let text = String::from_utf8(a.0).unwrap();
    assert!(text.lines().next().unwrap().contains("M_site_3"));
}

#[test]
fn scenario_files_resolve_relative_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let graph = fockcage::fsl::named_configuration("plaquette-2d", &Default::default()).unwrap();
    std::fs::write(dir.path().join("g.json"), graph.to_json()).unwrap();
    let scenario = r#"
schema = "fockcage.scenario/v1"
name = "from-file"
horizon = 0.05
sample_step = 0.001
[graph]
file = "g.json"
[initial_state]
site = 2
"#;
    let path = dir.path().join("s.toml");
    std::fs::write(&path, scenario).unwrap();
    let out = dir.path().join("s.csv");
    let o = fockcage(&["run", "--scenario", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(column(&std::fs::read_to_string(&out).unwrap(), "P_site_2")[0], 1.0);
}

fn index_rows(dir: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(dir.join("index.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn sweep_layout_and_order() {
    let dir = tempfile::tempdir().unwrap();
    let single = dir.path().join("single");
    let o = fockcage(&[
        "sweep",
        "--scenario",
        "plaquette-2d-flux0",
        "--axis",
        "graph.j_nn_mhz",
        "--range",
        "10:10:1",
        "--out",
        single.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csvs = std::fs::read_dir(&single)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("point_"))
        .filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "csv")
        .count();
    assert_eq!(csvs, 1);

    let desc = dir.path().join("desc");
    let o = fockcage(&[
        "sweep",
        "--scenario",
        "pseudo3d-flux0-detuned",
        "--axis",
        "disorder.site_detuning.2",
        "--range",
        "10:0:3",
        "--jobs",
        "2",
        "--out",
        desc.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = index_rows(&desc);
    let axis: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(axis, vec![10.0, 5.0, 0.0]);
    assert_eq!(rows[0][3], "point_000.csv");
}

#[test]
fn sweep_into_unwritable_location_fails() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    std::fs::write(&file, "x").unwrap();
    let target = file.join("sub");
    let o = fockcage(&[
        "sweep",
        "--scenario",
        "plaquette-2d-flux0",
        "--axis",
        "graph.j_nn_mhz",
        "--range",
        "1,2",
        "--out",
        target.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bessel_scan_index_traces_the_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let o = fockcage(&[
        "sweep",
        "--scenario",
        "floquet-swap",
        "--axis",
        "swap.ratio",
        "--range",
        "0.8:2.6:4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = index_rows(dir.path());
    assert_eq!(rows.len(), 4);
    for (k, row) in rows.iter().enumerate() {
        let metrics: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join(format!("point_{k:03}.metrics.json"))).unwrap(),
        )
        .unwrap();
        let predicted = metrics["metrics"]["j_predicted_mhz"].as_f64().unwrap();
        let measured: f64 = row[2].parse().unwrap();
        assert!((measured - predicted).abs() <= 0.05 * predicted, "{row:?} vs {predicted}");
    }
}
