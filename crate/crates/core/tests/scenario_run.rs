use std::path::Path;

use eikcouple::scenario::{run_scenario, PhysicsConfig, RunSummary, ScenarioConfig, ScenarioError};

const SMALL: &str = r#"
output_dir = "out"

[mesh]
kind = "slab"
dim = 2
lengths = [0.02, 0.01]
divisions = [40, 20]

[network]
kind = "tree"
depth = 2
segment_length = 0.004
branch_angle_deg = 40.0
root = [0.01, 0.001, 0.0]
length_ratio = 0.7
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_scenario(&write_config(dir.path(), SMALL)).unwrap();
    let out = dir.path().join("out");

    let activation = rows(&out.join("activation.csv"));
    assert_eq!(activation[0], "vertex,x,y,z,u_ms");
    assert_eq!(activation.len(), 1 + 41 * 21);

    let pmj = rows(&out.join("pmj_classification.csv"));
    assert_eq!(pmj[0], "iteration,pmj_id,terminal,vertex,u_p_ms,u_m_ms,type");
    assert_eq!(pmj.len(), 1 + 4 * summary.iterations);
    assert!(pmj[1..].iter().all(|r| r.ends_with(",OO")));

    let network = rows(&out.join("network_activation.csv"));
    assert_eq!(network.len(), 1 + 7);
    assert!(network[1].ends_with(",0,avn"));

    let vtk = std::fs::read_to_string(out.join("activation.vtk")).unwrap();
    assert!(vtk.contains("SCALARS activation_time_ms"));

    let text = std::fs::read_to_string(out.join("summary.toml")).unwrap();
    let back: RunSummary = toml::from_str(&text).unwrap();
    assert_eq!(back.eat_ms, summary.eat_ms);
    assert_eq!(back.counts.oo, 4);
    assert!(summary.tat_ms > summary.mean_ms && summary.mean_ms > summary.eat_ms);
}

#[test]
fn echoed_config_carries_default_physics() {
    let dir = tempfile::tempdir().unwrap();
    run_scenario(&write_config(dir.path(), SMALL)).unwrap();
    let echoed = ScenarioConfig::load(&dir.path().join("out/effective_config.toml")).unwrap();
    assert_eq!(echoed.physics, PhysicsConfig::default());
    let p = echoed.physics;
    assert_eq!([p.sigma_f, p.sigma_s, p.sigma_n], [1.00e-4, 0.44e-4, 0.11e-4]);
    assert_eq!([p.c_f, p.c_p, p.d_o, p.d_a], [60.0, 4.0, 10e-3, 2e-3]);
}

#[test]
fn repeated_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    run_scenario(&cfg).unwrap();
    let first = std::fs::read(dir.path().join("out/activation.csv")).unwrap();
    run_scenario(&cfg).unwrap();
    let second = std::fs::read(dir.path().join("out/activation.csv")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn input_errors_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = format!("{SMALL}\n[fibers]\npreset = \"file\"\npath = \"nowhere.txt\"\n");
    let err = run_scenario(&write_config(dir.path(), &missing)).unwrap_err();
    assert!(matches!(&err, ScenarioError::Validation { field, .. } if field == "fibers.path"));
    assert_eq!(err.exit_code(), 2);

    let typo = SMALL.replace("branch_angle_deg", "branch_angel_deg");
    let err = run_scenario(&write_config(dir.path(), &typo)).unwrap_err();
    assert!(matches!(err, ScenarioError::Parse { .. }));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn solver_failures_map_to_exit_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let strict = format!("{SMALL}\n[solver]\nnewton_max_iter = 1\nnewton_tol = 1e-15\n");
    let err = run_scenario(&write_config(dir.path(), &strict)).unwrap_err();
    assert!(!err.is_validation(), "{err}");
    assert_eq!(err.exit_code(), 3);
}
