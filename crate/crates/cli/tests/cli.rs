use std::path::Path;
use std::process::{Command, Output};

fn eikcouple(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eikcouple"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SCENARIO: &str = r#"
output_dir = "out"

[mesh]
kind = "file"
path = "slab.vtk"

[network]
kind = "file"
path = "tree.txt"
"#;

#[test]
fn generated_inputs_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let o = eikcouple(
        &["gen-slab", "--lengths", "0.02,0.01", "--divisions", "40,20", "-o", "slab.vtk"],
        d,
    );
    assert!(o.status.success(), "{o:?}");
    let o = eikcouple(&["mesh-info", "slab.vtk"], d);
    assert!(stdout(&o).contains("cells          1600"), "{}", stdout(&o));

    let o = eikcouple(
        &[
            "gen-tree", "--depth", "2", "--segment-length", "0.004", "--root", "0.01,0.001",
            "-o", "tree.txt",
        ],
        d,
    );
    assert!(o.status.success(), "{o:?}");
    let o = eikcouple(&["network-info", "tree.txt"], d);
    assert!(stdout(&o).contains("terminals      4"), "{}", stdout(&o));

    std::fs::write(d.join("scenario.toml"), SCENARIO).unwrap();
    let o = eikcouple(&["validate", "scenario.toml"], d);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("4 junctions"));

    let o = eikcouple(
        &["--threads", "1", "run", "scenario.toml", "--n-max", "2", "--output-dir", "elsewhere"],
        d,
    );
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("OO 4 OA 0 A 0 C 0"), "{}", stdout(&o));
    for f in [
        "activation.vtk",
        "activation.csv",
        "pmj_classification.csv",
        "network_activation.csv",
        "summary.toml",
        "effective_config.toml",
    ] {
        assert!(d.join("elsewhere").join(f).is_file(), "missing {f}");
    }
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.toml"), "[physics]\nsigma_f = -1.0\n").unwrap();
    let o = eikcouple(&["validate", "bad.toml"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("physics.sigma_f"));

    let o = eikcouple(&["run", "missing.toml"], d);
    assert_eq!(o.status.code(), Some(2));

    let o = eikcouple(&["run", "bad.toml", "--mode", "fast"], d);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = r#"
[mesh]
kind = "slab"
dim = 2
lengths = [0.02, 0.01]
divisions = [40, 20]

[network]
kind = "tree"
depth = 2
segment_length = 0.004
root = [0.01, 0.001, 0.0]

[solver]
newton_max_iter = 1
newton_tol = 1e-15
"#;
    std::fs::write(d.join("strict.toml"), cfg).unwrap();
    let o = eikcouple(&["run", "strict.toml"], d);
    assert_eq!(o.status.code(), Some(3), "{o:?}");
}
