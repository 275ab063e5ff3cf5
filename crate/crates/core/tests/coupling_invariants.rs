use std::collections::HashSet;

use eikcouple::coupling::PmjType;
use eikcouple::scenario::{Scenario, ScenarioConfig};

const BLOCKED: &str = r#"
blocks = [0]

[mesh]
kind = "slab"
dim = 2
lengths = [0.03, 0.015]
divisions = [60, 30]

[network]
kind = "tree"
depth = 3
segment_length = 0.006
branch_angle_deg = 50.0
root = [0.015, 0.0015, 0.0]
length_ratio = 0.6

[[sources]]
center = [0.028, 0.013, 0.0]
time = -0.005
"#;

#[test]
fn final_junctions_respect_their_delays() {
    let sc = Scenario::build(ScenarioConfig::from_toml(BLOCKED).unwrap()).unwrap();
    let out = sc.run().unwrap();
    let tol = sc.config.solver.steady_tol;
    let reg = &out.state.registry;
    let counts = reg.counts();
    assert!(counts.antidromic >= 1, "{counts:?}");

    let vertices: HashSet<usize> = reg.entries().iter().map(|e| e.vertex).collect();
    assert_eq!(vertices.len(), reg.len());

    for e in reg.entries() {
        let u_p = out.state.u_p.times[e.terminal];
        let u_m = out.state.u_m[e.vertex];
        match e.pmj_type {
            PmjType::OrthodromicFromAvn | PmjType::OrthodromicFromAntidromic => {
                assert!(u_m <= u_p + e.d_o + tol, "{e:?}")
            }
            PmjType::Antidromic => assert!(u_p <= u_m + e.d_a + 1e-12, "{e:?}"),
            PmjType::Collision => {}
        }
    }
}

#[test]
fn disabling_early_stop_runs_every_iteration() {
    let mut cfg = ScenarioConfig::from_toml(BLOCKED).unwrap();
    cfg.coupling.early_stop = false;
    cfg.coupling.n_max = 3;
    let out = Scenario::build(cfg).unwrap().run().unwrap();
    assert_eq!(out.state.iterations, 3);
    assert_eq!(out.state.history.len(), 3);
}
