use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RunOutput, Scenario, ScenarioError};
use crate::coupling::{NetworkOrigin, PmjCounts, PmjRegistry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mean_ms: f64,
    /// Population standard deviation.
    pub std_ms: f64,
    /// Total activation time (latest vertex).
    pub tat_ms: f64,
    /// Earliest activation time.
    pub eat_ms: f64,
    pub iterations: usize,
    pub fixed_point: bool,
    pub wall_clock_s: f64,
    pub counts: PmjCounts,
}

/// Milliseconds with nine significant digits, `inf` when unreached.
pub fn format_ms(t_seconds: f64) -> String {
    let ms = round_ms(t_seconds);
    if ms.is_finite() {
        format!("{ms}")
    } else {
        "inf".into()
    }
}

fn round_ms(t_seconds: f64) -> f64 {
    let ms = t_seconds * 1e3;
    if !ms.is_finite() {
        return ms;
    }
    let v: f64 = format!("{ms:.8e}").parse().expect("float formatting round-trips");
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

/// Statistics of the muscle activation in milliseconds. Fails if any vertex
/// was never reached.
pub fn summarize(u_m: &[f64], registry: &PmjRegistry) -> Result<RunSummary, ScenarioError> {
    let count = u_m.iter().filter(|t| !t.is_finite()).count();
    if count > 0 || u_m.is_empty() {
        return Err(ScenarioError::Unreached { count });
    }
    let n = u_m.len() as f64;
    let mean = u_m.iter().sum::<f64>() / n;
    let var = u_m.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    let min = u_m.iter().copied().fold(f64::INFINITY, f64::min);
    let max = u_m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RunSummary {
        mean_ms: round_ms(mean),
        std_ms: round_ms(var.sqrt()),
        tat_ms: round_ms(max),
        eat_ms: round_ms(min),
        iterations: 0,
        fixed_point: false,
        wall_clock_s: 0.0,
        counts: registry.counts(),
    })
}

fn save(dir: &Path, name: &str, contents: &str) -> Result<(), ScenarioError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| ScenarioError::Io { path, source })
}

/// Writes the effective configuration, activation maps, junction history,
/// network times and the summary into the configured output directory.
pub fn write_outputs(scenario: &Scenario, out: &RunOutput) -> Result<(), ScenarioError> {
    let dir = &scenario.config.output_dir;
    std::fs::create_dir_all(dir).map_err(|source| ScenarioError::Io {
        path: dir.clone(),
        source,
    })?;
    let mesh = &scenario.mesh;
    let u_m = &out.state.u_m;

    save(dir, "effective_config.toml", &scenario.config.to_toml())?;

    let ms: Vec<f64> = u_m.iter().map(|&t| round_ms(t)).collect();
    let vtk = crate::mesh::io::write_vtk(mesh, &[("activation_time_ms", &ms)]);
    save(dir, "activation.vtk", &vtk)?;

    let mut csv = String::from("vertex,x,y,z,u_ms\n");
    for (v, p) in mesh.vertices().iter().enumerate() {
        let _ = writeln!(csv, "{v},{},{},{},{}", p[0], p[1], p[2], format_ms(u_m[v]));
    }
    save(dir, "activation.csv", &csv)?;

    let mut csv = String::from("iteration,pmj_id,terminal,vertex,u_p_ms,u_m_ms,type\n");
    for (it, reg) in out.state.history.iter().enumerate() {
        for (id, e) in reg.entries().iter().enumerate() {
            let _ = writeln!(
                csv,
                "{},{id},{},{},{},{},{}",
                it + 1,
                e.terminal,
                e.vertex,
                format_ms(e.u_p),
                format_ms(e.u_m),
                e.pmj_type
            );
        }
    }
    save(dir, "pmj_classification.csv", &csv)?;

    let u_p = &out.state.u_p;
    let mut csv = String::from("node,x,y,z,u_ms,origin\n");
    for (i, p) in scenario.network.nodes().iter().enumerate() {
        let origin = match u_p.origin[i].map(|k| out.state.network_origins[k]) {
            Some(NetworkOrigin::Avn) => "avn".to_string(),
            Some(NetworkOrigin::Pmj(k)) => format!("pmj:{k}"),
            None => "none".to_string(),
        };
        let _ = writeln!(
            csv,
            "{i},{},{},{},{},{origin}",
            p[0],
            p[1],
            p[2],
            format_ms(u_p.times[i])
        );
    }
    save(dir, "network_activation.csv", &csv)?;

    let summary = toml::to_string(&out.summary).expect("summary serializes");
    save(dir, "summary.toml", &summary)
}
