//! Scenario configuration files (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::eikonal::{
    ConductivityModel, InitialField, SolverMode, SolverOptions, StimulusOrigin,
};
use crate::krylov::KrylovOptions;
use crate::network::TreeSpec;

/// Full description of a run. Every field has a default, so an empty file
/// is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Seconds; the AV node fires at this time and defines the time origin.
    pub avn_time: f64,
    /// Network edge indices to remove.
    pub blocks: Vec<usize>,
    /// Seed for randomized network construction.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub mesh: MeshConfig,
    pub network: NetworkConfig,
    pub fibers: FiberConfig,
    pub physics: PhysicsConfig,
    pub solver: SolverConfig,
    pub coupling: CouplingConfig,
    pub sources: Vec<SourceConfig>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            avn_time: 0.0,
            blocks: Vec::new(),
            seed: 0,
            output_dir: PathBuf::from("output"),
            mesh: MeshConfig::default(),
            network: NetworkConfig::default(),
            fibers: FiberConfig::default(),
            physics: PhysicsConfig::default(),
            solver: SolverConfig::default(),
            coupling: CouplingConfig::default(),
            sources: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeshConfig {
    /// Structured box `[0, L_0] x ... x [0, L_{dim-1}]`, meters.
    Slab {
        dim: usize,
        lengths: Vec<f64>,
        divisions: Vec<usize>,
    },
    File {
        path: PathBuf,
        /// `legacy-vtk-ascii` or `custom-text`; guessed from the extension
        /// when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        format: Option<String>,
    },
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig::Slab {
            dim: 2,
            lengths: vec![0.06, 0.03],
            divisions: vec![150, 75],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NetworkConfig {
    Tree(TreeConfig),
    File { path: PathBuf },
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig::Tree(TreeConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    pub depth: usize,
    pub segment_length: f64,
    pub branch_angle_deg: f64,
    pub root: [f64; 3],
    pub direction: [f64; 3],
    pub normal: [f64; 3],
    pub length_ratio: f64,
    pub jitter: f64,
    /// Overrides the scenario seed for this tree.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            depth: 4,
            segment_length: 0.012,
            branch_angle_deg: 50.0,
            root: [0.03, 0.003, 0.0],
            direction: [0.0, 1.0, 0.0],
            normal: [0.0, 0.0, 1.0],
            length_ratio: 0.6,
            jitter: 0.0,
            seed: None,
        }
    }
}

impl TreeConfig {
    pub fn to_spec(&self, scenario_seed: u64, c_p: f64) -> TreeSpec {
        TreeSpec {
            depth: self.depth,
            segment_length: self.segment_length,
            branch_angle: self.branch_angle_deg.to_radians(),
            root: self.root,
            direction: self.direction,
            normal: self.normal,
            length_ratio: self.length_ratio,
            jitter: self.jitter,
            seed: self.seed.unwrap_or(scenario_seed),
            conduction_velocity: c_p,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FiberConfig {
    /// Fibers along x, sheets along y, normals along z.
    #[default]
    AxisAligned,
    /// One line per cell: `f_x f_y f_z s_x s_y s_z n_x n_y n_z`.
    File { path: PathBuf },
}

/// Physical parameters; defaults are the standard human-ventricle values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    /// m^2/s
    pub sigma_f: f64,
    /// m^2/s
    pub sigma_s: f64,
    /// m^2/s
    pub sigma_n: f64,
    pub chi_m_c_m: f64,
    /// s^(-1/2)
    pub c_f: f64,
    /// Network conduction velocity, m/s. Applies to file networks too.
    pub c_p: f64,
    /// Orthodromic junction delay, seconds.
    pub d_o: f64,
    /// Antidromic junction delay, seconds.
    pub d_a: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        let m = ConductivityModel::default();
        PhysicsConfig {
            sigma_f: m.sigma_f,
            sigma_s: m.sigma_s,
            sigma_n: m.sigma_n,
            chi_m_c_m: m.chi_m_c_m,
            c_f: m.c_f,
            c_p: 4.0,
            d_o: 10e-3,
            d_a: 2e-3,
        }
    }
}

impl PhysicsConfig {
    pub fn model(&self) -> ConductivityModel {
        ConductivityModel {
            sigma_f: self.sigma_f,
            sigma_s: self.sigma_s,
            sigma_n: self.sigma_n,
            chi_m_c_m: self.chi_m_c_m,
            c_f: self.c_f,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub mode: SolverMode,
    /// Seconds.
    pub dt: f64,
    pub bdf_order: u8,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub divergence_window: usize,
    /// Seconds.
    pub steady_tol: f64,
    pub max_pseudo_steps: usize,
    pub grad_regularization: f64,
    /// Uniform initial field in seconds; by default the march starts just
    /// above the earliest stimulus.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_init: Option<f64>,
    pub krylov_tol: f64,
    pub krylov_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        SolverConfig {
            mode: o.mode,
            dt: o.dt,
            bdf_order: o.bdf_order,
            newton_tol: o.newton_tol,
            newton_max_iter: o.newton_max_iter,
            divergence_window: o.divergence_window,
            steady_tol: o.steady_tol,
            max_pseudo_steps: o.max_pseudo_steps,
            grad_regularization: o.grad_regularization,
            u_init: None,
            krylov_tol: o.krylov.rel_tol,
            krylov_max_iter: o.krylov.max_iter,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            dt: self.dt,
            bdf_order: self.bdf_order,
            newton_tol: self.newton_tol,
            newton_max_iter: self.newton_max_iter,
            divergence_window: self.divergence_window,
            steady_tol: self.steady_tol,
            max_pseudo_steps: self.max_pseudo_steps,
            grad_regularization: self.grad_regularization,
            initial: self.u_init.map_or(InitialField::BelowEarliest, InitialField::Constant),
            mode: self.mode,
            krylov: KrylovOptions {
                rel_tol: self.krylov_tol,
                max_iter: self.krylov_max_iter,
                ..KrylovOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingConfig {
    pub n_max: usize,
    pub early_stop: bool,
    /// Meters; defaults to twice the average mesh edge length.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snap_radius: Option<f64>,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        CouplingConfig {
            n_max: 3,
            early_stop: true,
            snap_radius: None,
        }
    }
}

/// Spherical muscular stimulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub center: [f64; 3],
    /// Meters.
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Seconds.
    pub time: f64,
    #[serde(default = "default_tag")]
    pub tag: StimulusOrigin,
}

fn default_radius() -> f64 {
    0.5e-3
}

fn default_tag() -> StimulusOrigin {
    StimulusOrigin::Ectopic
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        field: field.to_string(),
        message: message.into(),
    }
}

fn positive(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

impl ScenarioConfig {
    /// Parses a configuration file and resolves relative paths against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            ScenarioError::Parse { message, .. } => ScenarioError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse {
            path: PathBuf::new(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let MeshConfig::File { path, .. } = &mut self.mesh {
            fix(path);
        }
        if let NetworkConfig::File { path } = &mut self.network {
            fix(path);
        }
        if let FiberConfig::File { path } = &mut self.fibers {
            fix(path);
        }
    }

    /// Checks values and that referenced files exist. Errors name the
    /// offending field.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !self.avn_time.is_finite() {
            return Err(invalid("avn_time", "must be finite"));
        }
        match &self.mesh {
            MeshConfig::Slab {
                dim,
                lengths,
                divisions,
            } => {
                if !(1..=3).contains(dim) {
                    return Err(invalid("mesh.dim", "must be 1, 2 or 3"));
                }
                if lengths.len() != *dim || lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
                    return Err(invalid("mesh.lengths", format!("need {dim} positive lengths")));
                }
                if divisions.len() != *dim || divisions.contains(&0) {
                    return Err(invalid("mesh.divisions", format!("need {dim} positive divisions")));
                }
            }
            MeshConfig::File { path, format } => {
                if !path.is_file() {
                    return Err(invalid("mesh.path", format!("{} does not exist", path.display())));
                }
                if let Some(f) = format {
                    f.parse::<crate::mesh::io::MeshFormat>()
                        .map_err(|e| invalid("mesh.format", e))?;
                }
            }
        }
        match &self.network {
            NetworkConfig::Tree(t) => {
                if t.depth == 0 || t.depth > 20 {
                    return Err(invalid("network.depth", "must lie in 1..=20"));
                }
                positive("network.segment_length", t.segment_length)?;
                positive("network.length_ratio", t.length_ratio)?;
                if !(0.0..1.0).contains(&t.jitter) {
                    return Err(invalid("network.jitter", "must lie in [0, 1)"));
                }
            }
            NetworkConfig::File { path } => {
                if !path.is_file() {
                    return Err(invalid("network.path", format!("{} does not exist", path.display())));
                }
            }
        }
        if let FiberConfig::File { path } = &self.fibers {
            if !path.is_file() {
                return Err(invalid("fibers.path", format!("{} does not exist", path.display())));
            }
        }
        let p = &self.physics;
        for (name, v) in [
            ("physics.sigma_f", p.sigma_f),
            ("physics.sigma_s", p.sigma_s),
            ("physics.sigma_n", p.sigma_n),
            ("physics.chi_m_c_m", p.chi_m_c_m),
            ("physics.c_f", p.c_f),
            ("physics.c_p", p.c_p),
            ("physics.d_o", p.d_o),
            ("physics.d_a", p.d_a),
        ] {
            positive(name, v)?;
        }
        if !(p.sigma_f >= p.sigma_s && p.sigma_s >= p.sigma_n) {
            return Err(invalid("physics", "need sigma_f >= sigma_s >= sigma_n"));
        }
        if p.d_o <= p.d_a {
            return Err(invalid("physics.d_o", "must exceed physics.d_a"));
        }
        self.solver
            .options()
            .validate()
            .map_err(|e| invalid("solver", e.to_string()))?;
        if self.coupling.n_max == 0 {
            return Err(invalid("coupling.n_max", "must be at least 1"));
        }
        if let Some(r) = self.coupling.snap_radius {
            positive("coupling.snap_radius", r)?;
        }
        for (i, s) in self.sources.iter().enumerate() {
            if s.center.iter().any(|x| !x.is_finite()) || !s.time.is_finite() {
                return Err(invalid(&format!("sources[{i}]"), "center and time must be finite"));
            }
            positive(&format!("sources[{i}].radius"), s.radius)?;
            if s.tag == StimulusOrigin::Pmj {
                return Err(invalid(
                    &format!("sources[{i}].tag"),
                    "junction stimuli come from the network; use ectopic or lead",
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ScenarioConfig::from_toml("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.physics.sigma_s, 0.44e-4);
        assert_eq!(cfg.physics.d_a, 2e-3);
        cfg.validate().unwrap();
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = ScenarioConfig::default();
        cfg.sources.push(SourceConfig {
            center: [0.01, 0.02, 0.0],
            radius: 1e-3,
            time: -0.03,
            tag: StimulusOrigin::Ectopic,
        });
        cfg.solver.u_init = Some(0.2);
        let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn validation_names_fields() {
        let cfg = ScenarioConfig::from_toml("[physics]\nd_o = 0.001\n").unwrap();
        match cfg.validate() {
            Err(ScenarioError::Validation { field, .. }) => assert_eq!(field, "physics.d_o"),
            other => panic!("unexpected {other:?}"),
        }
        let cfg = ScenarioConfig::from_toml("[[sources]]\ncenter = [0, 0, 0]\ntime = 0.0\nradius = -1.0\n")
            .unwrap();
        match cfg.validate() {
            Err(ScenarioError::Validation { field, .. }) => assert_eq!(field, "sources[0].radius"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            ScenarioConfig::from_toml("[physics]\nsigma_x = 1.0\n"),
            Err(ScenarioError::Parse { .. })
        ));
    }
}
