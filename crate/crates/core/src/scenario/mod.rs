//! Scenario files, end-to-end runs and their output artifacts.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

pub use config::{
    CouplingConfig, FiberConfig, MeshConfig, NetworkConfig, PhysicsConfig, ScenarioConfig,
    SolverConfig, SourceConfig, TreeConfig,
};
pub use output::{format_ms, summarize, write_outputs, RunSummary};

use crate::coupling::{couple, match_pmjs, CouplingError, CouplingParams, CouplingState, PmjRegistry};
use crate::eikonal::{build_conductivity, EikonalError, MuscleStimulusSet};
use crate::mesh::io::{load_mesh, MeshFormat};
use crate::mesh::{build_structured_slab, CellTensor, FiberField, MeshError, SimplicialMesh};
use crate::network::{build_synthetic_tree, load_network, ConductionNetwork, NetworkError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Physics(#[from] EikonalError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error("{count} mesh vertices were never activated")]
    Unreached { count: usize },
}

impl ScenarioError {
    /// Whether the error comes from the inputs rather than from a solve.
    pub fn is_validation(&self) -> bool {
        match self {
            ScenarioError::Io { .. }
            | ScenarioError::Parse { .. }
            | ScenarioError::Validation { .. }
            | ScenarioError::Mesh(_)
            | ScenarioError::Network(_)
            | ScenarioError::Physics(_) => true,
            ScenarioError::Coupling(e) => matches!(
                e,
                CouplingError::InvalidDelays { .. }
                    | CouplingError::TerminalTooFar { .. }
                    | CouplingError::NoFreeVertex(_)
                    | CouplingError::ZeroIterations
                    | CouplingError::Mesh(_)
            ),
            ScenarioError::Unreached { .. } => false,
        }
    }

    /// Process exit code: 2 for bad input, 3 for solver failures.
    pub fn exit_code(&self) -> i32 {
        if self.is_validation() {
            2
        } else {
            3
        }
    }
}

/// Inputs of a run, built and checked from a configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub mesh: SimplicialMesh,
    /// Network with blocks applied and the configured conduction velocity.
    pub network: ConductionNetwork,
    pub fibers: FiberField,
    pub sigma: Vec<CellTensor>,
    pub registry: PmjRegistry,
    pub muscular: MuscleStimulusSet,
}

pub fn build_mesh(cfg: &MeshConfig) -> Result<SimplicialMesh, ScenarioError> {
    Ok(match cfg {
        MeshConfig::Slab {
            dim,
            lengths,
            divisions,
        } => build_structured_slab(*dim, lengths, divisions)?,
        MeshConfig::File { path, format } => {
            let format = match format {
                Some(f) => f.parse().map_err(|message| ScenarioError::Validation {
                    field: "mesh.format".into(),
                    message,
                })?,
                None => MeshFormat::from_path(path),
            };
            load_mesh(path, format)?
        }
    })
}

pub fn build_network(cfg: &ScenarioConfig) -> Result<ConductionNetwork, ScenarioError> {
    let net = match &cfg.network {
        NetworkConfig::Tree(t) => build_synthetic_tree(&t.to_spec(cfg.seed, cfg.physics.c_p))?,
        NetworkConfig::File { path } => load_network(path)?.with_velocity(cfg.physics.c_p)?,
    };
    if cfg.blocks.is_empty() {
        Ok(net)
    } else {
        Ok(net.apply_blocks(&cfg.blocks)?)
    }
}

/// Reads one `f s n` triad (nine numbers) per line, `#` comments allowed.
pub fn load_fibers(path: &Path, mesh: &SimplicialMesh) -> Result<FiberField, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |line: usize, message: String| ScenarioError::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let mut triads = Vec::with_capacity(mesh.num_cells());
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| parse_err(i + 1, format!("`{t}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if nums.len() != 9 {
            return Err(parse_err(i + 1, format!("expected 9 numbers, found {}", nums.len())));
        }
        let mut t = [[0.0; 3]; 3];
        for (k, v) in nums.into_iter().enumerate() {
            t[k / 3][k % 3] = v;
        }
        triads.push(t);
    }
    if triads.len() != mesh.num_cells() {
        return Err(ScenarioError::Validation {
            field: "fibers.path".into(),
            message: format!("{} triads for {} cells", triads.len(), mesh.num_cells()),
        });
    }
    Ok(FiberField::new(mesh.dim(), triads)?)
}

impl Scenario {
    pub fn build(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        config.validate()?;
        let mesh = build_mesh(&config.mesh)?;
        let network = build_network(&config)?;
        let fibers = match &config.fibers {
            FiberConfig::AxisAligned => FiberField::axis_aligned(&mesh),
            FiberConfig::File { path } => load_fibers(path, &mesh)?,
        };
        let sigma = build_conductivity(&config.physics.model(), &fibers)?;
        let registry = match_pmjs(
            &network,
            &mesh,
            config.physics.d_o,
            config.physics.d_a,
            config.coupling.snap_radius,
        )?;
        let mut muscular = MuscleStimulusSet::new();
        for s in &config.sources {
            muscular.add_sphere(&mesh, &s.center, s.radius, s.time, s.tag);
        }
        Ok(Scenario {
            config,
            mesh,
            network,
            fibers,
            sigma,
            registry,
            muscular,
        })
    }

    pub fn params(&self) -> CouplingParams {
        CouplingParams {
            c_f: self.config.physics.c_f,
            avn_time: self.config.avn_time,
            n_max: self.config.coupling.n_max,
            early_stop: self.config.coupling.early_stop,
            solver: self.config.solver.options(),
        }
    }

    pub fn run(&self) -> Result<RunOutput, ScenarioError> {
        let start = Instant::now();
        let state = couple(
            &self.network,
            &self.mesh,
            &self.sigma,
            &self.params(),
            &self.registry,
            &self.muscular,
        )?;
        let mut summary = summarize(&state.u_m, &state.registry)?;
        summary.iterations = state.iterations;
        summary.fixed_point = state.fixed_point;
        summary.wall_clock_s = start.elapsed().as_secs_f64();
        Ok(RunOutput { summary, state })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub state: CouplingState,
}

/// Loads, runs and writes every artifact of the scenario at `path`.
pub fn run_scenario(path: &Path) -> Result<RunSummary, ScenarioError> {
    let config = ScenarioConfig::load(path)?;
    run_config(config)
}

/// Runs an already loaded configuration and writes its artifacts into
/// `config.output_dir`.
pub fn run_config(config: ScenarioConfig) -> Result<RunSummary, ScenarioError> {
    let scenario = Scenario::build(config)?;
    log::info!(
        "mesh: {} vertices, {} cells; network: {} nodes, {} junctions",
        scenario.mesh.num_vertices(),
        scenario.mesh.num_cells(),
        scenario.network.num_nodes(),
        scenario.registry.len()
    );
    let out = scenario.run()?;
    write_outputs(&scenario, &out)?;
    Ok(out.summary)
}
