use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eikcouple::eikonal::SolverMode;
use eikcouple::mesh::io::{load_mesh, save, write_custom_text, write_vtk, MeshFormat};
use eikcouple::mesh::build_structured_slab;
use eikcouple::network::{build_synthetic_tree, load_network, write_network, TreeSpec};
use eikcouple::scenario::{run_config, Scenario, ScenarioConfig, ScenarioError};

#[derive(Parser)]
#[command(name = "eikcouple", version, about = "Coupled network/muscle activation-time solver")]
struct Cli {
    /// Worker threads for assembly (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Run {
        config: PathBuf,
        #[arg(long)]
        mode: Option<SolverMode>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Check a scenario without solving.
    Validate { config: PathBuf },
    /// Print mesh statistics.
    MeshInfo {
        path: PathBuf,
        #[arg(long)]
        format: Option<MeshFormat>,
    },
    /// Print network statistics.
    NetworkInfo { path: PathBuf },
    /// Write a structured simplicial slab (`.vtk` or custom text by extension).
    GenSlab {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Meters, one per dimension.
        #[arg(long, value_delimiter = ',', required = true)]
        lengths: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        divisions: Vec<usize>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write a synthetic binary tree network.
    GenTree {
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long, default_value_t = 5e-3)]
        segment_length: f64,
        #[arg(long, default_value_t = 35.0)]
        branch_angle_deg: f64,
        #[arg(long, default_value_t = 0.8)]
        length_ratio: f64,
        #[arg(long, value_delimiter = ',', default_value = "0,0,0")]
        root: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,0")]
        direction: Vec<f64>,
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4.0)]
        conduction_velocity: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

enum Failure {
    Input(String),
    Solver(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        if e.is_validation() {
            Failure::Input(e.to_string())
        } else {
            Failure::Solver(e.to_string())
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Input(e.to_string())
}

fn vec3(v: &[f64], name: &str) -> Result<[f64; 3], Failure> {
    match v {
        [x, y] => Ok([*x, *y, 0.0]),
        [x, y, z] => Ok([*x, *y, *z]),
        _ => Err(Failure::Input(format!("--{name} needs 2 or 3 components"))),
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    Ok(ScenarioConfig::load(path)?)
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run {
            config,
            mode,
            n_max,
            seed,
            output_dir,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(m) = mode {
                cfg.solver.mode = m;
            }
            if let Some(n) = n_max {
                cfg.coupling.n_max = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            let dir = cfg.output_dir.clone();
            let s = run_config(cfg)?;
            println!(
                "mean {} ms, std {} ms, TAT {} ms, EAT {} ms",
                s.mean_ms, s.std_ms, s.tat_ms, s.eat_ms
            );
            println!(
                "junctions: OO {} OA {} A {} C {}; {} iteration(s){}",
                s.counts.oo,
                s.counts.oa,
                s.counts.antidromic,
                s.counts.collision,
                s.iterations,
                if s.fixed_point { ", fixed point" } else { "" }
            );
            println!("wrote {} in {:.2} s", dir.display(), s.wall_clock_s);
        }
        Command::Validate { config } => {
            let sc = Scenario::build(load_config(&config)?)?;
            println!(
                "ok: {} vertices, {} cells, {} network nodes, {} junctions, {} muscular stimuli",
                sc.mesh.num_vertices(),
                sc.mesh.num_cells(),
                sc.network.num_nodes(),
                sc.registry.len(),
                sc.muscular.len()
            );
        }
        Command::MeshInfo { path, format } => {
            let format = format.unwrap_or_else(|| MeshFormat::from_path(&path));
            let mesh = load_mesh(&path, format).map_err(input)?;
            let (lo, hi) = mesh.bounding_box();
            println!("dimension      {}", mesh.dim());
            println!("vertices       {}", mesh.num_vertices());
            println!("cells          {}", mesh.num_cells());
            println!("measure        {:e}", mesh.total_measure());
            println!("mean edge      {:e}", mesh.average_edge_length());
            println!("bounding box   {lo:?} .. {hi:?}");
        }
        Command::NetworkInfo { path } => {
            let net = load_network(&path).map_err(input)?;
            println!("nodes          {}", net.num_nodes());
            println!("edges          {}", net.num_edges());
            println!("terminals      {}", net.terminals().len());
            println!("AV node        {}", net.avn());
            println!("total length   {:e}", net.total_length());
            println!("velocity       {}", net.conduction_velocity());
        }
        Command::GenSlab {
            dim,
            lengths,
            divisions,
            output,
        } => {
            let mesh = build_structured_slab(dim, &lengths, &divisions).map_err(input)?;
            let text = match MeshFormat::from_path(&output) {
                MeshFormat::LegacyVtk => write_vtk(&mesh, &[]),
                MeshFormat::CustomText => write_custom_text(&mesh),
            };
            save(&output, &text).map_err(input)?;
            println!("wrote {} ({} cells)", output.display(), mesh.num_cells());
        }
        Command::GenTree {
            depth,
            segment_length,
            branch_angle_deg,
            length_ratio,
            root,
            direction,
            jitter,
            seed,
            conduction_velocity,
            output,
        } => {
            let spec = TreeSpec {
                depth,
                segment_length,
                branch_angle: branch_angle_deg.to_radians(),
                root: vec3(&root, "root")?,
                direction: vec3(&direction, "direction")?,
                length_ratio,
                jitter,
                seed,
                conduction_velocity,
                ..TreeSpec::default()
            };
            let net = build_synthetic_tree(&spec).map_err(input)?;
            save(&output, &write_network(&net)).map_err(input)?;
            println!(
                "wrote {} ({} nodes, {} terminals)",
                output.display(),
                net.num_nodes(),
                net.terminals().len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(3)
        }
    }
}
