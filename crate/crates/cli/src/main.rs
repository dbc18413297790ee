use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use vortexlab::glmixed::{gl_run_with, GLConfig};
use vortexlab::harness::{
    builtin_scenario, builtin_scenarios, compare_tracks, field_sink, run_scenario, Scenario, ScenarioVortex,
};
use vortexlab::llg::{llg_run_with, LLGConfig};
use vortexlab::motion::{ode_integrate_with, MotionKind, OdeOptions, OdeState, QJump, DEFAULT_R_MIN};
use vortexlab::renorm::{grad_w, numeric_limit, renormalized_energy, ModelDomain, RenormalizedEnergyModel, WMethod};
use vortexlab::seed::{perturb_gl, perturb_llg, seed_gl_field, seed_vortex_field_with, Perturbation};
use vortexlab::trajectory::{RunStatus, Trajectory};
use vortexlab::{make_grid, BoundaryCondition, BoundaryData, Domain, Vortex, VortexError, VortexSet};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_PARTIAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "vortexlab",
    version,
    about = "Vortex dynamics in thin ferromagnetic films and mixed Ginzburg-Landau flows"
)]
struct Cli {
    /// Worker threads for the data-parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "vortexlab-out")]
    out: PathBuf,
    /// Seed for the random perturbations, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Landau-Lifshitz-Gilbert run from a JSON configuration.
    SimulateLlg(ConfigArg),
    /// Mixed Ginzburg-Landau run from a JSON configuration.
    SimulateGl(ConfigArg),
    /// Point-vortex motion law.
    Ode {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        config: PathBuf,
    },
    /// Renormalized energy and its gradient, printed as JSON.
    Renorm {
        #[arg(long, value_enum, default_value = "disk")]
        domain: DomainArg,
        #[arg(long, value_enum, default_value = "dirichlet")]
        bc: BcArg,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// JSON file with a list of `{"position": [x, y], "degree": d}`.
        #[arg(long)]
        vortices: PathBuf,
    },
    /// Distance between two recorded track sets.
    Compare {
        #[arg(long)]
        pde: PathBuf,
        #[arg(long, default_value = "")]
        pde_prefix: String,
        #[arg(long)]
        ode: PathBuf,
        #[arg(long, default_value = "")]
        ode_prefix: String,
        #[arg(long, default_value_t = 0.0)]
        r_min: f64,
    },
    /// Built-in or file-based PDE/ODE comparison sweeps.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
}

#[derive(Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Runs a built-in scenario by name or a scenario file.
    Run { scenario: String },
    /// Lists the built-in scenarios.
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Llg,
    Gl,
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Disk,
    Plane,
    Square,
}

#[derive(Clone, Copy, ValueEnum)]
enum BcArg {
    Dirichlet,
    Neumann,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    ClosedForm,
    NumericLimit,
}

/// Geometry and initial data shared by the two PDE run files; the solver
/// parameters sit beside them at the top level.
#[derive(Deserialize)]
struct Setup {
    domain: Domain,
    bc: BoundaryCondition,
    grid_size: usize,
    vortices: Vec<ScenarioVortex>,
    #[serde(default)]
    perturbation: Option<Perturbation>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "yes")]
    save_fields: bool,
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
struct LlgFile {
    #[serde(flatten)]
    config: LLGConfig,
    #[serde(flatten)]
    setup: Setup,
}

#[derive(Deserialize)]
struct GlFile {
    #[serde(flatten)]
    config: GLConfig,
    #[serde(flatten)]
    setup: Setup,
}

#[derive(Deserialize)]
struct OdeFile {
    vortices: Vec<Vortex>,
    alpha0: f64,
    model: RenormalizedEnergyModel,
    t_end: f64,
    #[serde(default = "default_tol")]
    tol: f64,
    #[serde(default)]
    r_min: Option<f64>,
    #[serde(default)]
    max_step: Option<f64>,
    #[serde(default)]
    jumps: Vec<QJump>,
}

fn default_tol() -> f64 {
    1e-10
}

#[derive(Serialize)]
struct RenormOutput {
    #[serde(rename = "W")]
    w: f64,
    #[serde(rename = "gradW")]
    grad_w: Vec<[f64; 2]>,
    method: WMethod,
    /// `(rho, excised energy - N pi log(1/rho))` of the numeric limit.
    rho_levels: Vec<(f64, f64)>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_PARTIAL),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<VortexError>() {
        Some(
            VortexError::SolverDiverged { .. }
            | VortexError::DegenerateDirector { .. }
            | VortexError::Collision { .. }
            | VortexError::Numerical { .. }
            | VortexError::Blowup { .. },
        ) => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

/// Returns whether the results are complete.
fn run(cli: &Cli) -> anyhow::Result<bool> {
    match &cli.command {
        Command::SimulateLlg(a) => simulate_llg(&a.config, cli),
        Command::SimulateGl(a) => simulate_gl(&a.config, cli),
        Command::Ode { kind, config } => ode(*kind, config, &cli.out),
        Command::Renorm { domain, bc, method, vortices } => renorm(*domain, *bc, *method, vortices),
        Command::Compare { pde, pde_prefix, ode, ode_prefix, r_min } => {
            let a = Trajectory::read(pde, pde_prefix)?;
            let b = Trajectory::read(ode, ode_prefix)?;
            println!("{}", serde_json::to_string_pretty(&compare_tracks(&a, &b, *r_min)?)?);
            Ok(true)
        }
        Command::Scenario(ScenarioCommand::List) => {
            for sc in builtin_scenarios() {
                println!("{}", sc.name);
            }
            Ok(true)
        }
        Command::Scenario(ScenarioCommand::Run { scenario }) => {
            let mut sc = match builtin_scenario(scenario) {
                Some(sc) => sc,
                None => Scenario::load(Path::new(scenario)).with_context(|| format!("scenario {scenario}"))?,
            };
            if let Some(s) = cli.seed {
                sc.seed = s;
            }
            let dir = cli.out.join(&sc.name);
            let report = run_scenario(&sc, Some(&dir))?;
            for r in &report.results {
                match (&r.comparison, &r.error) {
                    (Some(c), _) => println!(
                        "eps {:<10} grid {:<4} sup {:.5e} ({:.1} s)",
                        r.epsilon, r.grid, c.sup, r.runtime_seconds
                    ),
                    (None, Some(e)) => println!("eps {:<10} grid {:<4} failed: {e}", r.epsilon, r.grid),
                    (None, None) => println!("eps {:<10} grid {:<4} no comparison", r.epsilon, r.grid),
                }
            }
            if let Some(m) = report.monotone {
                println!("monotone: {m}");
            }
            println!("report: {}", dir.join("report.json").display());
            Ok(report.is_complete())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| VortexError::Config(format!("{}: {e}", path.display())).into())
}

fn prepare(s: &Setup, cli: &Cli, llg: bool) -> anyhow::Result<(std::sync::Arc<vortexlab::Grid2D>, VortexSet)> {
    if s.vortices.iter().any(|v| v.polarity.abs() != 1) {
        bail!(VortexError::Config("polarity must be +1 or -1".into()));
    }
    let v = VortexSet::new(
        s.vortices
            .iter()
            .map(|e| {
                let q = if llg { 0.5 * (e.polarity * e.degree) as f64 } else { 0.5 * e.degree as f64 };
                Vortex::new(e.position, e.degree, q)
            })
            .collect(),
    );
    let grid = make_grid(s.grid_size, s.grid_size, s.domain.clone(), s.bc.frozen(&v))?;
    fs::create_dir_all(&cli.out)?;
    Ok((grid, v))
}

fn finish(traj: &Trajectory, out: &Path) -> anyhow::Result<bool> {
    traj.write(out, "")?;
    println!("{} samples to t = {:.5}, status {:?}", traj.len(), traj.end_time(), traj.status);
    Ok(traj.status.is_completed())
}

fn simulate_llg(path: &Path, cli: &Cli) -> anyhow::Result<bool> {
    let f: LlgFile = read_json(path)?;
    let s = &f.setup;
    let (grid, v) = prepare(s, cli, true)?;
    let polarity: Vec<i32> = s.vortices.iter().map(|e| e.polarity).collect();
    let cores: Vec<_> = s.vortices.iter().map(|e| e.core).collect();
    let mut m = seed_vortex_field_with(&grid, &v, f.config.epsilon, &polarity, &cores)?;
    if let Some(p) = &s.perturbation {
        m = perturb_llg(&m, f.config.epsilon, p, cli.seed.unwrap_or(s.seed))?.0;
    }
    let traj = llg_run_with(&f.config, &m, field_sink(Some(&cli.out), s.save_fields)?)?;
    finish(&traj, &cli.out)
}

fn simulate_gl(path: &Path, cli: &Cli) -> anyhow::Result<bool> {
    let f: GlFile = read_json(path)?;
    let s = &f.setup;
    let (grid, v) = prepare(s, cli, false)?;
    let mut u = seed_gl_field(&grid, &v, f.config.epsilon)?;
    if let Some(p) = &s.perturbation {
        u = perturb_gl(&u, f.config.epsilon, p, cli.seed.unwrap_or(s.seed))?.0;
    }
    let traj = gl_run_with(&f.config, &u, field_sink(Some(&cli.out), s.save_fields)?)?;
    finish(&traj, &cli.out)
}

fn ode(kind: Kind, path: &Path, out: &Path) -> anyhow::Result<bool> {
    let f: OdeFile = read_json(path)?;
    let kind = match kind {
        Kind::Llg => MotionKind::Llg,
        Kind::Gl => MotionKind::Gl,
    };
    let mut vortices = VortexSet::new(f.vortices);
    if matches!(kind, MotionKind::Gl) {
        for e in &mut vortices.entries {
            e.q = 0.5 * e.degree as f64;
        }
    }
    let state = OdeState::new(vortices, f.alpha0, f.model, kind);
    let opts = OdeOptions {
        t_end: f.t_end,
        tol: f.tol,
        r_min: f.r_min.unwrap_or(DEFAULT_R_MIN),
        max_step: f.max_step,
        jumps: f.jumps,
    };
    let traj = ode_integrate_with(&state, &opts)?;
    fs::create_dir_all(out)?;
    traj.write(out, "")?;
    println!("{} steps to t = {:.5}, status {:?}", traj.len(), traj.end_time(), traj.status);
    Ok(matches!(traj.status, RunStatus::Completed))
}

fn renorm(domain: DomainArg, bc: BcArg, method: Option<MethodArg>, path: &Path) -> anyhow::Result<bool> {
    let vortices: Vec<Vortex> = read_json(path)?;
    let v = VortexSet::new(vortices);
    let bc = match bc {
        BcArg::Dirichlet => BoundaryCondition::dirichlet(BoundaryData::FromVortices).frozen(&v),
        BcArg::Neumann => BoundaryCondition::Neumann,
    };
    let (domain, default) = match domain {
        DomainArg::Disk => (ModelDomain::UnitDisk, WMethod::ClosedForm),
        DomainArg::Plane => (ModelDomain::FreePlane, WMethod::ClosedForm),
        DomainArg::Square => (ModelDomain::Rectangle { min: [0.0, 0.0], max: [1.0, 1.0] }, WMethod::NumericLimit),
    };
    let method = match method {
        Some(MethodArg::ClosedForm) => WMethod::ClosedForm,
        Some(MethodArg::NumericLimit) => WMethod::NumericLimit,
        None => default,
    };
    let mut model = RenormalizedEnergyModel::free_plane();
    model.domain = domain;
    model.bc = bc;
    model.method = method;
    let (w, rho_levels) = match method {
        WMethod::NumericLimit => {
            let l = numeric_limit(&v, &model)?;
            (l.value, l.levels)
        }
        WMethod::ClosedForm => (renormalized_energy(&v, &model)?, Vec::new()),
    };
    let out = RenormOutput { w, grad_w: grad_w(&v, &model)?, method, rho_levels };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(true)
}
