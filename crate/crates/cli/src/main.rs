//! `structured-gic`: batch model selection for structured-sparse estimators.
//!
//! Either pick a subcommand and drive it with flags, or run a saved
//! configuration with `structured-gic --config run.json`. Exit codes: 0 on
//! success, 2 for configuration/data errors, 3 for numerical failures.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{
    default_c_gic, default_c_xi, default_eta, default_k_grid, default_max_iter, default_ratio,
    default_tau_sq, default_tol_kkt, CommandKind, RegKind, RunConfig,
};
use structured_gic::{GicError, GlmFamily, Result};

#[derive(Parser)]
#[command(
    name = "structured-gic",
    version,
    about = "Structured-sparsity model selection: penalized fits, regularization paths, \
             criterion tables, Monte-Carlo experiments, and assumption diagnostics"
)]
struct Cli {
    /// Run a saved configuration (JSON `RunConfig`) instead of a subcommand
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<CliCommand>,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Solve one penalized problem at a fixed lambda
    Fit(FitArgs),
    /// Trace a regularization path and select on it with the criterion
    Path(PathArgs),
    /// Score every group support exhaustively and print the criterion table
    Select(SelectArgs),
    /// Run a Monte-Carlo consistency experiment from a spec file
    Experiment(ExperimentArgs),
    /// Check the selection-consistency assumptions on a synthetic design
    Diagnose(DiagnoseArgs),
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum FamilyArg {
    Gaussian,
    Logistic,
}

impl From<FamilyArg> for GlmFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Gaussian => GlmFamily::Gaussian,
            FamilyArg::Logistic => GlmFamily::Logistic,
        }
    }
}

#[derive(Args)]
struct DataOpts {
    /// Input dataset: tabular CSV (columns x1..xp,y) for group/l1, matrix
    /// JSON container for nuclear
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,

    /// Response family for tabular data [default: gaussian]
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,

    /// Regularizer
    #[arg(long, value_enum)]
    reg: Option<RegKind>,

    /// Group partition: JSON array of groups of 1-based coordinate indices
    #[arg(long, value_name = "FILE")]
    groups_file: Option<PathBuf>,
}

#[derive(Args)]
struct ExecOpts {
    /// Worker threads (default: all cores; env STRUCTURED_GIC_THREADS
    /// overrides this flag)
    #[arg(long, value_name = "N")]
    threads: Option<usize>,

    /// Machine-readable JSON on stdout instead of human-readable text
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ScheduleOpts {
    /// Penalty-rate constant: a_n = c_gic * (m + ln G)/n or c_gic * (p1+p2)/n
    #[arg(long, value_name = "C", default_value_t = default_c_gic())]
    c_gic: f64,

    /// Multiply a_n by max(ln n, 1)
    #[arg(long)]
    log_n: bool,

    /// Complexity budget psi_n^2 (default: min(p, n)/2)
    #[arg(long, value_name = "B")]
    psi_budget: Option<f64>,
}

#[derive(Args)]
struct GridOpts {
    /// Number of grid points K (geometric, from the data-driven lambda_max)
    #[arg(long, value_name = "K", default_value_t = default_k_grid())]
    k_grid: usize,

    /// Grid floor: lambda_min / lambda_max
    #[arg(long, value_name = "R", default_value_t = default_ratio())]
    ratio: f64,

    /// Model-extraction threshold factor: xi = c_xi * lambda
    #[arg(long, value_name = "C", default_value_t = default_c_xi())]
    c_xi: f64,
}

#[derive(Args)]
struct SolverOpts {
    /// Iteration cap per solve
    #[arg(long, value_name = "N", default_value_t = default_max_iter())]
    max_iter: usize,

    /// KKT residual tolerance
    #[arg(long, value_name = "T", default_value_t = default_tol_kkt())]
    tol_kkt: f64,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataOpts,

    /// Penalty weight lambda (required)
    #[arg(long, value_name = "L")]
    lambda: Option<f64>,

    /// Model-extraction threshold factor: xi = c_xi * lambda
    #[arg(long, value_name = "C", default_value_t = default_c_xi())]
    c_xi: f64,

    #[command(flatten)]
    solver: SolverOpts,

    /// Write a per-iteration JSON-lines trace ({iter, objective,
    /// kkt_residual, step}) to this file
    #[arg(long, value_name = "FILE")]
    trace_out: Option<PathBuf>,

    /// Write the solution JSON to this file
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,

    #[command(flatten)]
    exec: ExecOpts,
}

#[derive(Args)]
struct PathArgs {
    #[command(flatten)]
    data: DataOpts,

    #[command(flatten)]
    grid: GridOpts,

    #[command(flatten)]
    schedule: ScheduleOpts,

    #[command(flatten)]
    solver: SolverOpts,

    /// Output stem: writes <STEM>.csv (path table) and <STEM>.model.json
    #[arg(long, value_name = "STEM")]
    out: Option<PathBuf>,

    #[command(flatten)]
    exec: ExecOpts,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataOpts,

    #[command(flatten)]
    schedule: ScheduleOpts,

    /// Output stem: writes <STEM>.csv (criterion table) and <STEM>.model.json
    #[arg(long, value_name = "STEM")]
    out: Option<PathBuf>,

    #[command(flatten)]
    exec: ExecOpts,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment spec JSON (design, ns, replicates, master_seed, selector)
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory for report.csv / report.json
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Also write per-replicate details.csv
    #[arg(long)]
    verbose: bool,

    #[command(flatten)]
    exec: ExecOpts,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Synthetic design JSON: {"kind": "group"|"lowrank", "spec": {...}}
    #[arg(long, value_name = "FILE")]
    design: Option<PathBuf>,

    /// Curvature constant kappa (default: restricted-Hessian heuristic)
    #[arg(long, value_name = "K")]
    kappa: Option<f64>,

    /// RSC tolerance tau^2
    #[arg(long, value_name = "T", default_value_t = default_tau_sq())]
    tau_sq: f64,

    /// RSC probe radius eta
    #[arg(long, value_name = "E", default_value_t = default_eta())]
    eta: f64,

    /// Path weight for the A4' bound (default: 2 Phi*(grad L(theta*)))
    #[arg(long, value_name = "L")]
    lambda: Option<f64>,

    #[command(flatten)]
    schedule: ScheduleOpts,

    /// Write the report JSON to this file
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,

    #[command(flatten)]
    exec: ExecOpts,
}

fn apply_data(config: &mut RunConfig, d: DataOpts) {
    config.data = d.data;
    config.family = d.family.map(GlmFamily::from);
    config.reg = d.reg;
    config.groups_file = d.groups_file;
}

fn apply_exec(config: &mut RunConfig, e: ExecOpts) {
    config.threads = e.threads;
    config.json = e.json;
}

fn apply_schedule(config: &mut RunConfig, s: ScheduleOpts) {
    config.c_gic = s.c_gic;
    config.log_n = s.log_n;
    config.psi_budget = s.psi_budget;
}

fn to_config(command: CliCommand) -> Result<RunConfig> {
    Ok(match command {
        CliCommand::Fit(a) => {
            let mut c = RunConfig::new(CommandKind::Fit);
            apply_data(&mut c, a.data);
            c.lambda = a.lambda;
            c.c_xi = a.c_xi;
            c.max_iter = a.solver.max_iter;
            c.tol_kkt = a.solver.tol_kkt;
            c.trace_out = a.trace_out;
            c.out = a.out;
            apply_exec(&mut c, a.exec);
            c
        }
        CliCommand::Path(a) => {
            let mut c = RunConfig::new(CommandKind::Path);
            apply_data(&mut c, a.data);
            c.k_grid = a.grid.k_grid;
            c.ratio = a.grid.ratio;
            c.c_xi = a.grid.c_xi;
            apply_schedule(&mut c, a.schedule);
            c.max_iter = a.solver.max_iter;
            c.tol_kkt = a.solver.tol_kkt;
            c.out = a.out;
            apply_exec(&mut c, a.exec);
            c
        }
        CliCommand::Select(a) => {
            let mut c = RunConfig::new(CommandKind::Select);
            apply_data(&mut c, a.data);
            apply_schedule(&mut c, a.schedule);
            c.out = a.out;
            apply_exec(&mut c, a.exec);
            c
        }
        CliCommand::Experiment(a) => {
            let mut c = RunConfig::new(CommandKind::Experiment);
            let spec_path = a.config.ok_or_else(|| {
                GicError::InvalidArgument("missing --config (experiment spec JSON)".into())
            })?;
            c.experiment = Some(config::load_json(&spec_path)?);
            c.out_dir = a.out_dir;
            c.verbose = a.verbose;
            apply_exec(&mut c, a.exec);
            c
        }
        CliCommand::Diagnose(a) => {
            let mut c = RunConfig::new(CommandKind::Diagnose);
            let design_path = a.design.ok_or_else(|| {
                GicError::InvalidArgument("missing --design (synthetic design JSON)".into())
            })?;
            c.design = Some(config::load_json(&design_path)?);
            c.kappa = a.kappa;
            c.tau_sq = a.tau_sq;
            c.eta = a.eta;
            c.lambda = a.lambda;
            apply_schedule(&mut c, a.schedule);
            c.out = a.out;
            apply_exec(&mut c, a.exec);
            c
        }
    })
}

fn build_config(cli: Cli) -> Result<RunConfig> {
    match (cli.config, cli.command) {
        (Some(path), None) => config::load_json(&path),
        (None, Some(command)) => to_config(command),
        (Some(_), Some(_)) => Err(GicError::InvalidArgument(
            "--config replaces a subcommand; use one or the other".into(),
        )),
        (None, None) => Err(GicError::InvalidArgument(
            "nothing to do: pass a subcommand or --config (see --help)".into(),
        )),
    }
}

fn exit_code(e: &GicError) -> i32 {
    match e {
        GicError::InvalidShape(_)
        | GicError::InvalidArgument(_)
        | GicError::DataFormat { .. }
        | GicError::Io(_) => 2,
        GicError::NotConverged { .. }
        | GicError::DegenerateData(_)
        | GicError::PsiBudgetExceeded { .. } => 3,
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match build_config(cli).and_then(|config| commands::run(&config)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    commands::flush_stdout();
    std::process::exit(code);
}
