//! Command-line front end: runs GMKI or GMVI on a named problem, writes
//! grid references, and tabulates TV distances from saved runs.
//!
//! Exit codes: 0 on success, 2 for configuration, I/O and lookup errors,
//! 3 for numerical failures (artifacts up to the last good iteration are
//! still written).

pub mod analysis;
pub mod artifacts;
pub mod config;
mod error;
pub mod ns_truth;
pub mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::Method;
pub use error::CliError;

/// Environment variable that fixes the worker-thread count.
pub const WORKERS_ENV: &str = "GMKI_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "gmki", version, about = "Gaussian mixture Kalman inversion experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an inversion and write manifest, records, final mixture and
    /// (for one or two parameters) the gridded mixture density.
    Run(RunArgs),
    /// Write the grid posterior of a benchmark as CSV.
    Reference(ReferenceArgs),
    /// Tabulate the TV distance of every recorded iterate to a reference.
    Metrics(MetricsArgs),
    /// Generate seeded synthetic Navier-Stokes data.
    NsTruth(NsTruthArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Benchmark name or `navier-stokes`.
    #[arg(long)]
    pub problem: String,
    /// Flat TOML config; without it the problem's recommended settings apply.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed from the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReferenceArgs {
    #[arg(long)]
    pub problem: String,
    /// `LO,HI` for one axis; repeat once per axis.
    #[arg(long, value_parser = parse_bounds, allow_hyphen_values = true)]
    pub bounds: Vec<(f64, f64)>,
    /// Points per axis; one value applies to all axes.
    #[arg(long)]
    pub resolution: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    /// Defaults to `tv.csv` inside the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NsTruthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub modes: usize,
    #[arg(long, default_value_t = 32)]
    pub grid: usize,
    /// Solver step; scaled from 2.5e-3 at a 64² grid when omitted.
    #[arg(long)]
    pub pde_dt: Option<f64>,
}

fn parse_bounds(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("expected LO,HI, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(lo)?, parse(hi)?))
}

/// Sizes the global worker pool from [`WORKERS_ENV`] when it is set.
pub fn configure_workers() -> Result<(), CliError> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

/// Runs one command and returns the line to print on success.
pub fn execute(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Run(a) => {
            let req = run::RunRequest {
                method: a.method,
                problem: a.problem,
                config: a.config,
                out: a.out,
                seed: a.seed,
            };
            let s = run::cmd_run(&req)?;
            Ok(format!(
                "{} iterations, {} forward evaluations, final weights {:?}",
                s.iterations, s.forward_evals, s.final_weights
            ))
        }
        Command::Reference(a) => {
            let rows = analysis::cmd_reference(&a.problem, &a.bounds, &a.resolution, &a.out)?;
            Ok(format!("wrote {rows} grid points to {}", a.out.display()))
        }
        Command::Metrics(a) => {
            let path = analysis::cmd_metrics(&a.run, &a.reference, a.out.as_deref())?;
            Ok(format!("wrote {}", path.display()))
        }
        Command::NsTruth(a) => {
            ns_truth::cmd_ns_truth(&a.out, a.seed, a.modes, a.grid, a.pde_dt)?;
            Ok(format!("wrote synthetic truth to {}", a.out.display()))
        }
    }
}
