//! `evomarket`: run ensembles, analyze them, calibrate SDE models of parameter
//! evolution, and bundle figure-ready tables.
//!
//! Exit codes: 0 success, 1 I/O or internal error, 2 configuration error,
//! 3 partial ensemble failure, 4 analysis input error.

mod analyze;
mod artifacts;
mod calibrate;
mod common;
mod error;
mod report;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::common::ConfigArgs;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(
    name = "evomarket",
    version,
    about = "Evolving zero-intelligence market simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an ensemble and write per-run series, selection events and a summary.
    Simulate(SimulateArgs),
    /// Fit spectra, GARCH volatility, correlations and marginals of an ensemble.
    Analyze(DerivedArgs),
    /// Calibrate heavy-tailed SDEs to the pooled parameter distributions.
    Calibrate(DerivedArgs),
    /// Write figure-ready tables for an ensemble directory.
    Report(DerivedArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Selection mechanism (control, quantile, fps, mixed).
    #[arg(long)]
    pub mechanism: Option<String>,
    /// Number of runs in the ensemble.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Output directory; defaults to `<output root>/<mechanism>-seed<seed>`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Parent of default output directories.
    #[arg(
        long,
        env = "EVOMARKET_OUTPUT_ROOT",
        value_name = "DIR",
        default_value = "evomarket-output"
    )]
    pub output_root: PathBuf,
    /// Write into a non-empty output directory, replacing earlier run files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct DerivedArgs {
    /// Ensemble directory written by `simulate`.
    pub run_dir: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output directory; defaults to a subdirectory of the ensemble directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

fn run(cli: Cli) -> CliResult<()> {
    let jobs = match &cli.command {
        Command::Simulate(a) => a.config.jobs,
        Command::Analyze(a) | Command::Calibrate(a) | Command::Report(a) => a.config.jobs,
    };
    common::with_jobs(jobs, || match &cli.command {
        Command::Simulate(a) => simulate::simulate(a),
        Command::Analyze(a) => analyze::analyze(a),
        Command::Calibrate(a) => calibrate::calibrate(a),
        Command::Report(a) => report::report(a),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
