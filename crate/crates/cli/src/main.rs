//! `specguide`: runs guidance-weight experiments from a TOML config and
//! writes CSV results.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "specguide", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; defaults to `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimize guidance weights for each configured step count.
    Optimize,
    /// W2 to the posterior for ideal, optimized and heuristic samplers.
    SweepWasserstein,
    /// Monte-Carlo run statistics and heuristic weight profiles.
    Simulate,
    /// Spectral prior from sample signals.
    EstimatePrior,
    /// Loss of fixed weights given in the config.
    EvalLoss,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numerical(spectral_guidance::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
        }
    }
}

impl From<spectral_guidance::Error> for CliError {
    fn from(e: spectral_guidance::Error) -> Self {
        CliError::Numerical(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli.config.ok_or_else(|| CliError::Config("--config is required".into()))?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let exp = commands::Experiment::new(config::load(&path)?, cli.seed, cli.out)?;
    match cli.command {
        Command::Optimize => commands::optimize(&exp),
        Command::SweepWasserstein => commands::sweep_wasserstein(&exp),
        Command::Simulate => commands::simulate(&exp),
        Command::EstimatePrior => commands::estimate_prior(&exp),
        Command::EvalLoss => commands::eval_loss(&exp),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("specguide: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
