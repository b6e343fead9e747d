mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed input: exit 2.
    Config(String),
    /// A mathematical precondition failed: exit 3.
    Math(eigendamage::Error),
    /// Writing results failed: exit 1.
    Output(String),
}

impl From<eigendamage::Error> for CliError {
    fn from(e: eigendamage::Error) -> Self {
        CliError::Math(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Math(_) => 3,
            CliError::Output(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Math(e) => {
                write!(f, "precondition violated: {e}")?;
                let mut src = std::error::Error::source(e);
                while let Some(s) = src {
                    write!(f, ": {s}")?;
                    src = s.source();
                }
                Ok(())
            }
            CliError::Output(m) => write!(f, "output error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "eigendamage", version, about = "Eigendamage cohesive fracture experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// JSON experiment config (or measure, for `flatnorm`).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat-norm refinement; overrides `flat_refine`.
    #[arg(long)]
    refine: Option<usize>,
    /// Solver seed; overrides `solve.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Print E, F and the recovery energies E_eps as JSON.
    Energy(Common),
    /// Write convergence.csv for the eps ladder.
    Converge(Common),
    /// Write tension.csv: solved minimal E_eps vs the limit minimum.
    Tension(Common),
    /// Print the flat norm of a measure as JSON.
    Flatnorm(Common),
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("EIGENDAMAGE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("EIGENDAMAGE_THREADS must be a nonnegative integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot configure thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Energy(c) => commands::energy(&c),
        Command::Converge(c) => commands::converge(&c),
        Command::Tension(c) => commands::tension(&c),
        Command::Flatnorm(c) => commands::flatnorm(&c),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("eigendamage: {e}");
            ExitCode::from(e.code())
        }
    }
}
