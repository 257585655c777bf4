use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod run;

use config::{RunConfig, SolverChoice};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(storval::Error),
    Io(std::io::Error),
}

impl From<storval::Error> for CliError {
    fn from(e: storval::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(storval::Error::Infeasible(_)) => 2,
            CliError::Core(storval::Error::Numerical(_)) => 3,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

/// Storage and swing option valuation runs from a TOML config.
#[derive(Debug, Parser)]
#[command(name = "storval", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Intrinsic,
    Simulate,
    Analytic,
    Compare,
}

#[derive(Debug, clap::Args)]
struct Flags {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long, value_enum)]
    solver: Option<SolverChoice>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Deterministic optimum on the configured curve.
    Intrinsic(Flags),
    /// Rolling-intrinsic Monte Carlo time value.
    Simulate(Flags),
    /// Closed-form time values and the Φ table.
    Analytic(Flags),
    /// Sweep α·T_e and compare Monte Carlo with the closed form.
    Compare(Flags),
}

fn configure_workers() -> Result<(), CliError> {
    let Ok(v) = std::env::var("STORVAL_WORKERS") else { return Ok(()) };
    let n: usize = v.parse().map_err(|_| CliError::Config(format!("STORVAL_WORKERS must be a positive integer, got {v:?}")))?;
    if n == 0 {
        return Err(CliError::Config("STORVAL_WORKERS must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))
}

fn execute(kind: Kind, flags: Flags) -> Result<(), CliError> {
    configure_workers()?;
    let mut cfg = RunConfig::load(&flags.config)?;
    if let Some(s) = flags.seed {
        cfg.simulation.seed = s;
    }
    if let Some(p) = flags.paths {
        cfg.simulation.paths = p;
    }
    if let Some(s) = flags.solver {
        cfg.solver.kind = s;
    }
    if let Some(o) = flags.out {
        cfg.out = o;
    }
    std::fs::create_dir_all(&cfg.out)?;
    let summary = match kind {
        Kind::Intrinsic => run::intrinsic(&cfg)?,
        Kind::Simulate => run::simulate(&cfg)?,
        Kind::Analytic => run::analytic(&cfg)?,
        Kind::Compare => run::compare(&cfg)?,
    };
    println!("{summary}");
    println!("wrote {}", cfg.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, flags) = match cli.command {
        Command::Intrinsic(f) => (Kind::Intrinsic, f),
        Command::Simulate(f) => (Kind::Simulate, f),
        Command::Analytic(f) => (Kind::Analytic, f),
        Command::Compare(f) => (Kind::Compare, f),
    };
    match execute(kind, flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("storval: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
