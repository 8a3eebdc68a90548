//! Config-driven driver for driftpost experiments.
//!
//! Exit codes: 0 on success, 1 for invalid configs, inputs or drifts, 2 for
//! numerical failures.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    /// Malformed config, unreadable input, or a rejected data file.
    Config(String),
    /// A drift failed its class audit.
    Validation(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<driftpost::Error> for CliError {
    fn from(e: driftpost::Error) -> Self {
        use driftpost::Error as E;
        match e {
            E::InvalidParameter { .. } | E::Ingest { .. } | E::Csv(_) | E::Io(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "driftpost", version, about = "Posterior consistency experiments for diffusion drifts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to DRIFTPOST_THREADS, then to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Audit drift class constants.
    Validate,
    /// Simulate an observation series from the true drift.
    Simulate,
    /// Read and audit an observation CSV.
    Ingest,
    /// Build a prior net.
    Net,
    /// Posterior weights over a prior net.
    Posterior,
    /// Complement-mass curve over a schedule of sample sizes.
    Consistency,
    /// Divergences between drift pairs.
    Divergence,
    /// Operator-gap probe between two drifts.
    Identifiability,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Simulate => "simulate",
            Command::Ingest => "ingest",
            Command::Net => "net",
            Command::Posterior => "posterior",
            Command::Consistency => "consistency",
            Command::Divergence => "divergence",
            Command::Identifiability => "identifiability",
        }
    }
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("DRIFTPOST_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("DRIFTPOST_THREADS must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = threads(cli.threads)? {
        if n == 0 {
            return Err(CliError::Config("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let loaded = config::load(&path)?;
    let seed = cli
        .seed
        .or(loaded.config.seed)
        .ok_or_else(|| CliError::Config("a seed is required (config field `seed` or --seed)".into()))?;
    let out_dir = match (cli.out, &loaded.config.output_dir) {
        (Some(o), _) => o,
        (None, Some(o)) => loaded.resolve(o),
        (None, None) => PathBuf::from("."),
    };
    let mut out = output::OutputDir::create(&out_dir)?;
    commands::execute(cli.command, &loaded, seed, &mut out)?;
    out.finish(cli.command.name(), seed, &loaded.bytes)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
