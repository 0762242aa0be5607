//! Library side of the `sle-armlab` command line tool: argument parsing,
//! config merging, run artifacts and the subcommands.

pub mod estimate;
pub mod maps;
pub mod output;
pub mod verify;

use std::path::PathBuf;

use anyhow::Result;
use armlab::ArmlabError;
use clap::{Parser, Subcommand};

pub use estimate::{EstimateArgs, EstimateFile};
pub use maps::MapsCommand;
pub use verify::VerifySuite;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Threads used when `--threads` is absent; overrides the flag when set.
pub const THREADS_ENV: &str = "SLE_ARMLAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "sle-armlab", version, about = "Monte Carlo lab for SLE boundary arm exponents")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the explicit conformal maps or run their self-test.
    #[command(subcommand)]
    Maps(MapsCommand),
    /// Estimate crossing probabilities over a grid and fit the exponent.
    Estimate(EstimateArgs),
    /// Run a verification suite.
    #[command(subcommand)]
    Verify(VerifySuite),
    /// Simulate one path and print its crossing record.
    Simulate(estimate::SimulateArgs),
    /// Re-run an experiment from its manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Raised for malformed input; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code_for(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<ArmlabError>() {
        Some(ArmlabError::InvalidParameter(_) | ArmlabError::Regime { .. } | ArmlabError::OutsideDomain(_)) => {
            EXIT_USAGE
        }
        _ => EXIT_FAILURE,
    }
}

/// Thread count from the environment, the flag, or the machine.
pub fn thread_count(flag: Option<usize>) -> Result<usize> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        return v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| usage(format!("{THREADS_ENV}={v} is not a positive integer")));
    }
    match flag {
        Some(0) => Err(usage("--threads must be positive")),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    let threads = thread_count(cli.threads)?;
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    match cli.command {
        Command::Maps(cmd) => maps::run(cmd),
        Command::Estimate(args) => estimate::run(args),
        Command::Verify(suite) => verify::run(suite),
        Command::Simulate(args) => estimate::simulate(args),
        Command::Rerun { manifest, out_dir } => rerun(&manifest, &out_dir),
    }
}

fn rerun(manifest: &std::path::Path, out_dir: &std::path::Path) -> Result<bool> {
    let m = output::Manifest::read(manifest)?;
    match m.command.as_str() {
        "estimate" => estimate::run_config(serde_json::from_value(m.config)?, out_dir, false),
        other => verify::rerun(other, m.config, out_dir),
    }
}

/// Runs the parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code_for(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(exit_code_for(&usage("x")), EXIT_USAGE);
        let regime: anyhow::Error = ArmlabError::Regime { kappa: 6.0, what: "x".into() }.into();
        assert_eq!(exit_code_for(&regime), EXIT_USAGE);
        let other: anyhow::Error = ArmlabError::Io("x".into()).into();
        assert_eq!(exit_code_for(&other), EXIT_FAILURE);
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
