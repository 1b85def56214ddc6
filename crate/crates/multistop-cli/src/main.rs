//! Batch front end for the stopping engines.
//!
//! Exit codes: 0 success, 2 invalid input, 3 property or internal invariant
//! failure, 4 enumeration budget refusal.

mod commands;
mod fmt;
mod inputs;

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use multistop::Error as EngineError;

#[derive(Debug)]
pub enum CliError {
    /// Unusable input: missing files, parse failures, bad parameters.
    Input(String),
    /// A certified property failed or an engine invariant broke.
    Property(String),
    /// The requested work exceeds an enumeration budget.
    Budget(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Property(_) => 3,
            CliError::Budget(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Property(m) | CliError::Budget(m) => m,
        }
    }
}

/// Maps engine errors raised after input validation: budget refusals keep
/// their dedicated exit code, everything else is an internal invariant
/// failure.
pub fn engine_err(e: EngineError) -> CliError {
    match e {
        EngineError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
        _ => CliError::Property(e.to_string()),
    }
}

pub fn write_out(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

#[derive(Parser, Debug)]
#[command(
    name = "multistop",
    about = "Optimal stopping on scenario trees and the two-exercise exchange option",
    version
)]
struct Cli {
    /// Worker threads (falls back to MULTISTOP_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a single stopping problem: envelope, optimal rule, checks.
    Snell(commands::snell::SnellArgs),
    /// Run the double-stopping reduction and construct an optimal pair.
    Double(commands::double::DoubleArgs),
    /// Run the randomized cross-check matrix against the brute-force oracle.
    Verify(commands::verify::VerifyArgs),
    /// Price the two-exercise exchange option on a product lattice.
    Exchange(commands::exchange::ExchangeArgs),
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        if n == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        return Ok(Some(n));
    }
    match std::env::var("MULTISTOP_THREADS") {
        Ok(text) => {
            let n: usize = text.parse().map_err(|_| {
                CliError::Input(format!(
                    "MULTISTOP_THREADS must be an integer, got '{text}'"
                ))
            })?;
            if n == 0 {
                return Err(CliError::Input(
                    "MULTISTOP_THREADS must be at least 1".into(),
                ));
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = resolve_threads(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(format!("cannot configure {n} threads: {e}")))?;
    }
    match cli.command {
        Command::Snell(args) => commands::snell::run(args),
        Command::Double(args) => commands::double::run(args),
        Command::Verify(args) => commands::verify::run(args),
        Command::Exchange(args) => commands::exchange::run(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}
