//! Command-line front end.
//!
//! Exit codes: 0 success, 1 validation failure, 2 usage or configuration
//! error, 3 solver failure.

use std::ffi::OsString;
use std::io::Write;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod output;

use crate::error::Error;
use commands::{Report, Status};
use config::{FileConfig, Overrides, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(Error),
    #[error("solver failed: {0}")]
    Solver(#[from] Error),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io(_) => EXIT_USAGE,
            CliError::Solver(_) => EXIT_SOLVER,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "stockloan", version, about = "Margin-call stock loan pricing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal exit boundary on the time grid
    Boundary(Overrides),
    /// Contract values for every (spot, tau) pair
    Price(Overrides),
    /// Upfront service fee over principal and margin-fraction sweeps
    Fee(Overrides),
    /// Margin-call rebate on the time grid
    Rebate(Overrides),
    /// Integral equation against the binomial tree
    Validate(Overrides),
    /// Reproduce the reference tables
    Tables {
        #[command(flatten)]
        overrides: Overrides,
        /// Add wall-clock columns (makes output nondeterministic)
        #[arg(long)]
        timings: bool,
    },
}

impl Command {
    fn overrides(&self) -> &Overrides {
        match self {
            Command::Boundary(o)
            | Command::Price(o)
            | Command::Fee(o)
            | Command::Rebate(o)
            | Command::Validate(o)
            | Command::Tables { overrides: o, .. } => o,
        }
    }
}

/// Runs a parsed command and returns its report.
pub fn execute(command: &Command) -> Result<Report, CliError> {
    let o = command.overrides();
    let file = match &o.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let config = RunConfig::resolve(file, o)?;
    match command {
        Command::Boundary(_) => commands::boundary(&config),
        Command::Price(_) => commands::price(&config),
        Command::Fee(_) => commands::fee(&config),
        Command::Rebate(_) => commands::rebate(&config),
        Command::Validate(_) => commands::validate(&config),
        Command::Tables { timings, .. } => commands::tables(&config, *timings),
    }
}

fn emit(report: &Report, o: &Overrides) -> Result<(), CliError> {
    match &o.out {
        Some(path) => std::fs::write(path, &report.csv)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(report.csv.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

/// Entry point of the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = execute(&cli.command).and_then(|report| {
        emit(&report, cli.command.overrides())?;
        Ok(report.status)
    });
    match result {
        Ok(Status::Ok) => EXIT_OK,
        Ok(Status::ValidationFailed) => {
            eprintln!("stockloan: validation failed");
            EXIT_VALIDATION
        }
        Ok(Status::AllRowsFailed) => {
            eprintln!("stockloan: every row failed");
            EXIT_SOLVER
        }
        Err(e) => {
            eprintln!("stockloan: {e}");
            e.exit_code()
        }
    }
}
