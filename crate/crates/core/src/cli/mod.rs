//! The `osa` command-line harness.
//!
//! Subcommands: `gen` (planted instances), `solve`, `oracle` (exact optimum at
//! small scale), `eval` (trimmed cost of a given basis) and `bench` (a
//! parameter sweep written as long-format CSV). Every run emits a JSON
//! document `{"manifest": ..., "result": ...}`; the manifest echoes the
//! configuration, seed, version, input checksum, timing and warnings.
//!
//! Exit codes: 0 success, 2 usage or parameter error, 3 data error, 4 budget
//! or degeneracy refusal. Set `OSA_LOG` (e.g. `OSA_LOG=info`) for logging.

mod args;
mod commands;
mod io;
mod report;

use std::ffi::OsString;
use std::fmt;

use clap::Parser;

use crate::error::Error;

pub use args::Cli;

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Library(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Library(e) => match e {
                Error::InvalidParameter(_) | Error::EmptyInlierSet { .. } => 2,
                Error::DimensionMismatch { .. } | Error::NonFinite(_) => 3,
                Error::BudgetExceeded { .. } | Error::DegenerateWeights { .. } | Error::PartitionCap { .. } => 4,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Library(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Library(e)
    }
}

pub(crate) type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter("OSA_LOG")).try_init();
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::dispatch(cli, argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("osa: {e}");
            e.exit_code()
        }
    }
}
