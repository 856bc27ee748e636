//! Command-line front end for `tsdyn`.
//!
//! Every subcommand resolves an [`ExperimentConfig`] from an optional TOML
//! file plus flags, writes CSV artifacts into the output directory and
//! returns a plain-text summary that is also stored as `summary.txt`.
//!
//! Exit codes: 0 success, 2 parse or usage error, 3 numeric failure or an
//! analysis that does not apply to the system, 1 I/O failure.

pub mod args;
pub mod commands;
pub mod config;
pub mod output;
pub mod system;

pub use args::{Cli, Command};
pub use config::ExperimentConfig;

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Malformed config, scale file, flag value or unknown preset.
    Parse(String),
    /// The analysis does not apply, e.g. nothing to destabilize.
    NotApplicable(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::NotApplicable(_) | CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::NotApplicable(m) => write!(f, "not applicable: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<tsdyn::Error> for CliError {
    fn from(e: tsdyn::Error) -> Self {
        use tsdyn::Error as E;
        match e {
            E::Parse { .. } | E::UnknownPreset(_) | E::InvalidScale(_) | E::BadFraction { .. } => CliError::Parse(e.to_string()),
            E::CentralExponentNegative { .. } | E::NotSyndetic | E::ModeConditionFails(_) => {
                CliError::NotApplicable(e.to_string())
            }
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::Parser;
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::run_cli(cli) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("tsdyn: {e}");
            e.exit_code()
        }
    }
}
