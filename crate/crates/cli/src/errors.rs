//! Error classification and exit codes for the command-line pipeline.
//!
//! Exit codes: 0 success, 2 input error, 3 numeric failure, 4 config
//! error. Every failure prints a stable machine-readable error name on
//! stderr so scripts can branch on the failure class without parsing
//! prose.

use std::fmt;
use std::path::Path;

use sgnn_core::error::Error as CoreError;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable, missing, or malformed input data. Exit code 2.
    Input { name: &'static str, message: String },
    /// A computation failed on valid input. Exit code 3.
    Numeric { name: &'static str, message: String },
    /// Invalid flag or config-file value. Exit code 4.
    Config { message: String },
}

impl CliError {
    pub fn input(path: &Path, message: impl fmt::Display) -> Self {
        CliError::Input {
            name: "Io",
            message: format!("{}: {message}", path.display()),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config {
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } => 2,
            CliError::Numeric { .. } => 3,
            CliError::Config { .. } => 4,
        }
    }

    /// Stable machine-readable name for the diagnostic stream.
    pub fn name(&self) -> &'static str {
        match self {
            CliError::Input { name, .. } | CliError::Numeric { name, .. } => name,
            CliError::Config { .. } => "Config",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input { message, .. }
            | CliError::Numeric { message, .. }
            | CliError::Config { message } => write!(f, "{message}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let name = e.name();
        let message = e.to_string();
        match e {
            // failures of the numerics on structurally valid data
            CoreError::RankDeficient
            | CoreError::NonConvergence
            | CoreError::DegenerateData
            | CoreError::NoRecordedForward
            | CoreError::EmptyMask
            | CoreError::EmptyTrainMask
            | CoreError::Numeric { .. } => CliError::Numeric { name, message },
            // everything else points at the supplied data
            _ => CliError::Input { name, message },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
