use std::fmt;
use std::path::Path;

use simplex_langevin_core::Error;

/// A failure with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration, or an instance that cannot be built. Exit 2.
    Config(String),
    /// A simulation step or a validation invariant failed. Exit 3.
    Run(String),
    /// Reading or writing files failed. Exit 4.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Run(_) => 3,
            Self::Io(_) => 4,
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self::Io(format!("{}: {e}", path.display()))
    }

    /// Errors from building the instance; I/O errors keep their own code.
    pub fn config(e: Error) -> Self {
        match e {
            Error::Io(io) => Self::Io(io.to_string()),
            other => Self::Config(other.to_string()),
        }
    }

    /// Errors while running; I/O errors keep their own code.
    pub fn run(e: Error) -> Self {
        match e {
            Error::Io(io) => Self::Io(io.to_string()),
            other => Self::Run(other.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Run(m) => write!(f, "run failed: {m}"),
            Self::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
