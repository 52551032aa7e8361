use std::io;

use thiserror::Error;

/// Failures of the command-line driver, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<levy_iterates::Error> for CliError {
    fn from(err: levy_iterates::Error) -> Self {
        use levy_iterates::Error as E;
        match err {
            E::Domain(m) => CliError::Config(format!("domain error: {m}")),
            E::Config(m) => CliError::Config(m),
            E::Format(m) => CliError::Io(format!("bank format: {m}")),
            E::Io(e) => CliError::Io(e.to_string()),
            E::Numerical(m) => CliError::Numerical(m),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(err: io::Error) -> Self {
        CliError::Io(err.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
