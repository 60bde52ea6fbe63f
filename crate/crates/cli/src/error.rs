use std::io;

/// Failures of a CLI invocation, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Validation(_) => 4,
        }
    }
}

impl From<stoch_ham::Error> for CliError {
    fn from(e: stoch_ham::Error) -> Self {
        use stoch_ham::Error as E;
        match e {
            E::BlowUp { .. } | E::NonFiniteAction | E::InsufficientData(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(io::Error::other(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;
