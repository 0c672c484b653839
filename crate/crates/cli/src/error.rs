use thiserror::Error;

/// Command failures, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or option combinations (exit code 1).
    #[error("usage error: {0}")]
    Usage(String),
    /// Unreadable, malformed or inconsistent inputs and failed runs (exit
    /// code 2).
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl From<dmt::Error> for CliError {
    fn from(e: dmt::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
