use thiserror::Error;

/// Command failure, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, missing or malformed input. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Numerical or runtime failure during a command. Exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn validation(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Validation(format!("{context}: {e}"))
    }

    pub fn runtime(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Runtime(format!("{context}: {e}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o: {e}"))
    }
}
