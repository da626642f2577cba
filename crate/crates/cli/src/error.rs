use thiserror::Error;

/// Failures mapped onto process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or input data. Exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// A numerical routine failed. Exit code 3.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Writing results failed. Exit code 1.
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<msoe::Error> for CliError {
    fn from(e: msoe::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}
