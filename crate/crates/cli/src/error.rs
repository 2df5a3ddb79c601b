use thiserror::Error;

/// Failures of a batch run, each with its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// The configuration does not parse or does not validate.
    #[error("invalid configuration: {0}")]
    Schema(String),
    /// A numerical stage failed; `stage` names the diagnostic and operation.
    #[error("{stage} failed: {detail}")]
    Numeric { stage: String, detail: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Numeric { .. } => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
