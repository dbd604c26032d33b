use thiserror::Error;

/// Failure of one pipeline stage. Each variant maps to a fixed process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("training failed ({stage}): {cause}")]
    Training { stage: String, cause: String },
    #[error("sampling failed ({stage}): {cause}")]
    Sampling { stage: String, cause: String },
    #[error("oracle tolerance exceeded: {0}")]
    Oracle(String),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Training { .. } => 3,
            CliError::Sampling { .. } => 4,
            CliError::Oracle(_) => 5,
            CliError::Output(_) => 1,
        }
    }

    pub(crate) fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub(crate) fn training(stage: impl Into<String>, e: impl std::fmt::Display) -> Self {
        CliError::Training {
            stage: stage.into(),
            cause: e.to_string(),
        }
    }

    pub(crate) fn sampling(stage: impl Into<String>, e: impl std::fmt::Display) -> Self {
        CliError::Sampling {
            stage: stage.into(),
            cause: e.to_string(),
        }
    }

    pub(crate) fn output(e: impl std::fmt::Display) -> Self {
        CliError::Output(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
