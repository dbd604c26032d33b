use thiserror::Error;

/// Errors produced anywhere in the probing pipeline.
#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("encoding error at row {row}, column `{column}`: {message}")]
    Encoding {
        row: usize,
        column: String,
        message: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("arity error: {0}")]
    Arity(String),

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("not differentiable: {0}")]
    NotDifferentiable(String),

    #[error("training diverged at step {step} (loss = {loss})")]
    Diverged { step: usize, loss: f64 },

    #[error("SMO did not converge: max KKT violation {max_violation:.3e} after {iterations} iterations")]
    Convergence { max_violation: f64, iterations: usize },

    #[error("closed-form routes disagree by {discrepancy:.3e}")]
    AlgebraMismatch { discrepancy: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, ProbeError>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(ProbeError::Dimension { expected, got })
    }
}
