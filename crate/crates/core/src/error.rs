use thiserror::Error;

/// Errors raised across the transfer pipeline.
#[derive(Debug, Error)]
pub enum StlError {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("numerical failure{}: {reason}", .iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    NumericalFailure {
        iteration: Option<usize>,
        reason: String,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl StlError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        StlError::InvalidInput(msg.into())
    }

    pub(crate) fn empty(msg: impl Into<String>) -> Self {
        StlError::EmptyInput(msg.into())
    }

    pub(crate) fn numerical(reason: impl Into<String>) -> Self {
        StlError::NumericalFailure {
            iteration: None,
            reason: reason.into(),
        }
    }

    /// Tags a numerical failure with the pipeline iteration that produced it.
    pub fn at_iteration(self, iteration: usize) -> Self {
        match self {
            StlError::NumericalFailure { reason, .. } => StlError::NumericalFailure {
                iteration: Some(iteration),
                reason,
            },
            other => other,
        }
    }

    /// True for errors caused by bad user input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, StlError::NumericalFailure { .. })
    }
}

pub type Result<T, E = StlError> = std::result::Result<T, E>;
