use thiserror::Error;

/// Errors raised by the numerical laboratory.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("h = {h} is not admissible; nearest admissible values: {nearest:?}")]
    InadmissibleH { h: f64, nearest: Vec<f64> },

    #[error("normalization failed: {0}")]
    Normalization(String),

    #[error("bandwidth overflow: {0}; increase the truncation radius")]
    Bandwidth(String),

    #[error("incompatible families: {0}")]
    Incompatible(String),

    #[error("numerical non-convergence: {0}")]
    NonConvergence(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// True for failures caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonConvergence(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
