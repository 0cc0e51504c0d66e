//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by parsing, preprocessing, fitting, and forecasting.
#[derive(Debug, Error)]
pub enum Error {
    /// A malformed line in a session log or series file.
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    /// A precondition violation: bad argument, misaligned range, degenerate
    /// split, incompatible shapes.
    #[error("{0}")]
    Invalid(String),

    /// A numerical failure during fitting or prediction.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The optimizer hit its iteration cap before converging.
    #[error("optimizer did not converge within {iterations} iterations (best loss {best_loss:e})")]
    NonConvergence { iterations: usize, best_loss: f64 },

    /// Training produced a non-finite loss.
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    /// A model file failed to parse or carried an unknown version tag.
    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for failures of the numerics (as opposed to bad input data).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_) | Error::NonConvergence { .. } | Error::NonFiniteLoss { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
