use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("covariance is not positive definite even with diagonal jitter {jitter:e}")]
    IllConditioned { jitter: f64 },

    #[error("training diverged at step {step} (iteration {iteration}): loss = {loss}")]
    Divergence {
        step: usize,
        iteration: usize,
        loss: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
