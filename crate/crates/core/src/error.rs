use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("operation requires a {required} generator, got {actual}")]
    ShapeMismatch {
        required: &'static str,
        actual: &'static str,
    },

    #[error("conjugate argument r = {r} lies outside the effective domain")]
    OutsideDomain { r: f64 },

    #[error("{0} is not supported for this generator")]
    Unsupported(&'static str),

    #[error("fixed-point iteration did not converge at step {step} after {iterations} sweeps (last change {last_change:e})")]
    NoConvergence {
        step: usize,
        iterations: usize,
        last_change: f64,
    },

    #[error("numerical invariant violated: {0}")]
    Invariant(String),

    #[error("need at least {required} samples, got {actual}")]
    TooFewSamples { required: usize, actual: usize },

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
