use thiserror::Error;

/// Errors raised by the exact, asymptotic and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("l = {l} is outside the {region} region (boundary l0 = {boundary})")]
    Domain {
        l: u64,
        region: &'static str,
        boundary: f64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: u64, max: u64 },

    #[error("tolerance {requested:e} is not achievable in double precision; best certified bound is {achievable:e}")]
    NumericalCapacity { requested: f64, achievable: f64 },

    #[error("empty input")]
    EmptyInput,
}

impl ModelError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        ModelError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;
