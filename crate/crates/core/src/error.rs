use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("non-finite input sample")]
    NonFinite,

    #[error("no 1 dB compression point in (0, {limit}]")]
    NoCompressionPoint { limit: f64 },

    #[error("channel Gram matrix at subcarrier {subcarrier} is singular (pivot {pivot:e})")]
    RankDeficient { subcarrier: usize, pivot: f64 },

    #[error("propagation delay of {delay} fine steps exceeds the cyclic prefix coverage")]
    DelayOutOfRange { delay: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(expected: impl ToString, got: impl ToString) -> Error {
    Error::ShapeMismatch {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
