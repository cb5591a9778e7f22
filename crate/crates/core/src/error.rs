use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("step {t} outside [{min}, {max}]")]
    StepOutOfRange { t: usize, min: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("factor {factor} does not divide {width}x{height}")]
    NotDivisible {
        factor: usize,
        width: usize,
        height: usize,
    },

    #[error("undefined value: {0}")]
    Undefined(String),

    #[error("no comparable SNR: target {target:.3} dB outside [{min:.3}, {max:.3}] dB (guard {guard} dB)")]
    NoComparableSnr {
        target: f64,
        min: f64,
        max: f64,
        guard: f64,
    },

    #[error("singular normal matrix in time bucket {bucket}; use a positive ridge_lambda")]
    SingularSystem { bucket: usize },

    #[error("denoiser `{0}` requires a condition image")]
    MissingCondition(String),

    #[error("denoiser `{0}` does not accept a condition image")]
    UnexpectedCondition(String),

    #[error("unknown denoiser `{0}`")]
    UnknownDenoiser(String),

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("stage {index} ({kind}): {source}")]
    Stage {
        index: usize,
        kind: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn shape(left: impl std::fmt::Display, right: impl std::fmt::Display) -> Self {
        Error::ShapeMismatch {
            left: left.to_string(),
            right: right.to_string(),
        }
    }
}
