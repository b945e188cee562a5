use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("line {line}: {reason}")]
    Record { line: u64, reason: String },

    #[error("token {token} out of vocabulary for feature '{feature}' (size {vocab_size})")]
    TokenOutOfRange {
        feature: String,
        token: u32,
        vocab_size: usize,
    },

    #[error("schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("non-finite gradient at step {step} in parameter block '{block}'")]
    NonFiniteGradient { step: u64, block: String },

    #[error("non-finite loss at step {step} (batch {batch}): {breakdown}")]
    NonFiniteLoss {
        step: u64,
        batch: u64,
        breakdown: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by the command line for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Shape { .. } => ErrorClass::Usage,
            Error::NonFiniteGradient { .. } | Error::NonFiniteLoss { .. } => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
