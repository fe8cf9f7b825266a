use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: String, right: String },
    #[error("dimension mismatch: expected {expected} values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("noise mode index {index} out of range 1..={count}")]
    ModeOutOfRange { index: usize, count: usize },
    #[error("non-finite state at step {step} (t = {t})")]
    BlowUp { step: u64, t: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("window [{t0}, {t1}] not covered by samples spanning [{first}, {last}]")]
    WindowUnavailable { t0: f64, t1: f64, first: f64, last: f64 },
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
