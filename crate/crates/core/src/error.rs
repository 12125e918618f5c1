use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("wave function not normalized: norm = {norm}")]
    NotNormalized { norm: f64 },
    #[error("field vanishes at x = {x} (|value| = {magnitude:e})")]
    Vanishing { x: f64, magnitude: f64 },
    #[error("positivity lost: {0}")]
    PositivityLost(String),
    #[error("time {t} outside record span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },
    #[error("support violation: {0}")]
    Support(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
