use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("degenerate image: pixel mean {mean} is not strictly positive")]
    DegenerateImage { mean: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("token index {index} out of range for {len} tokens")]
    TokenOutOfRange { index: usize, len: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("masked loss is undefined for an empty masked set")]
    EmptyMask,
    #[error("unknown layer selector `{0}`")]
    UnknownSelector(String),
    #[error("layer selector `{0}` resolves to no trainable parameters")]
    EmptyTrainable(String),
    #[error("degenerate variance for output scalar {scalar}: prediction std {std}")]
    DegenerateVariance { scalar: usize, std: f64 },
    #[error("degenerate paired test: differences have zero variance")]
    DegenerateTest,
    #[error("no configuration has a finite validation error")]
    NoValidConfig,
    #[error("config index {index} out of range for {len} configs")]
    ConfigOutOfRange { index: usize, len: usize },
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
