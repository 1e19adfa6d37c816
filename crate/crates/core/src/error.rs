use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NonPositiveDefinite { row: usize, pivot: f64 },

    #[error("degenerate triangular factor: diagonal entry {row} is not positive")]
    Degenerate { row: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("output variable was not recorded on this tape")]
    NotOnTape,

    #[error("diffusion kind mismatch: {0}")]
    KindMismatch(&'static str),

    #[error("mixture would need {needed} components, cap is {cap}")]
    ComponentBudgetExceeded { needed: usize, cap: usize },

    #[error("mixture component {index} has a degenerate covariance factor")]
    DegenerateComponent { index: usize },

    #[error("time must be positive, got {0}")]
    NonpositiveTime(f64),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("reference values are identically zero on the evaluation points")]
    ZeroReference,

    #[error("non-positive input to a log-log fit")]
    NonPositiveInput,

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("unknown tag: {0}")]
    UnknownTag(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "training diverged: loss non-finite for {epochs} consecutive epochs (last epoch {epoch})"
    )]
    TrainingDiverged { epoch: usize, epochs: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
