use thiserror::Error;

/// Errors raised by the capsys library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dimension {0} is not a positive even integer")]
    OddDimension(usize),

    #[error("invalid body: {0}")]
    InvalidBody(String),

    #[error("vertex set does not affinely span R^{dim} (rank {rank})")]
    NonSpanning { dim: usize, rank: usize },

    #[error("the origin is not an interior point of the body")]
    OriginNotInterior,

    #[error("quadrature grid of {grid} samples is too small for {modes} Fourier modes (need at least {min})")]
    GridTooSmall {
        grid: usize,
        modes: usize,
        min: usize,
    },

    #[error("loop action {0} is not positive")]
    NonPositiveAction(f64),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("capacity sequence has {len} entries, {needed} needed")]
    SequenceTooShort { len: usize, needed: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("linear program failed: {0}")]
    LinearProgram(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
