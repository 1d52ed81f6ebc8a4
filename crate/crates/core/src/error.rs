use thiserror::Error;

/// Errors raised across the optimizer, the benchmark harness and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error(
        "covariance matrix is not factorizable at jitter {jitter:e} \
         (closest pair of points at distance {min_pair_distance:e})"
    )]
    IllConditioned { jitter: f64, min_pair_distance: f64 },

    #[error("point already observed (distance {distance:e} to an existing observation)")]
    DuplicateObservation { distance: f64 },

    #[error("lattice resolution exhausted at level {max_level}")]
    ResolutionExhausted { max_level: u32 },

    #[error("insufficient data: {usable} usable entries, need at least {required}")]
    InsufficientData { usable: usize, required: usize },

    #[error("grid too large: {points} points exceeds the limit of {limit}")]
    GridTooLarge { points: usize, limit: usize },

    #[error("objective has no known maximum")]
    MissingKnownMax,

    #[error("index {index} out of range 1..={len}")]
    OutOfRange { index: usize, len: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
