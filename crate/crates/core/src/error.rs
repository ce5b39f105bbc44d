use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch (expected {expected}, found {found})")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("column {0} is the zero vector")]
    ZeroColumn(usize),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration diverged at t = {t}")]
    Diverged { t: f64 },

    #[error("event localisation stalled at t = {t} after {events} events")]
    EventStall { t: f64, events: usize },

    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{failed} of {total} instances failed, above the 10% abort threshold")]
    AbortThreshold { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
