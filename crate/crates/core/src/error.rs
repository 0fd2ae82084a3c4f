use thiserror::Error;

/// Errors produced by the simulation and inference routines.
#[derive(Clone, Debug, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("operation requires a {expected}-dimensional state, got dimension {actual}")]
    UnsupportedDimension { expected: usize, actual: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("parameter {name} = {value} is outside the model domain ({reason})")]
    OutOfDomain {
        name: String,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid parameter vector: {0}")]
    InvalidParameters(String),

    #[error("unknown parameter name `{0}`")]
    UnknownParameter(String),

    #[error("invalid measurement record: {0}")]
    InvalidRecord(String),

    #[error("non-positive trace {trace:e} at step {step}: likelihood underflow or a zero-probability click")]
    NonPositiveTrace { trace: f64, step: usize },

    #[error("numerical instability at step {step}: {reason}")]
    Unstable { step: usize, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("the record has zero likelihood at every grid point")]
    ImpossibleEverywhere,

    #[error("could not draw an initial point with finite posterior after {0} attempts")]
    NoValidStart(usize),

    #[error("empty chain after removing {burnin} burn-in samples of {len}")]
    EmptyChain { burnin: usize, len: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
