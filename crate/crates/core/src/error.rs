use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("atoms {i} and {k} coincide")]
    CoincidentAtoms { i: usize, k: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("Hilbert space dimension {dim} exceeds the configured cap {cap}")]
    Capacity { dim: usize, cap: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("state is not normalized (norm = {0})")]
    Unnormalized(f64),

    #[error("unknown state name `{0}`")]
    UnknownState(String),

    /// Trace drift or negativity beyond tolerance during integration.
    #[error("numeric diagnostic failed at t = {time}: {detail}; retry with a smaller dt (last dt = {dt})")]
    StepSize { time: f64, dt: f64, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
