use thiserror::Error;

use crate::signaling_multi::FixedPoint;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid interval: lower end {lo} exceeds upper end {hi}")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("interval [{lo}, {hi}] carries no probability mass")]
    EmptyBin { lo: f64, hi: f64 },

    #[error("invalid source model: {0}")]
    InvalidSource(String),

    #[error("actions must be strictly increasing, got {low} then {high}")]
    Ordering { low: f64, high: f64 },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid game specification: {0}")]
    InvalidSpec(String),

    #[error("coordinate {index} requests full revelation but has bias {bias}")]
    BiasMismatch { index: usize, bias: f64 },

    #[error("outside the domain of {0}")]
    Domain(String),

    #[error("decoder conditional means coincide for both transmitted values")]
    DegeneratePair,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("solver failed: {0}")]
    SolverFailure(String),

    #[error("fixed-point iteration stopped after {} iterations with residual {:e}", .0.iterations, .0.residual)]
    NonConvergence(Box<FixedPoint>),

    #[error("simulation aborted: policy produced a non-finite value at input {input}")]
    SimulationAbort { input: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
