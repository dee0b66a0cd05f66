use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature with {m_quad} nodes per axis is not exact for quartic products at n_max = {n_max} (need at least {required})")]
    QuadratureTooCoarse { n_max: usize, m_quad: usize, required: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("fields live on different discretizations")]
    SpaceMismatch,

    #[error("mode ({n1}, {n2}) is not retained by the basis")]
    UnknownMode { n1: usize, n2: usize },

    #[error("epsilon must be positive, got {0}")]
    NonPositiveEps(f64),

    #[error("time step {dt} exceeds the stability bound {bound} ({reason})")]
    StepTooLarge { dt: f64, bound: f64, reason: &'static str },

    #[error("theta rule with K = {k} is below the exactness threshold {required}")]
    ThetaRuleTooSmall { k: usize, required: usize },

    #[error("resonant-sum oracle refused for n_max = {n_max} (limit 8 without override)")]
    OracleTooLarge { n_max: usize },

    #[error("lens transform is singular at t = {t}")]
    LensSingular { t: f64 },

    #[error("non-finite value in state after step {step}")]
    NumericalBlowup { step: usize },

    #[error("need at least 3 snapshots, got {0}")]
    TooFewSnapshots(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error("invariant check failed: {0}")]
    InvariantFailure(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericalBlowup { .. } => 2,
            Error::InvariantFailure(_) => 3,
            _ => 1,
        }
    }
}
