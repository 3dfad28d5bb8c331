//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid region partition: {0}")]
    InvalidRegion(String),

    #[error("invalid boundary patch: {0}")]
    InvalidPatch(String),

    #[error("potential class violation: {0}")]
    ClassViolation(String),

    #[error("near-resonance: dist(lambda={lambda}, spectrum) = {dist} below guard {guard}")]
    NearResonance { lambda: f64, dist: f64, guard: f64 },

    #[error("eigensolver did not converge: requested {requested}, converged {converged}, worst residual {residual:.3e}")]
    EigenNoConvergence {
        requested: usize,
        converged: usize,
        residual: f64,
    },

    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error("resonant lattice: min |symbol| = {min_abs:.3e} below 1e-8 for every half-integer shift")]
    ResonantLattice { min_abs: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
