use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("{context}: matrix must be square, got {rows}x{cols}")]
    NotSquare {
        context: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("invalid cost matrices: {0}")]
    InvalidCost(String),

    #[error("unstable closed loop (spectral radius {spectral_radius:.6})")]
    UnstableClosedLoop { spectral_radius: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("lyapunov solve did not reach tolerance (residual {residual:.3e})")]
    LyapunovResidual { residual: f64 },

    #[error("controllability check failed (rank {rank} < {n})")]
    Uncontrollable { rank: usize, n: usize },

    #[error("riccati iteration did not converge after {iterations} iterations (last change {change:.3e})")]
    DareNotConverged { iterations: usize, change: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid dither: {0}")]
    InvalidDither(String),

    #[error("field not periodic-averageable: {0}")]
    NotAverageable(String),
}
