use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("metric is not positive definite at node {node}")]
    NotPositive { node: usize },
    #[error("tilde metric lost positivity at {} node(s), first {:?}", .nodes.len(), .nodes.first())]
    TildeNotPositive { nodes: Vec<usize> },
    #[error("unsupported complex dimension {n}: {reason}")]
    UnsupportedDimension { n: usize, reason: &'static str },
    #[error("operation requires the {expected} variant")]
    VariantMismatch { expected: &'static str },
    #[error("linear solver stopped at relative residual {residual:.3e} after {iterations} iterations")]
    LinearSolve { residual: f64, iterations: usize },
    #[error("Newton stagnated at residual {residual:.3e} after {iterations} iterations")]
    Stagnation { residual: f64, iterations: usize },
    #[error("continuity failed; last accepted t = {last_t}")]
    ContinuityFailed { last_t: f64 },
    #[error("inverse power iteration did not converge (residual {residual:.3e})")]
    PowerIteration { residual: f64 },
    #[error("kernel function changes sign (min {min:.3e}, max {max:.3e})")]
    KernelSignChange { min: f64, max: f64 },
    #[error("conformal factor solve stalled with Gauduchon defect {defect:.3e}")]
    GauduchonStall { defect: f64 },
    #[error("precondition failed: {what} defect {defect:.3e} exceeds {tol:.1e}")]
    Precondition { what: &'static str, defect: f64, tol: f64 },
    #[error("cohomology obstruction: zero mode of entry ({i},{j}) is {magnitude:.3e}")]
    CohomologyObstruction { i: usize, j: usize, magnitude: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Errors caused by invalid input data rather than by a numerical
    /// method failing to converge.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch(_)
                | Error::InvalidGrid(_)
                | Error::NotPositive { .. }
                | Error::UnsupportedDimension { .. }
                | Error::VariantMismatch { .. }
                | Error::Precondition { .. }
                | Error::CohomologyObstruction { .. }
                | Error::InvalidConfig(_)
        )
    }
}
