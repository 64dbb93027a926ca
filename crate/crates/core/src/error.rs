use thiserror::Error;

use crate::convex::SolveStatus;
use crate::cutting_plane::SolveDiagnostics;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("riccati iteration did not converge (residual {residual:e})")]
    RiccatiDiverged { residual: f64 },
    #[error("dynamics not contractive: spectral norm {norm:.6} >= 1")]
    NotContractive { norm: f64 },
    #[error("gamma = {gamma} is outside the domain gamma > {floor}")]
    GammaDomain { gamma: f64, floor: f64 },
    #[error("coordinate ascent did not reach a fixed point in {0} iterations")]
    AscentCap(usize),
    #[error("admissible input set is empty: min terminal norm {min_norm:.6e} > radius {radius:.6e}")]
    EmptyInputSet { min_norm: f64, radius: f64 },
    #[error("convex solver returned {status:?}")]
    Solver { status: SolveStatus },
    #[error("cutting-plane iteration cap reached after {} outer / {} master iterations", .0.outer_iterations, .0.master_solves)]
    IterationCap(Box<SolveDiagnostics>),
    #[error("structural check failed: {0}")]
    Structural(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("log error: {0}")]
    Log(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
