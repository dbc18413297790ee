use thiserror::Error;

use crate::field::FieldSnapshot;

pub type Result<T> = std::result::Result<T, VortexError>;

#[derive(Debug, Error)]
pub enum VortexError {
    #[error("grid too coarse: {nx}x{ny} (need at least 16 nodes per axis)")]
    GridTooCoarse { nx: usize, ny: usize },
    #[error("unit-disk grid must be square, got {nx}x{ny}")]
    DiskNotSquare { nx: usize, ny: usize },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("degenerate director at node {index} (|m| = {norm:e})")]
    DegenerateDirector { index: usize, norm: f64 },
    #[error("empty vortex set")]
    EmptyVortexSet,
    #[error("vortices unresolvable at this epsilon: {0}")]
    Unresolvable(String),
    #[error("ball of radius {radius} at ({x}, {y}) is not contained in the domain")]
    BallOutsideDomain { x: f64, y: f64, radius: f64 },
    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },
    #[error("coincident vortices: {0}")]
    CoincidentVortices(String),
    #[error("test function is not flat near vortex {index}: {detail}")]
    NotFlat { index: usize, detail: String },
    #[error("degenerate motion-law coefficient for vortex {0}")]
    DegenerateCoefficient(usize),
    #[error("vortex too close to collision or boundary: rho = {rho:e} <= {r_min:e}")]
    Collision { rho: f64, r_min: f64 },
    #[error("numerical failure at t = {time}: {detail}")]
    Numerical { time: f64, detail: String },
    #[error("numerical blow-up at t = {time}")]
    Blowup { time: f64, last_good: Box<FieldSnapshot> },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl VortexError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        VortexError::Config(msg.into())
    }
}
