use thiserror::Error;

/// Errors raised by graph construction, geometry evaluation and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is disconnected: vertex {0} is unreachable from vertex 0")]
    Disconnected(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not a probability vector: {0}")]
    NotProbability(String),

    #[error("not a tangent vector: components sum to {0:e}")]
    NotTangent(f64),

    #[error("point is not in the open simplex (min coordinate {0:e})")]
    NotInterior(f64),

    #[error("mean function is singular at the boundary point ({x}, {y})")]
    BoundarySingularity { x: f64, y: f64 },

    #[error("degenerate spectrum: {zero_count} eigenvalue(s) below {threshold:e} (expected exactly one)")]
    DegenerateSpectrum { zero_count: usize, threshold: f64 },

    #[error("unknown name `{name}` in {registry} registry")]
    UnknownName { registry: &'static str, name: String },

    #[error("Euler-Maruyama step {step} failed after {retries} retries at state {state:?}")]
    StepFailure {
        step: usize,
        retries: usize,
        state: Vec<f64>,
    },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
