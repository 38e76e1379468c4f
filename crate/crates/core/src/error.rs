use thiserror::Error;

pub type Result<T, E = DcotError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DcotError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("mode {mode} out of range for a {ndim}-way tensor")]
    ModeOutOfRange { mode: usize, ndim: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("rank {rank} exceeds size {size} of mode {mode}")]
    RankExceedsMode { mode: usize, rank: usize, size: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid observations: {0}")]
    InvalidObservations(String),

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("all smoothing weights vanish for target {0:?}")]
    DegenerateWeights(Vec<usize>),

    #[error("inner solver stopped at gradient norm {grad_norm:.3e} after {iterations} iterations")]
    InnerSolver { grad_norm: f64, iterations: usize },

    #[error("solver diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Other(String),
}
