use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(
        "power iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("linear system is singular beyond the expected rank deficiency (pivot {pivot:e} at column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("every server has zero incoming endorsement")]
    AllServersUntrusted,

    #[error("degenerate belief: every R_j * R'_j is zero")]
    DegenerateBelief,

    #[error("best response did not converge (budget residual {achieved:e})")]
    OptimizerNonConvergence { achieved: f64 },

    #[error("bootstrap exceeded {cap} restarts")]
    RestartCap { cap: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Input errors exit with 2, numerical or runtime failures with 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::InvalidGraph(_)
            | Error::InvalidConfig(_)
            | Error::InvalidInput(_)
            | Error::Dimension(_)
            | Error::Io(_) => 2,
            _ => 1,
        }
    }
}
