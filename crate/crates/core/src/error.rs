use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to parse graph document: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("region graph is not strongly connected: region {0} cannot reach every other region")]
    NotStronglyConnected(usize),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid stochastic matrix: {0}")]
    InvalidMatrix(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("target distribution has a zero entry at region {0}")]
    ZeroTarget(usize),

    #[error("target is not stationary for the chain (residual {0:.3e})")]
    NotStationary(f64),

    #[error("matrix power series diverged: {0}")]
    Divergent(String),

    #[error("invalid program: {0}")]
    InvalidProgram(String),

    #[error("constraint set is infeasible: {0}")]
    Infeasible(String),

    #[error("linear programming subproblem failed: {0}")]
    Lp(String),
}

pub type Result<T> = std::result::Result<T, Error>;
