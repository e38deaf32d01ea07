use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] hemap_core::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("projected variance along the normal is not positive ({0})")]
    DegenerateVariance(f64),
    #[error("reference cloud is invalid: {0}")]
    InvalidCloud(String),
    #[error("scenario is invalid: {0}")]
    InvalidScenario(String),
    #[error("no path from cell {start} to cell {goal}")]
    Unreachable { start: usize, goal: usize },
    #[error("only {placed} of {requested} placements are valid")]
    InsufficientPlacements { requested: usize, placed: usize },
    #[error("region {0} has no free cells to place a waypoint")]
    EmptyRegion(usize),
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
