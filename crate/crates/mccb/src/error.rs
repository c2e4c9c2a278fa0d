use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path} line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid demonstration set: {0}")]
    InvalidDemonstrationSet(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate mixture component {component}: {msg}")]
    DegenerateComponent { component: usize, msg: String },
    #[error("singular covariance block at time index {0}")]
    SingularBlock(usize),
    #[error("underdetermined reproduction: add constraints or Cartesian weight")]
    UnderdeterminedReproduction,
    #[error("infeasible or inconsistent constraints: {0}")]
    InfeasibleConstraints(String),
    #[error("no feasible weight candidate: every inner problem was singular")]
    NoFeasibleCandidate,
    #[error("config error: {0}")]
    Config(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
