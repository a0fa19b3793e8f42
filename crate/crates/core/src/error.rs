use thiserror::Error;

/// Errors raised by graph construction, solvers and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("negative bound {bound} for boundary pair ({source_node}, {target_node})")]
    NegativeBound {
        source_node: usize,
        target_node: usize,
        bound: f64,
    },
    #[error("enumeration budget exceeded: {0}")]
    Budget(String),
    #[error("node {0} is unreachable from the boundary")]
    Unreachable(usize),
    #[error("point ({0}, {1}) lies outside the domain")]
    OutsideDomain(f64, f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
