use thiserror::Error;

/// Errors raised by the geometry, transport, flow and optimization layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("vertex {0} is isolated")]
    DegenerateVertex(usize),

    #[error("edge {edge} ({i}, {j}) has zero length")]
    DegenerateEdge { edge: usize, i: usize, j: usize },

    #[error("sinkhorn did not converge after {iterations} iterations (marginal violation {violation:e})")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("support size {size} exceeds exact solver limit {limit}")]
    SupportTooLarge { size: usize, limit: usize },

    #[error("flow blowup at step {step}, edge {edge}: non-finite metric update")]
    Blowup { step: usize, edge: usize },

    #[error("optimizer diverged at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    #[error("simplification rate undefined for zero initial betti sum")]
    UndefinedRate,

    #[error("region boundary undefined: {0}")]
    BoundaryUndefined(String),

    #[error("i/o error at {path}: {message}")]
    Io { path: String, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// Process exit code for the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Blowup { .. } | Error::Divergence { .. } | Error::NotConverged { .. } => 2,
            // unreadable or unwritable paths count as bad input
            _ => 3,
        }
    }
}
