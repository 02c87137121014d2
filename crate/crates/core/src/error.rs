use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// The edge relation admits no topological order.
    #[error("cycle detected; nodes on a cycle: {nodes:?}")]
    CycleDetected { nodes: Vec<usize> },

    /// Exhaustive arm enumeration was requested for a graph that is too large.
    #[error("2^{node_count} arms exceed the enumeration guard (node_count <= {guard}); supply an explicit candidate set")]
    TooManyArms { node_count: usize, guard: usize },

    /// The Lasso solver hit its iteration cap with the KKT residual above tolerance.
    #[error("lasso did not converge after {iterations} iterations (KKT residual {residual:.3e})")]
    SolverDidNotConverge { iterations: usize, residual: f64 },

    /// A hard round cap was hit before the learning loop could finish.
    #[error("round budget of {budget} exhausted after {used} rounds: {context}")]
    BudgetExceeded {
        budget: usize,
        used: usize,
        context: String,
    },

    /// An instance failed validation.
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    /// A caller-supplied parameter is out of range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A structured-text file failed to parse.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// An IO failure, annotated with the path it occurred on.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Whether the error stems from bad inputs (files, parameters) rather than
    /// a runtime fault. CLI maps configuration errors to exit code 1 and
    /// runtime faults to exit code 2.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidInstance(_) | Error::InvalidParameter(_) | Error::Parse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
