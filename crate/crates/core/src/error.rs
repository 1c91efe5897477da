use std::path::PathBuf;

/// Errors produced anywhere in the reconstruction toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The geometry of the problem is degenerate (coplanar samples, singular
    /// matrices, planes through a camera center, ...).
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    /// An iterative solver did not reach its tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// A solver moved away from its starting point instead of improving it.
    #[error("solver diverged: {0}")]
    Diverged(String),

    /// A point or pixel falls outside the region where it is meaningful.
    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    /// Not enough valid data to compute a result.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A file could not be parsed.
    #[error("malformed {kind} file {path}: {reason}")]
    Format { kind: &'static str, path: PathBuf, reason: String },

    /// A file referenced by the configuration does not exist.
    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    /// A pipeline stage failed; `source` carries the underlying error.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    pub(crate) fn format(kind: &'static str, path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { kind, path: path.into(), reason: reason.into() }
    }

    /// Innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
