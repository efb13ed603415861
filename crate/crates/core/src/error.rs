use thiserror::Error;

/// Errors produced by the warping kernel, the alignment engine and the CLI.
#[derive(Debug, Error)]
pub enum DifwError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {x} lies outside the domain [{x_min}, {x_max}]")]
    OutOfDomain { x: f64, x_min: f64, x_max: f64 },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("at point {index}: {source}")]
    AtPoint {
        index: usize,
        #[source]
        source: Box<DifwError>,
    },

    #[error("{file}:{line}: {message}")]
    Data {
        file: String,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl DifwError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        DifwError::InvalidArgument(msg.into())
    }

    pub(crate) fn at_point(index: usize, err: DifwError) -> Self {
        DifwError::AtPoint {
            index,
            source: Box::new(err),
        }
    }

    /// The innermost error, with any point-index wrappers removed.
    pub fn root(&self) -> &DifwError {
        match self {
            DifwError::AtPoint { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, DifwError>;
