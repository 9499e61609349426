use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by tensor operators, model assembly, training and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A single axis does not have the size an operator needs.
    #[error("{op}: dimension mismatch on axis `{axis}`: expected {expected}, got {actual}")]
    Dimension {
        op: &'static str,
        axis: &'static str,
        expected: String,
        actual: usize,
    },

    /// Two operand shapes are incompatible.
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: [usize; 4],
        rhs: [usize; 4],
    },

    /// A configuration value is invalid.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// An operation was invoked in the wrong state (e.g. backward without forward).
    #[error("state error: {0}")]
    State(String),

    /// A forward stage produced NaN or infinity.
    #[error("non-finite values produced by layer `{layer}`")]
    NonFinite { layer: String },

    /// Input data violates a documented contract.
    #[error("validation error: {0}")]
    Validation(String),

    /// An image has no mask with the same file stem.
    #[error("missing mask for image `{stem}` (looked in {dir})")]
    MissingMask { stem: String, dir: PathBuf },

    /// Malformed weight container or config file.
    #[error("format error: {0}")]
    Format(String),

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
