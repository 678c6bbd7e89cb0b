use thiserror::Error;

/// Errors surfaced by the model, design, and sampling layers.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A basis failed the orthonormality check.
    #[error("basis is not orthonormal: Gram deviation {deviation:.3e} exceeds {tolerance:.1e}")]
    InvalidBasis { deviation: f64, tolerance: f64 },

    /// Dimension or rank arguments are inconsistent.
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    /// Index outside the matrix, or repeated where forbidden.
    #[error("invalid index: {0}")]
    InvalidIndex(String),

    /// A matrix is outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// A positive-definite factorization failed even after jitter escalation.
    #[error(
        "ill-conditioned system ({context}): condition estimate {condition_estimate:.3e}"
    )]
    IllConditioned {
        context: String,
        condition_estimate: f64,
    },

    /// An invalid configuration value.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The entry oracle failed during an active sampling run.
    #[error("oracle failure at ({row}, {col}): {message}")]
    OracleFailure {
        row: usize,
        col: usize,
        message: String,
    },

    /// Malformed input data file.
    #[error("malformed dataset at line {line}: {message}")]
    MalformedData { line: usize, message: String },

    /// I/O failure with the offending path attached.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Numeric failure that jitter escalation could not repair.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CoreError {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }
}
