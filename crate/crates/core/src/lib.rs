//! Active sampling and uncertainty quantification for noisy low-rank
//! matrix completion.

pub mod error;

pub use error::CoreError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;
