//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the library.
///
/// `Config` is for invalid scenario / construction parameters, `Usage` for
/// call-site contract violations (dimension mismatches, empty inputs, bad
/// argument values), `Numerical` for linear-algebra breakdowns, and
/// `DegenerateCombining` for combining requests that cannot be honored
/// (zero channel, rank-deficient zero-forcing).
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("degenerate combining: {0}")]
    DegenerateCombining(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
