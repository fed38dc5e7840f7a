//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by tensor ops, layers, synthesis and the training harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are inconsistent with the operation's contract.
    #[error("shape error: {0}")]
    Shape(String),
    /// A configuration value violates its declared range or invariant.
    #[error("config error: {0}")]
    Config(String),
    /// An input left the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A learnable-parameter constraint (nonnegativity, offset floor) is violated.
    #[error("constraint error: {0}")]
    Constraint(String),
    /// An iterative numerical routine failed to converge or produced non-finite values.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// The API was called in an unsupported way (e.g. backward on a non-scalar).
    #[error("usage error: {0}")]
    Usage(String),
    /// A failure inside the training loop, annotated with iteration context.
    #[error("training error: {0}")]
    Train(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Short machine-parsable category token, used by the CLI's one-line
    /// failure reports.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::Constraint(_) => "constraint",
            Error::Numerical(_) => "numerical",
            Error::Usage(_) => "usage",
            Error::Train(_) => "train",
            Error::Io(_) => "io",
            Error::Image(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
