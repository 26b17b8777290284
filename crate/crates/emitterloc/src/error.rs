//! Error types shared by all pipeline stages.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the localization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or truncated input file.
    #[error("format error: {0}")]
    Format(String),

    /// Well-formed input that this implementation does not handle.
    #[error("unsupported input: {0}")]
    Unsupported(String),

    /// Underlying filesystem failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Value outside the representable output range.
    #[error("range error: {0}")]
    Range(String),

    /// Region of interest extends outside its parent image.
    #[error("bounds error: {0}")]
    Bounds(String),

    /// Parameter violates a documented precondition.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Input carries no usable signal (e.g. uniform region).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Quadratic surface fit found a saddle or maximum instead of a minimum.
    #[error("saddle point: {0}")]
    SaddlePoint(String),

    /// Least-squares fit failed (singular system or runaway minimum).
    #[error("fit error: {0}")]
    Fit(String),

    /// One of the four alignment marks could not be registered.
    #[error("alignment mark {index} not found: {reason}")]
    MarkNotFound { index: usize, reason: String },

    /// Rotation iteration did not settle within the allowed iterations.
    /// Carries the sequence of per-iteration angles in degrees.
    #[error("rotation did not converge after {} iterations (angles: {angles_deg:?})", angles_deg.len())]
    Convergence { angles_deg: Vec<f64> },

    /// Non-finite value encountered during optimization or evaluation.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Fisher information matrix is singular or too ill-conditioned to invert.
    #[error("singular information matrix: {0}")]
    SingularInformation(String),
}
