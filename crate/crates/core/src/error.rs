use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: out-of-range indices, dimension mismatches, bad parameters.
    #[error("validation error: {0}")]
    Validation(String),

    /// An index set that was required to be a subsystem is not one.
    #[error("structural error: {0}")]
    Structural(String),

    /// Enumeration or search exceeded its cap.
    #[error("overflow: more than {cap} candidates (found at least {found})")]
    Overflow { cap: usize, found: usize },

    /// A trajectory left the finite floating point range.
    #[error("divergence at step {step}")]
    Divergence { step: usize },

    /// Snapshot data carries no information.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Factorisation or eigensolver failure.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Hypothesis of an atomic gluing or compatibility statement violated.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    /// Two atomic measures cannot be matched on their common coordinates.
    #[error("incompatible parts {first} and {second}: {reason}")]
    Incompatible {
        first: usize,
        second: usize,
        reason: String,
    },

    /// More than one atom lies within tolerance of a target atom.
    #[error("ambiguous atom matching: {0}")]
    Ambiguous(String),

    /// Linear equality constraints have no solution.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
