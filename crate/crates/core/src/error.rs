use thiserror::Error;

/// Errors raised by the simulator.
///
/// Per-trial geometric infeasibility is not an error: it is reported as data
/// through [`crate::scaling::TrialOutcome`]. The `Infeasible` and
/// `Degenerate` variants surface from the low-level constructors and are
/// converted into flagged trial rows by the scaling layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration value violates the invariant of its target type.
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: &'static str, reason: String },

    /// An argument lies outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two nodes are closer than the minimum-distance guard.
    #[error("coincident nodes: distance {0:e} below guard")]
    Coincident(f64),

    /// The zero-forcing construction has no solution (empty null space).
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A normalization or projection collapsed numerically.
    #[error("degenerate construction: {0}")]
    Degenerate(String),

    /// An input violates the contract of a rate evaluation.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The destination lies in the source's own square; the direct path applies.
    #[error("destination lies inside the source square")]
    DirectPath,

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
