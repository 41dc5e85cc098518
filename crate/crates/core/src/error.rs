use thiserror::Error;

/// Errors produced by the model, simulation, fitting and IO layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A value violates a type invariant (negative mass, zeta outside (0, 1), ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An operation was called with arguments outside its domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Inputs that do not determine a unique answer.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Inputs that only admit a non-physical answer.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A simulation configuration that cannot be run as given.
    #[error("configuration error: {0}")]
    Config(String),

    /// A configuration text that failed to parse.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A malformed data file.
    #[error("format error: {0}")]
    Format(String),

    /// A numerical procedure produced a non-finite or otherwise unusable result.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
