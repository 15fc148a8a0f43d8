use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The graph cannot provide what was asked (e.g. second-order gradients on a first-order graph).
    #[error("capability error: {0}")]
    Capability(String),

    /// Dataset content is invalid (labels out of range, too few samples, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A file does not follow the expected container layout.
    #[error("format error: {0}")]
    Format(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// Training produced a non-finite value.
    #[error("training diverged at iteration {iteration}: {what}")]
    Divergence { iteration: usize, what: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
