use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Bad caller input: negative delay, non-finite coefficient, unknown label.
    #[error("invalid input: {0}")]
    Input(String),

    /// Mathematically undefined request, e.g. roots of a constant.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("evaluation at a pole: s = {pole}")]
    EvalAtPole { pole: Complex64 },

    /// Numerical self-check failed inside the engine.
    #[error("numerical diagnostic: {0}")]
    Diagnostic(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Attach context (e.g. the offending inverter count) to the message.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Input(m) => Error::Input(format!("{ctx}: {m}")),
            Error::Domain(m) => Error::Domain(format!("{ctx}: {m}")),
            Error::Diagnostic(m) => Error::Diagnostic(format!("{ctx}: {m}")),
            other => other,
        }
    }
}
