use alloc::string::String;

/// Errors produced by the estimation core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A quadrature or iterative scheme failed to reach its tolerance.
    #[error("numeric error: {what} (residual estimate {residual:e})")]
    Numeric { what: String, residual: f64 },

    /// The scale coefficient was non-positive or non-finite.
    #[error("model violation: scale c(x, gamma) = {value} at observation {index}")]
    ModelViolation { index: usize, value: f64 },

    /// Inconsistent sizes, grids or configuration.
    #[error("usage error: {0}")]
    Usage(String),

    /// The simulated state left the finite range.
    #[error("overflow: state became non-finite at Euler step {step}")]
    Overflow { step: usize },

    /// Every optimizer restart failed.
    #[error("optimization failed: {0}")]
    Optimization(String),

    /// A matrix needed for Studentization is singular.
    #[error("singular matrix in {0}")]
    Singular(String),

    /// Expression parse or evaluation error.
    #[error("expression error: {0}")]
    Expr(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
