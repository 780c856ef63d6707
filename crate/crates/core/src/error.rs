use alloc::boxed::Box;
use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("sigma must be positive and finite, got {0}")]
    NonPositiveSigma(f64),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("non-finite value in {what} at iteration {iter}")]
    NonFinite { what: &'static str, iter: usize },
    #[error("sigma {sigma} fell below the guaranteed bound {bound} at iteration {iter}")]
    ScheduleViolation { sigma: f64, bound: f64, iter: usize },
    #[error("cannot aggregate an empty set of client updates")]
    EmptyAggregate,
    #[error("forward cache does not match the current network parameters")]
    StaleCache,
    #[error("energy is undefined for a zero-norm sample")]
    ZeroNormSample,
    #[error("client {client}: {source}")]
    Client { client: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn in_client(self, client: usize) -> Self {
        match self {
            e @ Error::Client { .. } => e,
            e => Error::Client {
                client,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveSigma(sigma))
    }
}
