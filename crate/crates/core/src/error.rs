use alloc::string::String;
use core::fmt;

/// Errors raised by the core routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    InvalidArgument { arg: &'static str, reason: String },
    /// Dimensions of two operands do not agree.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// An iterative routine ran out of iterations.
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    /// A linear system could not be solved even after regularisation.
    Singular {
        what: &'static str,
        smallest_singular_value: f64,
        regularization: f64,
    },
    /// A supervised fit ended above its error threshold.
    FitFailed { mse: f64, threshold: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(arg: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            arg,
            reason: reason.into(),
        }
    }

    /// True for numerical failures, false for argument/validation errors.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotConverged { .. } | Error::Singular { .. } | Error::FitFailed { .. }
        )
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument { arg, reason } => write!(f, "invalid argument `{arg}`: {reason}"),
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "dimension mismatch in {what}: expected {expected}, found {found}"),
            Error::NotConverged {
                what,
                iterations,
                residual,
            } => write!(
                f,
                "{what} did not converge after {iterations} iterations (last residual {residual:e})"
            ),
            Error::Singular {
                what,
                smallest_singular_value,
                regularization,
            } => write!(
                f,
                "{what} is singular (smallest singular value {smallest_singular_value:e}, regularization {regularization:e})"
            ),
            Error::FitFailed { mse, threshold } => {
                write!(f, "fit failed: mse {mse:e} above threshold {threshold:e}")
            }
        }
    }
}

impl core::error::Error for Error {}
