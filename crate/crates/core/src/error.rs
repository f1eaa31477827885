use core::fmt;

/// Errors raised by the scoring algorithms.
///
/// Variants fall into two groups: contract violations by the caller
/// (shape and parameter problems) and numeric failures discovered while
/// fitting. The CLI maps the latter to a distinct exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input collection that must be non-empty was empty.
    Empty(&'static str),
    /// Two shapes or lengths that must agree did not.
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A parameter is outside its valid range.
    InvalidParameter(&'static str),
    /// A value was NaN or infinite.
    NonFinite(&'static str),
    /// An index referred past the end of a table.
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    /// Too few training samples for an unbiased estimate.
    TooFewSamples { required: usize, found: usize },
    /// Covariance was not positive definite after regularization.
    SingularCovariance { position: usize },
}

impl Error {
    pub(crate) fn mismatch(what: &'static str, expected: usize, found: usize) -> Self {
        Error::ShapeMismatch {
            what,
            expected,
            found,
        }
    }

    /// True for failures of the numerics rather than of the caller's inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::SingularCovariance { .. })
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Empty(what) => write!(f, "{what} must not be empty"),
            Error::ShapeMismatch {
                what,
                expected,
                found,
            } => write!(f, "{what} mismatch: expected {expected}, found {found}"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::IndexOutOfRange { what, index, len } => {
                write!(f, "{what} index {index} out of range (len {len})")
            }
            Error::TooFewSamples { required, found } => {
                write!(f, "need at least {required} samples, found {found}")
            }
            Error::SingularCovariance { position } => {
                write!(f, "covariance at position {position} is not positive definite")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
