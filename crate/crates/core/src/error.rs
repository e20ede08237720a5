use core::fmt;

use crate::measurement::TraceId;

pub type Result<T> = core::result::Result<T, Error>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Inputs outside an operation's domain (shapes, ranges, sizes).
    Domain,
    /// Measured or fitted data that cannot be used.
    Data,
    /// The requested state or scene violates the physical model.
    Physics,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("{what} = {value} is outside its domain ({allowed})")]
    OutOfDomain {
        what: &'static str,
        value: f64,
        allowed: &'static str,
    },

    #[error("grid side {0} must be a power of two and at least 2")]
    GridSize(usize),

    #[error("field has zero norm")]
    ZeroNorm,

    #[error("covariance matrix is not valid: {0}")]
    InvalidCovariance(&'static str),

    #[error("matrix is singular or not positive definite")]
    Singular,

    #[error("sum of squared overlaps {0} exceeds unity")]
    OverlapExceedsUnity(f64),

    #[error("invalid scene: {0}")]
    InvalidScene(&'static str),

    #[error("invalid trace: {0}")]
    InvalidTrace(&'static str),

    #[error("at least 2 samples per point are required, got {0}")]
    TooFewSamples(u64),

    #[error("phase grid is degenerate for harmonic fitting")]
    DegenerateFit,

    #[error("trace {id}: fitted minimum variance {v_minus} is not positive")]
    Unphysical { id: TraceId, v_minus: f64 },

    #[error("blank reference fit is missing")]
    MissingReference,

    #[error("incomplete {what}: expected {expected}, found {found}")]
    Incomplete {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("infeasible target: {0}")]
    Infeasible(&'static str),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::ShapeMismatch { .. }
            | Error::OutOfDomain { .. }
            | Error::GridSize(_)
            | Error::TooFewSamples(_)
            | Error::InvalidScene(_) => ErrorKind::Domain,
            Error::InvalidTrace(_)
            | Error::DegenerateFit
            | Error::MissingReference
            | Error::Incomplete { .. }
            | Error::ZeroNorm => ErrorKind::Data,
            Error::InvalidCovariance(_)
            | Error::Singular
            | Error::OverlapExceedsUnity(_)
            | Error::Unphysical { .. }
            | Error::Infeasible(_) => ErrorKind::Physics,
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Domain => "domain",
            ErrorKind::Data => "data",
            ErrorKind::Physics => "physics",
        })
    }
}

pub(crate) fn check_range(
    what: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
    allowed: &'static str,
) -> Result<f64> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(value)
    } else {
        Err(Error::OutOfDomain {
            what,
            value,
            allowed,
        })
    }
}
