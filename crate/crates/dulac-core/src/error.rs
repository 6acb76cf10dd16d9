//! Error types, grouped by the layer that raises them.

use thiserror::Error;

use crate::coeff::{fmt_q, Q};

pub type Result<T> = std::result::Result<T, Error>;

/// Errors of the exact transseries layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormalError {
    #[error("incompatible generator bases")]
    IncompatibleBasis,
    #[error("exponent {} is outside the declared basis", fmt_q(*.0))]
    ExponentOutsideBasis(Q),
    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),
    #[error("non-parabolic input: {0}")]
    NonParabolic(String),
    #[error("homothety z -> cz with c != 1 needs log c; only l-free integer-exponent series are supported")]
    UnsupportedHomothety,
    #[error("cannot integrate an l2-carrying monomial at z^-1")]
    L2AtMinusOne,
    #[error("zero transseries has no leading block")]
    ZeroSeries,
    #[error("not invertible: {0}")]
    NotInvertible(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("germ is not normalized: {0}")]
    NotNormalized(String),
    #[error("invariant mismatch: {0} vs {1}")]
    InvariantMismatch(String, String),
    #[error("budget too small: {0}")]
    BudgetTooSmall(String),
}

/// Errors of the germ language (parsing and validation).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("leading data mismatch: {0}")]
    LeadingMismatch(String),
    #[error("i/o: {0}")]
    Io(String),
}

/// Errors of the numeric layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    #[error("point outside domain: {0}")]
    OutsideDomain(String),
    #[error("integrator failure: {0}")]
    Integrator(String),
    #[error("delta bound failed: {0}")]
    DeltaBound(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("newton divergence: {0}")]
    Newton(String),
    #[error("precondition: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("formal: {0}")]
    Formal(#[from] FormalError),
    #[error("parse: {0}")]
    Parse(#[from] ParseError),
    #[error("numeric: {0}")]
    Numeric(#[from] NumericError),
    #[error("check failed: {0}")]
    Check(String),
}

impl Error {
    /// Process exit status used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) => 2,
            Error::Formal(FormalError::Malformed(_))
            | Error::Formal(FormalError::NotNormalized(_))
            | Error::Formal(FormalError::ExponentOutsideBasis(_))
            | Error::Formal(FormalError::IncompatibleBasis) => 2,
            Error::Formal(_) => 3,
            Error::Numeric(NumericError::Precondition(_)) => 2,
            Error::Numeric(_) => 3,
            Error::Check(_) => 4,
        }
    }

    pub fn module(&self) -> &'static str {
        match self {
            Error::Formal(_) => "formal",
            Error::Parse(_) => "germ",
            Error::Numeric(_) => "numeric",
            Error::Check(_) => "check",
        }
    }
}
