//! Crate-wide error type.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A prime-field modulus failed the primality check.
    NotPrime(u64),
    /// Inversion of the zero element.
    DivisionByZero,
    /// Arithmetic between scalars of different fields.
    MixedFields,
    /// A 1-based matrix position outside 1..=n.
    IndexOutOfRange { i: usize, j: usize, n: usize },
    DimensionMismatch(String),
    /// A target rank outside the valid range for the dimension.
    InvalidRank { k: usize, n: usize },
    InvalidPattern(String),
    /// An exhaustive run would exceed the configured enumeration budget.
    BudgetExceeded { needed: u128, budget: u64 },
    /// Bounded completion search exhausted. Not a claim of nonexistence.
    Infeasible { bound: usize, detail: String },
    UnsupportedDimension { n: usize, min: usize },
    UnsupportedK { k: usize, detail: String },
    /// Random map generation is restricted to prime fields.
    RationalsNotSampled,
    /// The operation only works over a prime field.
    RequiresPrimeField(&'static str),
    /// A characteristic/cardinality hypothesis does not hold.
    GuardFailed(String),
    /// Sampling hit its cap before the dimension stabilized.
    NonConvergence { samples: u32 },
    Parse(String),
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NotPrime(p) => write!(f, "{p} is not prime"),
            Error::DivisionByZero => write!(f, "division by zero"),
            Error::MixedFields => write!(f, "scalars belong to different fields"),
            Error::IndexOutOfRange { i, j, n } => {
                write!(f, "position ({i},{j}) out of range for n={n}")
            }
            Error::DimensionMismatch(d) => write!(f, "dimension mismatch: {d}"),
            Error::InvalidRank { k, n } => write!(f, "rank {k} invalid for dimension {n}"),
            Error::InvalidPattern(d) => write!(f, "invalid support pattern: {d}"),
            Error::BudgetExceeded { needed, budget } => {
                write!(f, "exhaustive run needs {needed} checks, budget is {budget}")
            }
            Error::Infeasible { bound, detail } => {
                write!(f, "search exhausted (support size <= {bound}): {detail}")
            }
            Error::UnsupportedDimension { n, min } => {
                write!(f, "dimension {n} unsupported (needs n >= {min})")
            }
            Error::UnsupportedK { k, detail } => write!(f, "k={k} unsupported: {detail}"),
            Error::RationalsNotSampled => {
                write!(f, "random generation is not defined over the rationals")
            }
            Error::RequiresPrimeField(op) => write!(f, "{op} requires a prime field"),
            Error::GuardFailed(reason) => write!(f, "guard failed: {reason}"),
            Error::NonConvergence { samples } => {
                write!(f, "dimension did not stabilize within {samples} samples")
            }
            Error::Parse(d) => write!(f, "parse error: {d}"),
            Error::Io(d) => write!(f, "io error: {d}"),
        }
    }
}

impl std::error::Error for Error {}

impl Error {
    /// CLI exit code: 2 for guard failures and resource/feasibility limits,
    /// 3 for malformed input.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BudgetExceeded { .. }
            | Error::Infeasible { .. }
            | Error::UnsupportedDimension { .. }
            | Error::UnsupportedK { .. }
            | Error::RationalsNotSampled
            | Error::RequiresPrimeField(_)
            | Error::GuardFailed(_)
            | Error::NonConvergence { .. } => 2,
            _ => 3,
        }
    }
}
