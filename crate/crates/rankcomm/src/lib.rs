//! Exact-arithmetic toolkit for maps on full matrix rings that commute on
//! rank-k matrix sets.
//!
//! The crate provides, over prime fields GF(p) and the rationals:
//!
//! - exact scalars, dense matrices, rank, and rank-class enumeration
//!   ([`field`], [`matrix`]);
//! - rank-k completions of support patterns, with certification
//!   ([`completion`]);
//! - additive maps as exact operators, the standard form `λx + μ(x)·I`, and
//!   the rank-1 counterexample map ([`linmap`]);
//! - commuting verification over selectable matrix sets, exact commutant
//!   dimension computation, and a mechanical replay of the additive
//!   commuting-map argument ([`commutant`]);
//! - symmetric m-linear maps, their traces, Vandermonde extraction of the
//!   leading commutator, the m-linear replay, and the trace decomposition
//!   `μ₀xᵐ + μ₁(x)xᵐ⁻¹ + … + μₘ(x)` ([`multitrace`]).
//!
//! All arithmetic is exact; there is no floating point anywhere. Randomized
//! operations are seeded and deterministic.

pub mod commutant;
pub mod completion;
pub mod error;
pub mod field;
pub mod json;
mod linalg;
pub mod linmap;
pub mod matrix;
pub mod multitrace;

pub use error::Error;
pub use field::{char_guard, FieldSpec, GuardRequirement, GuardVerdict, Scalar};
pub use matrix::{count_rank, enumerate_rank_k, random_rank_k, Mat};

/// Default enumeration budget: exhaustive runs whose grid exceeds this many
/// candidates are refused rather than attempted.
pub const DEFAULT_BUDGET: u64 = 20_000_000;

/// Default seed for randomized modes, so reports are reproducible unless a
/// seed is given explicitly.
pub const DEFAULT_SEED: u64 = 1;

/// Verification/computation mode shared by the checking operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Check every member of the relevant set.
    Exhaustive,
    /// Check `samples` seeded pseudo-random members.
    Random { samples: u32, seed: u64 },
}

impl Mode {
    pub fn parse(mode: &str, samples: Option<u32>, seed: Option<u64>) -> Result<Mode, Error> {
        match mode {
            "exhaustive" => Ok(Mode::Exhaustive),
            "random" => Ok(Mode::Random {
                samples: samples.unwrap_or(200),
                seed: seed.unwrap_or(DEFAULT_SEED),
            }),
            other => Err(Error::Parse(format!(
                "bad mode {other:?} (expected exhaustive or random)"
            ))),
        }
    }
}
