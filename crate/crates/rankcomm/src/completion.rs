//! Rank-k completions of support patterns.
//!
//! Given positions (i_r, j_r) to be filled with arbitrary nonzero scalars,
//! find a 0/1 matrix B with disjoint support such that
//! `sum_r z_r e_{i_r j_r} + t B` has rank exactly k for every choice of
//! nonzero z_r and t. Construction strategies are tried in a fixed order and
//! every returned completion is certified over the requested prime field
//! before being handed back; certification, not construction shape, is the
//! contract.

use itertools::Itertools;
use rand::RngExt;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::field::{FieldSpec, Scalar};
use crate::linalg;
use crate::matrix::Mat;
use crate::Mode;

/// Certification budget for exhaustive fill enumeration inside
/// `complete_to_rank`; larger patterns fall back to seeded random fills.
const CERT_BUDGET: u64 = 1_000_000;
const CERT_SAMPLES: u32 = 2000;

/// Extra support beyond k that the bounded search will try.
const SEARCH_SLACK: usize = 2;

/// Positions (1-based, pairwise distinct) to be filled with nonzero scalars.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportPattern {
    n: usize,
    positions: Vec<(usize, usize)>,
}

impl SupportPattern {
    pub fn new(n: usize, positions: Vec<(usize, usize)>) -> Result<Self, Error> {
        for &(i, j) in &positions {
            if i < 1 || i > n || j < 1 || j > n {
                return Err(Error::IndexOutOfRange { i, j, n });
            }
        }
        let mut seen = positions.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidPattern("positions must be pairwise distinct".into()));
        }
        Ok(SupportPattern { n, positions })
    }

    /// Parses the CLI form `i,j;i,j;...`; an empty string is the empty pattern.
    pub fn parse(s: &str, n: usize) -> Result<Self, Error> {
        let s = s.trim();
        let mut positions = Vec::new();
        if !s.is_empty() {
            for part in s.split(';') {
                let (i, j) = part
                    .split_once(',')
                    .ok_or_else(|| Error::Parse(format!("bad position {part:?}")))?;
                let i: usize = i.trim().parse().map_err(|_| Error::Parse(format!("bad position {part:?}")))?;
                let j: usize = j.trim().parse().map_err(|_| Error::Parse(format!("bad position {part:?}")))?;
                positions.push((i, j));
            }
        }
        SupportPattern::new(n, positions)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn v(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    fn distinct_rows_and_cols(&self) -> bool {
        let rows: Vec<usize> = self.positions.iter().map(|p| p.0).sorted().collect();
        let cols: Vec<usize> = self.positions.iter().map(|p| p.1).sorted().collect();
        rows.windows(2).all(|w| w[0] != w[1]) && cols.windows(2).all(|w| w[0] != w[1])
    }

    fn distinct_row_set(&self) -> Vec<usize> {
        self.positions.iter().map(|p| p.0).sorted().dedup().collect()
    }

    fn distinct_col_set(&self) -> Vec<usize> {
        self.positions.iter().map(|p| p.1).sorted().dedup().collect()
    }
}

/// How a completion was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompletionMethod {
    /// Fresh-row/fresh-column units, the constructive recipe for patterns
    /// with pairwise-distinct rows and columns.
    Lemma1Fresh,
    /// One unit per occupied row (or column) in a fresh column (row), plus
    /// fresh diagonal units up to k.
    Padded,
    /// Bounded deterministic search with certification as the oracle.
    Searched,
    /// The pattern alone already has constant rank k; B = 0.
    Empty,
}

impl CompletionMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            CompletionMethod::Lemma1Fresh => "lemma1_fresh",
            CompletionMethod::Padded => "padded",
            CompletionMethod::Searched => "searched",
            CompletionMethod::Empty => "empty",
        }
    }
}

/// Record of the verification performed before a completion was returned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub field: FieldSpec,
    pub mode: Mode,
    pub checks: u64,
}

/// A certified completion matrix B (a sum of distinct matrix units, support
/// disjoint from the pattern).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub pattern: SupportPattern,
    pub b: Mat,
    pub k: usize,
    pub method: CompletionMethod,
    pub certificate: Certificate,
}

impl Completion {
    /// Positions of the units of B, 1-based, sorted.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let n = self.b.n();
        let mut out = Vec::new();
        for i in 1..=n {
            for j in 1..=n {
                if !self.b.get(i, j).is_zero() {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// B reinterpreted over another field (entries are 0/1, so the support
    /// carries over verbatim).
    pub fn b_over(&self, spec: &FieldSpec) -> Mat {
        let n = self.b.n();
        let mut m = Mat::zero(n, spec);
        for (i, j) in self.support() {
            m.set(i, j, Scalar::one(spec));
        }
        m
    }
}

/// Verdict from checking fills of pattern + tB against the target rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompletionVerdict {
    Pass {
        checks: u64,
    },
    /// First offending assignment in enumeration (or sampling) order.
    Fail {
        fills: Vec<Scalar>,
        t: Scalar,
        rank: usize,
        matrix: Mat,
        checks: u64,
    },
}

impl CompletionVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, CompletionVerdict::Pass { .. })
    }
}

/// Checks rank(sum z_r e_{i_r j_r} + tB) = k over assignments of
/// (z_1..z_v, t) in (K*)^(v+1): all of them in exhaustive mode, N seeded
/// tuples in random mode.
pub fn verify_completion(
    pattern: &SupportPattern,
    b: &Mat,
    k: usize,
    field: &FieldSpec,
    mode: Mode,
    budget: u64,
) -> Result<CompletionVerdict, Error> {
    let Some(p) = field.modulus() else {
        return Err(Error::RequiresPrimeField("completion certification"));
    };
    if b.n() != pattern.n {
        return Err(Error::DimensionMismatch(format!(
            "pattern n={} but B is {}x{}",
            pattern.n,
            b.n(),
            b.n()
        )));
    }
    let v = pattern.v();
    let b_res = b.b_residues_over(p);
    match mode {
        Mode::Exhaustive => {
            let needed = linalg::checked_pow_u128(p - 1, (v + 1) as u32).unwrap_or(u128::MAX);
            if needed > budget as u128 {
                return Err(Error::BudgetExceeded { needed, budget });
            }
            let mut verdict = None;
            let mut checks = 0u64;
            // digits range over 0..p-1; value used is digit+1 so every fill
            // is nonzero. Order: (z_1, ..., z_v, t) lexicographic.
            linalg::for_each_grid(v + 1, p - 1, |digits| {
                checks += 1;
                if let Some(rank) =
                    fill_rank_mismatch(pattern, &b_res, k, p, digits)
                {
                    verdict = Some(make_fail(pattern, &b_res, field, p, digits, rank, checks));
                    return false;
                }
                true
            });
            Ok(verdict.unwrap_or(CompletionVerdict::Pass { checks }))
        }
        Mode::Random { samples, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut digits = vec![0u64; v + 1];
            for check in 1..=samples as u64 {
                for d in digits.iter_mut() {
                    *d = rng.random_range(0..p - 1);
                }
                if let Some(rank) = fill_rank_mismatch(pattern, &b_res, k, p, &digits) {
                    return Ok(make_fail(pattern, &b_res, field, p, &digits, rank, check));
                }
            }
            Ok(CompletionVerdict::Pass { checks: samples as u64 })
        }
    }
}

impl Mat {
    fn b_residues_over(&self, p: u64) -> Vec<u64> {
        let n = self.n();
        let mut out = vec![0u64; n * n];
        for i in 1..=n {
            for j in 1..=n {
                if !self.get(i, j).is_zero() {
                    // completions carry 0/1 entries; tolerate arbitrary B by
                    // reducing the residue when already over GF(p)
                    out[(i - 1) * n + (j - 1)] = match self.get(i, j).residue() {
                        Some(r) => r % p,
                        None => 1,
                    };
                }
            }
        }
        out
    }
}

/// Returns Some(actual_rank) iff the assignment misses the target rank.
/// `digits` are 0-based; the fill values are digits+1.
fn fill_rank_mismatch(
    pattern: &SupportPattern,
    b_res: &[u64],
    k: usize,
    p: u64,
    digits: &[u64],
) -> Option<usize> {
    let n = pattern.n;
    let v = pattern.v();
    let t = digits[v] + 1;
    let mut grid: Vec<u64> = b_res.iter().map(|&x| (x * t) % p).collect();
    for (r, &(i, j)) in pattern.positions.iter().enumerate() {
        let cell = &mut grid[(i - 1) * n + (j - 1)];
        *cell = (*cell + digits[r] + 1) % p;
    }
    let rank = linalg::rank_grid_mod(&mut grid, n, n, p);
    if rank == k {
        None
    } else {
        Some(rank)
    }
}

fn make_fail(
    pattern: &SupportPattern,
    b_res: &[u64],
    field: &FieldSpec,
    p: u64,
    digits: &[u64],
    rank: usize,
    checks: u64,
) -> CompletionVerdict {
    let n = pattern.n;
    let v = pattern.v();
    let t = digits[v] + 1;
    let fills: Vec<Scalar> = digits[..v]
        .iter()
        .map(|&d| Scalar::from_residue(d + 1, p))
        .collect();
    let mut grid: Vec<u64> = b_res.iter().map(|&x| (x * t) % p).collect();
    for (r, &(i, j)) in pattern.positions.iter().enumerate() {
        let cell = &mut grid[(i - 1) * n + (j - 1)];
        *cell = (*cell + digits[r] + 1) % p;
    }
    CompletionVerdict::Fail {
        fills,
        t: Scalar::from_residue(t, p),
        rank,
        matrix: Mat::from_residues(n, field, &grid),
        checks,
    }
}

/// Finds and certifies a completion for the pattern at rank k. Strategy
/// order: the fresh-unit recipe for collision-free patterns, then the empty
/// candidate, then row/column padding, then bounded lexicographic search.
/// `Infeasible` reports search exhaustion, never mathematical impossibility.
pub fn complete_to_rank(
    pattern: &SupportPattern,
    k: usize,
    cert_field: &FieldSpec,
) -> Result<Completion, Error> {
    let n = pattern.n;
    if k < 1 || k > n {
        return Err(Error::InvalidRank { k, n });
    }
    let Some(p) = cert_field.modulus() else {
        return Err(Error::RequiresPrimeField("completion certification"));
    };
    let v = pattern.v();
    let cert_mode = {
        let needed = linalg::checked_pow_u128(p - 1, (v + 1) as u32).unwrap_or(u128::MAX);
        if needed <= CERT_BUDGET as u128 {
            Mode::Exhaustive
        } else {
            Mode::Random { samples: CERT_SAMPLES, seed: crate::DEFAULT_SEED }
        }
    };
    let certify = |support: &[(usize, usize)], method: CompletionMethod| -> Option<Completion> {
        let mut b = Mat::zero(n, cert_field);
        for &(i, j) in support {
            b.set(i, j, Scalar::one(cert_field));
        }
        match verify_completion(pattern, &b, k, cert_field, cert_mode, CERT_BUDGET) {
            Ok(CompletionVerdict::Pass { checks }) => Some(Completion {
                pattern: pattern.clone(),
                b,
                k,
                method,
                certificate: Certificate { field: cert_field.clone(), mode: cert_mode, checks },
            }),
            _ => None,
        }
    };

    // (1) pairwise-distinct rows and columns: place k-v units on fresh rows
    // and fresh columns. The pattern contributes constant rank v, the units
    // contribute k-v, so certification cannot fail; it runs anyway.
    if pattern.distinct_rows_and_cols() && v <= k {
        let rows = pattern.distinct_row_set();
        let cols = pattern.distinct_col_set();
        let fresh_rows: Vec<usize> = (1..=n).filter(|r| !rows.contains(r)).collect();
        let fresh_cols: Vec<usize> = (1..=n).filter(|c| !cols.contains(c)).collect();
        let support: Vec<(usize, usize)> = fresh_rows
            .into_iter()
            .zip(fresh_cols)
            .take(k - v)
            .collect();
        if let Some(c) = certify(&support, CompletionMethod::Lemma1Fresh) {
            return Ok(c);
        }
    }

    // (2) the empty candidate: succeeds exactly when the pattern rank is
    // constantly k over nonzero fills.
    if let Some(c) = certify(&[], CompletionMethod::Empty) {
        return Ok(c);
    }

    // (3) padding. Row variant: a unit per occupied row in its own fresh
    // column pins those rows independent for every fill; fresh diagonal units
    // supply the remaining rank.
    let rows = pattern.distinct_row_set();
    let cols = pattern.distinct_col_set();
    let rho = rows.len();
    let gamma = cols.len();
    if rho <= k && k + gamma <= n {
        let fresh_cols: Vec<usize> = (1..=n).filter(|c| !cols.contains(c)).collect();
        let fresh_rows: Vec<usize> = (1..=n).filter(|r| !rows.contains(r)).collect();
        let mut support: Vec<(usize, usize)> = rows
            .iter()
            .zip(&fresh_cols)
            .map(|(&r, &c)| (r, c))
            .collect();
        support.extend(
            fresh_rows
                .iter()
                .zip(fresh_cols.iter().skip(rho))
                .take(k - rho)
                .map(|(&r, &c)| (r, c)),
        );
        if let Some(c) = certify(&support, CompletionMethod::Padded) {
            return Ok(c);
        }
    }
    // Column variant.
    if gamma <= k && k + rho <= n {
        let fresh_rows: Vec<usize> = (1..=n).filter(|r| !rows.contains(r)).collect();
        let fresh_cols: Vec<usize> = (1..=n).filter(|c| !cols.contains(c)).collect();
        let mut support: Vec<(usize, usize)> = fresh_rows
            .iter()
            .zip(&cols)
            .map(|(&r, &c)| (r, c))
            .collect();
        support.extend(
            fresh_rows
                .iter()
                .skip(gamma)
                .zip(fresh_cols.iter())
                .take(k - gamma)
                .map(|(&r, &c)| (r, c)),
        );
        if let Some(c) = certify(&support, CompletionMethod::Padded) {
            return Ok(c);
        }
    }

    // (4) bounded search over candidate supports of increasing size in
    // lexicographic order, certification as the oracle.
    let free: Vec<(usize, usize)> = (1..=n)
        .cartesian_product(1..=n)
        .filter(|pos| !pattern.positions.contains(pos))
        .collect();
    let bound = (k + SEARCH_SLACK).min(free.len());
    for size in 1..=bound {
        for cand in free.iter().copied().combinations(size) {
            if let Some(c) = certify(&cand, CompletionMethod::Searched) {
                return Ok(c);
            }
        }
    }
    Err(Error::Infeasible {
        bound,
        detail: format!(
            "no certified completion with support size <= {bound} for pattern {:?} at k={k} over {cert_field}",
            pattern.positions
        ),
    })
}
