//! Symmetric m-linear maps on M_n(K), their traces T(x) = G(x, ..., x), the
//! even/odd Vandermonde extraction of the leading commutator, the cascade
//! replay for traces commuting on rank-k sets, and the decomposition
//! T(x) = μ₀xᵐ + μ₁(x)xᵐ⁻¹ + ... + μₘ(x).
//!
//! Coefficient tensors are stored on sorted index tuples; multiplicity is
//! handled by full summation at evaluation time. Evaluation iterates the
//! cartesian product of the arguments' nonzero supports, which keeps sparse
//! arguments (unit fills plus completions) cheap.

use std::collections::{BTreeMap, BTreeSet};

use itertools::Itertools;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::commutant::{MatrixSelector, Verdict};
use crate::completion::{complete_to_rank, SupportPattern};
use crate::error::Error;
use crate::field::{char_guard, FieldSpec, GuardRequirement, Scalar};
use crate::linalg::{self, SolveOutcome};
use crate::matrix::{random_scalar, Mat};
use crate::Mode;

/// A raw (not necessarily symmetric) m-map given by its values on ordered
/// basis tuples; missing tuples are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiTable {
    m: u32,
    n: usize,
    spec: FieldSpec,
    entries: BTreeMap<Vec<u16>, Mat>,
}

impl MultiTable {
    pub fn new(m: u32, n: usize, spec: &FieldSpec) -> MultiTable {
        MultiTable { m, n, spec: spec.clone(), entries: BTreeMap::new() }
    }

    /// Tabulates f over every ordered basis tuple (0-based indices in
    /// 0..n^2).
    pub fn from_fn(
        m: u32,
        n: usize,
        spec: &FieldSpec,
        mut f: impl FnMut(&[u16]) -> Mat,
    ) -> MultiTable {
        let n2 = (n * n) as u16;
        let mut entries = BTreeMap::new();
        for tuple in (0..m).map(|_| 0..n2).multi_cartesian_product() {
            let value = f(&tuple);
            if !value.is_zero() {
                entries.insert(tuple, value);
            }
        }
        MultiTable { m, n, spec: spec.clone(), entries }
    }

    pub fn set(&mut self, tuple: Vec<u16>, value: Mat) {
        assert_eq!(tuple.len(), self.m as usize);
        self.entries.insert(tuple, value);
    }

    fn get(&self, tuple: &[u16]) -> Option<&Mat> {
        self.entries.get(tuple)
    }

    /// T(x) = G(x, ..., x) by full summation over ordered tuples.
    pub fn trace_eval(&self, x: &Mat) -> Mat {
        eval_table(&self.entries, self.m, self.n, &self.spec, &vec![x; self.m as usize], false)
    }
}

/// A symmetric m-linear map; storage is canonicalized to sorted tuples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymMultiMap {
    m: u32,
    n: usize,
    spec: FieldSpec,
    coeffs: BTreeMap<Vec<u16>, Mat>,
}

impl SymMultiMap {
    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    /// Builds from values on sorted tuples. Rejects unsorted or out-of-range
    /// tuples and mismatched values.
    pub fn from_sorted_coeffs(
        m: u32,
        n: usize,
        spec: &FieldSpec,
        coeffs: BTreeMap<Vec<u16>, Mat>,
    ) -> Result<SymMultiMap, Error> {
        let n2 = (n * n) as u16;
        for (tuple, value) in &coeffs {
            if tuple.len() != m as usize {
                return Err(Error::InvalidPattern(format!(
                    "tuple {tuple:?} has arity {} instead of {m}",
                    tuple.len()
                )));
            }
            if tuple.windows(2).any(|w| w[0] > w[1]) || tuple.iter().any(|&b| b >= n2) {
                return Err(Error::InvalidPattern(format!(
                    "tuple {tuple:?} is not sorted into 0..{n2}"
                )));
            }
            if value.n() != n {
                return Err(Error::DimensionMismatch(format!(
                    "coefficient for {tuple:?} is {}x{}",
                    value.n(),
                    value.n()
                )));
            }
            if value.spec() != spec {
                return Err(Error::MixedFields);
            }
        }
        Ok(SymMultiMap { m, n, spec: spec.clone(), coeffs })
    }

    pub fn coeffs(&self) -> &BTreeMap<Vec<u16>, Mat> {
        &self.coeffs
    }

    /// Coefficient on a (not necessarily sorted) tuple.
    pub fn coeff(&self, tuple: &[u16]) -> Mat {
        let mut key = tuple.to_vec();
        key.sort_unstable();
        self.coeffs
            .get(&key)
            .cloned()
            .unwrap_or_else(|| Mat::zero(self.n, &self.spec))
    }

    /// Seeded random symmetric map over a prime field.
    pub fn random(m: u32, n: usize, spec: &FieldSpec, seed: u64) -> Result<SymMultiMap, Error> {
        if !spec.is_prime_field() {
            return Err(Error::RationalsNotSampled);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n2 = (n * n) as u16;
        let mut coeffs = BTreeMap::new();
        for tuple in (0..n2).combinations_with_replacement(m as usize) {
            let entries = (0..n * n).map(|_| random_scalar(spec, &mut rng)).collect();
            coeffs.insert(tuple, Mat::from_entries(n, spec, entries).unwrap());
        }
        SymMultiMap::from_sorted_coeffs(m, n, spec, coeffs)
    }

    /// G(args[0], ..., args[m-1]); symmetric, so argument order is
    /// irrelevant. Cost scales with the product of the arguments' support
    /// sizes.
    pub fn mixed_eval(&self, args: &[&Mat]) -> Mat {
        assert_eq!(args.len(), self.m as usize, "one argument per slot");
        eval_table(&self.coeffs, self.m, self.n, &self.spec, args, true)
    }

    /// T(x) = G(x, ..., x).
    pub fn trace_eval(&self, x: &Mat) -> Mat {
        self.mixed_eval(&vec![x; self.m as usize])
    }

    pub fn try_trace_eval(&self, x: &Mat) -> Result<Mat, Error> {
        if x.n() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "trace of an M_{} map at a {}x{} matrix",
                self.n,
                x.n(),
                x.n()
            )));
        }
        if *x.spec() != self.spec {
            return Err(Error::MixedFields);
        }
        Ok(self.trace_eval(x))
    }
}

/// Shared evaluation core: sum over tuples in the product of argument
/// supports of (coefficient on the tuple) scaled by the coordinate product.
/// `sorted_lookup` selects canonicalized (symmetric) storage.
fn eval_table(
    table: &BTreeMap<Vec<u16>, Mat>,
    m: u32,
    n: usize,
    spec: &FieldSpec,
    args: &[&Mat],
    sorted_lookup: bool,
) -> Mat {
    let mut acc = Mat::zero(n, spec);
    let mut supports: Vec<Vec<(u16, &Scalar)>> = Vec::with_capacity(m as usize);
    for x in args {
        assert!(x.n() == n && *x.spec() == *spec, "argument from the same ring");
        let support: Vec<(u16, &Scalar)> = x
            .vec_entries()
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.is_zero())
            .map(|(b, s)| (b as u16, s))
            .collect();
        if support.is_empty() {
            return acc;
        }
        supports.push(support);
    }
    let mut key = vec![0u16; m as usize];
    for combo in supports.iter().multi_cartesian_product() {
        for (slot, (b, _)) in key.iter_mut().zip(&combo) {
            *slot = *b;
        }
        if sorted_lookup {
            key.sort_unstable();
        }
        let Some(coeff) = table.get(&key) else { continue };
        let mut prod = combo[0].1.clone();
        for (_, s) in &combo[1..] {
            prod = &prod * s;
        }
        acc.add_scaled_in_place(coeff, &prod);
    }
    acc
}

/// Symmetrizes a raw m-map: G'(x_1..x_m) = sum over permutations. The trace
/// scales by m!, so the guard requires m! to be invertible.
pub fn symmetrize(raw: &MultiTable) -> Result<SymMultiMap, Error> {
    let m = raw.m;
    let ch = raw.spec.characteristic();
    if ch != 0 && ch <= m as u64 {
        return Err(Error::GuardFailed(format!(
            "symmetrization needs m! nonzero: char {ch} <= m = {m}"
        )));
    }
    let mut sorted_keys: BTreeSet<Vec<u16>> = BTreeSet::new();
    for key in raw.entries.keys() {
        let mut s = key.clone();
        s.sort_unstable();
        sorted_keys.insert(s);
    }
    let mut coeffs = BTreeMap::new();
    for skey in sorted_keys {
        let mut acc = Mat::zero(raw.n, &raw.spec);
        for perm in (0..m as usize).permutations(m as usize) {
            let tuple: Vec<u16> = perm.iter().map(|&i| skey[i]).collect();
            if let Some(v) = raw.get(&tuple) {
                acc = &acc + v;
            }
        }
        if !acc.is_zero() {
            coeffs.insert(skey, acc);
        }
    }
    SymMultiMap::from_sorted_coeffs(m, raw.n, &raw.spec, coeffs)
}

fn binomial(m: u32, r: u32) -> u64 {
    let r = r.min(m - r);
    let mut acc = 1u64;
    for i in 0..r {
        acc = acc * (m - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// The even/odd coefficient split of [T(c+tB), c+tB] at ±t.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityProfile {
    pub m: u32,
    pub zeta: u32,
    pub epsilon: u32,
    /// Top Vandermonde exponent: m for even m, m+1 for odd m.
    pub a: u32,
    /// alpha(h) = C(m,2h)[G(B^(2h), c^(m-2h)), c], h = 0..=zeta.
    pub alpha: Vec<Mat>,
    /// gamma(h) = C(m,2h+1)[G(B^(2h+1), c^(m-2h-1)), B], h = 0..=epsilon.
    pub gamma: Vec<Mat>,
    /// Last unknown of the system: alpha(zeta)+gamma(epsilon) for even m,
    /// gamma(epsilon) for odd m.
    pub y: Mat,
}

pub fn parity_profile(g: &SymMultiMap, c: &Mat, b: &Mat) -> ParityProfile {
    let m = g.m;
    let (zeta, epsilon, a) = parity_split(m);
    let spec = g.spec().clone();
    let mixed = mixed_powers(g, c, b);
    let alpha: Vec<Mat> = (0..=zeta)
        .map(|h| {
            let coeff = Scalar::from_int(binomial(m, 2 * h) as i64, &spec);
            mixed[(2 * h) as usize].commutator(c).scale(&coeff)
        })
        .collect();
    let gamma: Vec<Mat> = (0..=epsilon)
        .map(|h| {
            let coeff = Scalar::from_int(binomial(m, 2 * h + 1) as i64, &spec);
            mixed[(2 * h + 1) as usize].commutator(b).scale(&coeff)
        })
        .collect();
    let y = if m % 2 == 0 {
        &alpha[zeta as usize] + &gamma[epsilon as usize]
    } else {
        gamma[epsilon as usize].clone()
    };
    ParityProfile { m, zeta, epsilon, a, alpha, gamma, y }
}

fn parity_split(m: u32) -> (u32, u32, u32) {
    if m % 2 == 0 {
        (m / 2, m / 2 - 1, m)
    } else {
        ((m - 1) / 2, (m - 1) / 2, m + 1)
    }
}

/// M_r = G(B, ..., B, c, ..., c) with r copies of B, for r = 0..=m.
fn mixed_powers(g: &SymMultiMap, c: &Mat, b: &Mat) -> Vec<Mat> {
    let m = g.m as usize;
    (0..=m)
        .map(|r| {
            let mut args: Vec<&Mat> = vec![b; r];
            args.resize(m, c);
            g.mixed_eval(&args)
        })
        .collect()
}

/// Recovers [T(c), c] from pairwise ±t evaluations at t = 1..epsilon+2 by
/// solving the Vandermonde system in the nodes t^2. The returned value
/// equals `commutator(trace_eval(g, c), c)` for every symmetric g,
/// commuting or not.
pub fn vandermonde_extract(g: &SymMultiMap, c: &Mat, b: &Mat) -> Result<Mat, Error> {
    char_guard(g.spec(), GuardRequirement::Multitrace { m: g.m }).to_result()?;
    let spec = g.spec().clone();
    let m = g.m;
    let (_zeta, epsilon, _a) = parity_split(m);
    let s = (epsilon + 2) as usize;
    let mixed = mixed_powers(g, c, b);
    let half = Scalar::from_int(2, &spec).inv().expect("char != 2 by the guard");
    let mut nodes = Vec::with_capacity(s);
    let mut rhs = Vec::with_capacity(s);
    for t in 1..=s as i64 {
        let ts = Scalar::from_int(t, &spec);
        let x_plus = &(c + &b.scale(&ts));
        let x_minus = &(c - &b.scale(&ts));
        let t_plus = combine_trace(&mixed, m, &ts, &spec);
        let t_minus = combine_trace(&mixed, m, &-&ts, &spec);
        let v = &t_plus.commutator(x_plus) + &t_minus.commutator(x_minus);
        nodes.push(&ts * &ts);
        rhs.push(v.scale(&half));
    }
    let coefs = solve_vandermonde(&nodes, rhs, &spec);
    Ok(coefs.into_iter().next().expect("nonempty system"))
}

/// T(c + tB) assembled from the mixed powers: sum_r C(m,r) t^r M_r.
fn combine_trace(mixed: &[Mat], m: u32, t: &Scalar, spec: &FieldSpec) -> Mat {
    let n = mixed[0].n();
    let mut acc = Mat::zero(n, spec);
    let mut tpow = Scalar::one(spec);
    for (r, mr) in mixed.iter().enumerate() {
        let coeff = Scalar::from_int(binomial(m, r as u32) as i64, spec);
        let scale = &coeff * &tpow;
        acc.add_scaled_in_place(mr, &scale);
        tpow = &tpow * t;
    }
    acc
}

/// Solves sum_j nodes[t]^j u_j = rhs[t] exactly; the nodes are pairwise
/// distinct by the guard, so the Vandermonde matrix is invertible.
fn solve_vandermonde(nodes: &[Scalar], mut rhs: Vec<Mat>, spec: &FieldSpec) -> Vec<Mat> {
    let s = nodes.len();
    let mut v: Vec<Vec<Scalar>> = nodes
        .iter()
        .map(|x| {
            let mut row = Vec::with_capacity(s);
            let mut acc = Scalar::one(spec);
            for _ in 0..s {
                row.push(acc.clone());
                acc = &acc * x;
            }
            row
        })
        .collect();
    for col in 0..s {
        let piv = (col..s).find(|&r| !v[r][col].is_zero()).expect("invertible Vandermonde");
        v.swap(col, piv);
        rhs.swap(col, piv);
        let inv = v[col][col].inv().expect("nonzero pivot");
        for x in v[col].iter_mut() {
            *x = &*x * &inv;
        }
        rhs[col] = rhs[col].scale(&inv);
        for r in 0..s {
            if r == col || v[r][col].is_zero() {
                continue;
            }
            let f = v[r][col].clone();
            for c2 in 0..s {
                let sub = &f * &v[col][c2];
                v[r][c2] = &v[r][c2] - &sub;
            }
            let sub = rhs[col].scale(&f);
            rhs[r] = &rhs[r] - &sub;
        }
    }
    rhs
}

/// Checks [T(x), x] = 0 over the selected set, exhaustively or on seeded
/// samples.
pub fn verify_trace_commuting(
    g: &SymMultiMap,
    sel: MatrixSelector,
    mode: Mode,
    budget: u64,
) -> Result<Verdict, Error> {
    let n = g.n();
    let spec = g.spec().clone();
    match mode {
        Mode::Exhaustive => {
            let Some(p) = spec.modulus() else {
                return Err(Error::RequiresPrimeField("exhaustive verification"));
            };
            let needed = linalg::checked_pow_u128(p, (n * n) as u32).unwrap_or(u128::MAX);
            if needed > budget as u128 {
                return Err(Error::BudgetExceeded { needed, budget });
            }
            let mut fail = None;
            let mut checked = 0u64;
            let mut scratch = vec![0u64; n * n];
            linalg::for_each_grid(n * n, p, |digits| {
                scratch.copy_from_slice(digits);
                let rank = linalg::rank_grid_mod(&mut scratch, n, n, p);
                if !sel.matches_rank(rank, n) {
                    return true;
                }
                checked += 1;
                let x = Mat::from_residues(n, &spec, digits);
                let c = g.trace_eval(&x).commutator(&x);
                if !c.is_zero() {
                    fail = Some((x, c));
                    return false;
                }
                true
            });
            Ok(match fail {
                Some((witness, commutator)) => Verdict::Fail { witness, commutator, checked },
                None => Verdict::Pass { checked },
            })
        }
        Mode::Random { samples, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for checked in 1..=samples as u64 {
                let x = sample_from(sel, n, &spec, &mut rng);
                let c = g.trace_eval(&x).commutator(&x);
                if !c.is_zero() {
                    return Ok(Verdict::Fail { witness: x, commutator: c, checked });
                }
            }
            Ok(Verdict::Pass { checked: samples as u64 })
        }
    }
}

fn sample_from(sel: MatrixSelector, n: usize, spec: &FieldSpec, rng: &mut ChaCha8Rng) -> Mat {
    use rand::RngExt;
    let k = match sel {
        MatrixSelector::RankExact(k) => k,
        MatrixSelector::Invertible => n,
        MatrixSelector::Singular => rng.random_range(0..n as u64) as usize,
        MatrixSelector::All => rng.random_range(0..=n as u64) as usize,
    };
    crate::matrix::random_rank_k(n, k, spec, rng.random_range(0..u64::MAX))
}

/// Replay bookkeeping for one support pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceDerivationEntry {
    pub pattern: Vec<(usize, usize)>,
    pub b_support: Vec<(usize, usize)>,
    pub method: &'static str,
    pub fills_checked: u64,
}

#[derive(Debug, Clone)]
pub enum TraceReplayOutcome {
    /// Every extraction vanished; [T(x), x] = 0 identically, cross-checked
    /// directly.
    CommutingEverywhere {
        extractions: u64,
        log: Vec<TraceDerivationEntry>,
    },
    /// A rank-k matrix on which the trace fails to commute.
    Violation {
        witness: Mat,
        commutator: Mat,
        pattern: Vec<(usize, usize)>,
        fills: Vec<Scalar>,
        log: Vec<TraceDerivationEntry>,
    },
}

/// Mechanically replays the cascade: for every support size v = 1..=m+1 and
/// every v-subset of positions, certify [T(c_v), c_v] = 0 for fills on an
/// interpolation-complete grid via Vandermonde extraction at rank-k points.
/// Fills range over {1..m+2} with the first pinned to 1; per-variable degree
/// is at most m+1 < p-1, so vanishing on the grid is a polynomial identity
/// and multilinearity extends the conclusion to every x. The conclusion is
/// re-checked directly on a probe set (exhaustively when the field fits the
/// budget).
pub fn replay_trace_proof(
    g: &SymMultiMap,
    k: usize,
    budget: u64,
) -> Result<TraceReplayOutcome, Error> {
    let m = g.m;
    let n = g.n();
    let spec = g.spec().clone();
    char_guard(&spec, GuardRequirement::Multitrace { m }).to_result()?;
    if k < m as usize + 1 || k > n {
        return Err(Error::UnsupportedK {
            k,
            detail: format!("needs m+1 <= k <= n, i.e. {} <= k <= {n}", m + 1),
        });
    }
    let cert_field = if spec.is_prime_field() {
        spec.clone()
    } else {
        FieldSpec::prime_unchecked(5)
    };
    let cells: Vec<(usize, usize)> = (1..=n)
        .flat_map(|i| (1..=n).map(move |j| (i, j)))
        .collect();
    let grid_hi = m as i64 + 2; // fills from {1..m+2}, all nonzero since p >= m+4
    let mut log = Vec::new();
    let mut extractions = 0u64;
    for v in 1..=(m as usize + 1) {
        for positions in cells.iter().copied().combinations(v) {
            let pattern = SupportPattern::new(n, positions.clone())?;
            let completion = complete_to_rank(&pattern, k, &cert_field)?;
            let b = completion.b_over(&spec);
            let trusted_rank = completion.certificate.field == spec
                && completion.certificate.mode == Mode::Exhaustive;
            let mut fills_checked = 0u64;
            // odometer over z_2..z_v in {1..m+2}; z_1 = 1 by homogeneity
            let mut digits = vec![1i64; v];
            loop {
                fills_checked += 1;
                extractions += 1;
                let fills: Vec<Scalar> = digits
                    .iter()
                    .map(|&z| Scalar::from_int(z, &spec))
                    .collect();
                let mut c = Mat::zero(n, &spec);
                for (&(i, j), z) in positions.iter().zip(&fills) {
                    c.set(i, j, z.clone());
                }
                let alpha0 = vandermonde_extract(g, &c, &b)?;
                debug_assert_eq!(alpha0, g.trace_eval(&c).commutator(&c));
                if !alpha0.is_zero() {
                    // locate a violating rank-k node for the witness
                    let (_zeta, epsilon, _a) = parity_split(m);
                    for t in 1..=(epsilon + 2) as i64 {
                        for sign in [1i64, -1] {
                            let ts = Scalar::from_int(sign * t, &spec);
                            let x = &c + &b.scale(&ts);
                            if x.rank() != k {
                                continue;
                            }
                            let comm = g.trace_eval(&x).commutator(&x);
                            if !comm.is_zero() {
                                log.push(TraceDerivationEntry {
                                    pattern: positions.clone(),
                                    b_support: completion.support(),
                                    method: completion.method.as_str(),
                                    fills_checked,
                                });
                                return Ok(TraceReplayOutcome::Violation {
                                    witness: x,
                                    commutator: comm,
                                    pattern: positions.clone(),
                                    fills,
                                    log,
                                });
                            }
                        }
                    }
                    return Err(Error::Infeasible {
                        bound: 0,
                        detail: format!(
                            "nonzero extraction at {positions:?} but no rank-{k} node witnesses it over {spec}"
                        ),
                    });
                } else if !trusted_rank {
                    // certification came from another field or sampling:
                    // confirm the evaluation points really had rank k
                    let (_zeta, epsilon, _a) = parity_split(m);
                    for t in 1..=(epsilon + 2) as i64 {
                        for sign in [1i64, -1] {
                            let ts = Scalar::from_int(sign * t, &spec);
                            let x = &c + &b.scale(&ts);
                            if x.rank() != k {
                                return Err(Error::Infeasible {
                                    bound: 0,
                                    detail: format!(
                                        "completion for {positions:?} loses rank {k} at t={} over {spec}",
                                        sign * t
                                    ),
                                });
                            }
                        }
                    }
                }
                // advance fill odometer over positions 1..v
                let mut idx = v;
                loop {
                    if idx <= 1 {
                        digits = Vec::new();
                        break;
                    }
                    idx -= 1;
                    digits[idx] += 1;
                    if digits[idx] <= grid_hi {
                        break;
                    }
                    digits[idx] = 1;
                }
                if digits.is_empty() {
                    break;
                }
            }
            log.push(TraceDerivationEntry {
                pattern: positions.clone(),
                b_support: completion.support(),
                method: completion.method.as_str(),
                fills_checked,
            });
        }
    }

    // direct cross-check of the concluded identity
    let probe_fail = |x: &Mat| -> Option<(Mat, Mat)> {
        let cmt = g.trace_eval(x).commutator(x);
        if cmt.is_zero() {
            None
        } else {
            Some((x.clone(), cmt))
        }
    };
    let mut probes: Vec<Mat> = Vec::new();
    for &(i, j) in &cells {
        probes.push(Mat::unit(i, j, n, &spec)?);
    }
    probes.push(Mat::identity(n, &spec));
    if spec.is_prime_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::DEFAULT_SEED);
        for _ in 0..25 {
            probes.push(sample_from(MatrixSelector::All, n, &spec, &mut rng));
        }
    }
    for x in &probes {
        if let Some((witness, commutator)) = probe_fail(x) {
            return Ok(TraceReplayOutcome::Violation {
                witness,
                commutator,
                pattern: Vec::new(),
                fills: Vec::new(),
                log,
            });
        }
    }
    if let Some(p) = spec.modulus() {
        let needed = linalg::checked_pow_u128(p, (n * n) as u32).unwrap_or(u128::MAX);
        if needed <= budget as u128 {
            if let Verdict::Fail { witness, commutator, .. } =
                verify_trace_commuting(g, MatrixSelector::All, Mode::Exhaustive, budget)?
            {
                return Ok(TraceReplayOutcome::Violation {
                    witness,
                    commutator,
                    pattern: Vec::new(),
                    fills: Vec::new(),
                    log,
                });
            }
        }
    }
    Ok(TraceReplayOutcome::CommutingEverywhere { extractions, log })
}

/// Coefficients of T(x) = μ₀xᵐ + μ₁(x)xᵐ⁻¹ + ... + μₘ(x)·I. Each μ_i is
/// stored as monomial coefficients on sorted i-tuples:
/// μ_i(x) = sum_S c_S · prod_{b in S} x_b.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceDecomposition {
    pub m: u32,
    pub n: usize,
    pub spec: FieldSpec,
    pub mu0: Scalar,
    /// mus[i-1] is the table of μ_i.
    pub mus: Vec<BTreeMap<Vec<u16>, Scalar>>,
}

impl TraceDecomposition {
    pub fn eval_mu(&self, i: usize, x: &Mat) -> Scalar {
        assert!((1..=self.m as usize).contains(&i));
        let mut acc = Scalar::zero(&self.spec);
        for (tuple, c) in &self.mus[i - 1] {
            let mut prod = c.clone();
            for &b in tuple {
                prod = &prod * &x.vec_entries()[b as usize];
            }
            acc = &acc + &prod;
        }
        acc
    }

    /// μ₀xᵐ + sum_i μ_i(x)·x^(m-i), with x⁰ = I.
    pub fn reconstruct(&self, x: &Mat) -> Mat {
        let mut acc = x.pow(self.m).scale(&self.mu0);
        for i in 1..=self.m as usize {
            let mu = self.eval_mu(i, x);
            acc.add_scaled_in_place(&x.pow(self.m - i as u32), &mu);
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceDecomposeOutcome {
    Decomposed(TraceDecomposition),
    /// The coefficient-matching system is inconsistent; the witness names
    /// the sorted tuple and matrix position of one offending equation.
    NotDecomposable { tuple: Vec<u16>, position: (usize, usize) },
}

/// Sum over distinct orderings of the multiset `tuple` of the products of
/// the corresponding matrix units.
fn ordered_unit_product_sum(tuple: &[u16], n: usize, spec: &FieldSpec) -> Mat {
    if tuple.is_empty() {
        return Mat::identity(n, spec);
    }
    let mut orderings: BTreeSet<Vec<u16>> = BTreeSet::new();
    for perm in (0..tuple.len()).permutations(tuple.len()) {
        orderings.insert(perm.iter().map(|&i| tuple[i]).collect());
    }
    let mut acc = Mat::zero(n, spec);
    for ord in orderings {
        let mut prod = Mat::identity(n, spec);
        for &b in &ord {
            let unit = Mat::unit(b as usize / n + 1, b as usize % n + 1, n, spec).unwrap();
            prod = &prod * &unit;
        }
        acc = &acc + &prod;
    }
    acc
}

fn multiset_orderings_count(tuple: &[u16]) -> u64 {
    let mut fact = 1u64;
    for i in 2..=tuple.len() as u64 {
        fact *= i;
    }
    let mut mults: BTreeMap<u16, u64> = BTreeMap::new();
    for &b in tuple {
        *mults.entry(b).or_insert(0) += 1;
    }
    for (_, c) in mults {
        let mut cf = 1u64;
        for i in 2..=c {
            cf *= i;
        }
        fact /= cf;
    }
    fact
}

/// Solves for μ₀ and the μ_i coefficient tables by matching, for every
/// sorted m-tuple of basis indices, the polarization coefficients of both
/// sides of T(x) = sum μ_i(x) x^(m-i). Valid as a function identity because
/// per-variable degrees stay below the characteristic.
pub fn decompose_trace(g: &SymMultiMap) -> Result<TraceDecomposeOutcome, Error> {
    let m = g.m;
    let n = g.n();
    let spec = g.spec().clone();
    let ch = spec.characteristic();
    if ch != 0 && ch <= m as u64 {
        return Err(Error::GuardFailed(format!(
            "trace decomposition needs char 0 or > m: char {ch}, m = {m}"
        )));
    }
    let n2 = (n * n) as u16;

    // unknown layout: [mu0 | mu_1 tuples | ... | mu_m tuples]
    let mut tuple_index: Vec<BTreeMap<Vec<u16>, usize>> = Vec::with_capacity(m as usize);
    let mut offset = 1usize;
    for i in 1..=m as usize {
        let mut map = BTreeMap::new();
        for tuple in (0..n2).combinations_with_replacement(i) {
            map.insert(tuple, offset);
            offset += 1;
        }
        tuple_index.push(map);
    }
    let width = offset;

    let m_tuples: Vec<Vec<u16>> = (0..n2).combinations_with_replacement(m as usize).collect();
    let mut rows: Vec<Vec<Scalar>> = Vec::with_capacity(m_tuples.len() * n * n);
    let mut rhs: Vec<Scalar> = Vec::with_capacity(rows.capacity());
    let mut row_meta: Vec<(usize, (usize, usize))> = Vec::with_capacity(rows.capacity());
    for (s_idx, s_tuple) in m_tuples.iter().enumerate() {
        let ord = Scalar::from_int(multiset_orderings_count(s_tuple) as i64, &spec);
        let lhs = g.coeff(s_tuple).scale(&ord);
        // coefficient of the monomial x^S on the right-hand side
        let mut cols: Vec<(usize, Mat)> = Vec::new();
        cols.push((0, ordered_unit_product_sum(s_tuple, n, &spec)));
        for i in 1..=m as usize {
            let mut seen: BTreeSet<Vec<u16>> = BTreeSet::new();
            for picked in (0..s_tuple.len()).combinations(i) {
                let a: Vec<u16> = picked.iter().map(|&ix| s_tuple[ix]).collect();
                if !seen.insert(a.clone()) {
                    continue;
                }
                let mut rest: Vec<u16> = Vec::with_capacity(s_tuple.len() - i);
                let mut take = picked.iter().copied().peekable();
                for (ix, &b) in s_tuple.iter().enumerate() {
                    if take.peek() == Some(&ix) {
                        take.next();
                    } else {
                        rest.push(b);
                    }
                }
                let unknown = tuple_index[i - 1][&a];
                cols.push((unknown, ordered_unit_product_sum(&rest, n, &spec)));
            }
        }
        for r in 0..n {
            for c in 0..n {
                let mut row = vec![Scalar::zero(&spec); width];
                for (unknown, mat) in &cols {
                    let v = mat.get(r + 1, c + 1);
                    if !v.is_zero() {
                        row[*unknown] = &row[*unknown] + v;
                    }
                }
                rows.push(row);
                rhs.push(lhs.get(r + 1, c + 1).clone());
                row_meta.push((s_idx, (r + 1, c + 1)));
            }
        }
    }
    match linalg::gauss_solve(rows, rhs, &spec) {
        SolveOutcome::Inconsistent { row } => {
            let (s_idx, position) = row_meta[row];
            Ok(TraceDecomposeOutcome::NotDecomposable {
                tuple: m_tuples[s_idx].clone(),
                position,
            })
        }
        SolveOutcome::Solution(u) => {
            let mut mus = Vec::with_capacity(m as usize);
            for i in 1..=m as usize {
                let mut table = BTreeMap::new();
                for (tuple, &ix) in &tuple_index[i - 1] {
                    table.insert(tuple.clone(), u[ix].clone());
                }
                mus.push(table);
            }
            let dec = TraceDecomposition { m, n, spec: spec.clone(), mu0: u[0].clone(), mus };
            // the matched coefficients pin the polynomial; re-check the
            // function identity on a probe set anyway
            let mut probes: Vec<Mat> = Vec::new();
            for b in 0..n2 {
                probes.push(Mat::unit(b as usize / n + 1, b as usize % n + 1, n, &spec)?);
            }
            probes.push(Mat::identity(n, &spec));
            if spec.is_prime_field() {
                let mut rng = ChaCha8Rng::seed_from_u64(crate::DEFAULT_SEED);
                for _ in 0..10 {
                    probes.push(sample_from(MatrixSelector::All, n, &spec, &mut rng));
                }
            }
            for x in &probes {
                assert_eq!(
                    g.trace_eval(x),
                    dec.reconstruct(x),
                    "reconstruction identity must hold"
                );
            }
            Ok(TraceDecomposeOutcome::Decomposed(dec))
        }
    }
}

/// G(x, y) = xy as a raw table; symmetrizing gives xy + yx.
pub fn product_table(n: usize, spec: &FieldSpec) -> MultiTable {
    MultiTable::from_fn(2, n, spec, |tuple| {
        let ua = Mat::unit(tuple[0] as usize / n + 1, tuple[0] as usize % n + 1, n, spec).unwrap();
        let ub = Mat::unit(tuple[1] as usize / n + 1, tuple[1] as usize % n + 1, n, spec).unwrap();
        &ua * &ub
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::random_rank_k;
    use crate::DEFAULT_BUDGET;

    fn gf(p: u64) -> FieldSpec {
        FieldSpec::prime(p).unwrap()
    }

    /// The symmetrized product map: G(x,y) = xy + yx.
    fn jordan_map(n: usize, spec: &FieldSpec) -> SymMultiMap {
        symmetrize(&product_table(n, spec)).unwrap()
    }

    /// G(U_1, U_1) = e_11, all else zero: T(x) = x_11^2 e_11.
    fn coord_square_map(n: usize, spec: &FieldSpec) -> SymMultiMap {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(vec![0u16, 0], Mat::unit(1, 1, n, spec).unwrap());
        SymMultiMap::from_sorted_coeffs(2, n, spec, coeffs).unwrap()
    }

    #[test]
    fn symmetrize_product_map() {
        let f = gf(7);
        let g = jordan_map(3, &f);
        let e11 = Mat::unit(1, 1, 3, &f).unwrap();
        let e12 = Mat::unit(1, 2, 3, &f).unwrap();
        // G(e_11, e_12) = e_11 e_12 + e_12 e_11 = e_12
        assert_eq!(g.mixed_eval(&[&e11, &e12]), e12);
        assert_eq!(g.mixed_eval(&[&e12, &e11]), e12);
        // trace is 2x^2
        let x = random_rank_k(3, 2, &f, 5);
        let two = Scalar::from_int(2, &f);
        assert_eq!(g.trace_eval(&x), x.pow(2).scale(&two));
        // trace of the symmetrization = m! * trace of the raw table
        let raw = product_table(3, &f);
        assert_eq!(g.trace_eval(&x), raw.trace_eval(&x).scale(&two));
    }

    #[test]
    fn symmetrize_fixes_already_symmetric_input() {
        let f = gf(7);
        let sym = jordan_map(2, &f);
        let raw = MultiTable::from_fn(2, 2, &f, |t| sym.coeff(t));
        let twice = symmetrize(&raw).unwrap();
        let x = random_rank_k(2, 2, &f, 3);
        let two = Scalar::from_int(2, &f);
        assert_eq!(twice.trace_eval(&x), sym.trace_eval(&x).scale(&two));
    }

    #[test]
    fn symmetrize_guard() {
        let f = gf(3);
        let raw = MultiTable::new(3, 3, &f);
        assert!(matches!(symmetrize(&raw), Err(Error::GuardFailed(_))));
        assert!(symmetrize(&MultiTable::new(2, 3, &f)).is_ok());
    }

    #[test]
    fn trace_eval_examples() {
        let f = gf(7);
        let g = jordan_map(3, &f);
        let e11 = Mat::unit(1, 1, 3, &f).unwrap();
        let two = Scalar::from_int(2, &f);
        assert_eq!(g.trace_eval(&e11), e11.scale(&two));
        assert!(g.trace_eval(&Mat::zero(3, &f)).is_zero());
        let x = &Mat::unit(1, 2, 3, &f).unwrap() + &Mat::unit(2, 1, 3, &f).unwrap();
        // (e_12 + e_21)^2 = e_11 + e_22; over n=3 that is not I, but the
        // trace is still 2x^2
        assert_eq!(g.trace_eval(&x), x.pow(2).scale(&two));
        let g2 = jordan_map(2, &f);
        let x2 = &Mat::unit(1, 2, 2, &f).unwrap() + &Mat::unit(2, 1, 2, &f).unwrap();
        assert_eq!(g2.trace_eval(&x2), Mat::identity(2, &f).scale(&two));
    }

    #[test]
    fn parity_profile_shapes() {
        let f = gf(7);
        let g2 = jordan_map(3, &f);
        let c = random_rank_k(3, 2, &f, 1);
        let b = random_rank_k(3, 1, &f, 2);
        let pp = parity_profile(&g2, &c, &b);
        assert_eq!((pp.zeta, pp.epsilon, pp.a), (1, 0, 2));
        assert_eq!(pp.alpha.len(), 2);
        assert_eq!(pp.gamma.len(), 1);
        assert_eq!(pp.y, &pp.alpha[1] + &pp.gamma[0]);
        assert_eq!(pp.alpha[0], g2.trace_eval(&c).commutator(&c));

        let f11 = gf(11);
        let g3 = SymMultiMap::random(3, 4, &f11, 0).unwrap();
        let c = random_rank_k(4, 2, &f11, 3);
        let b = random_rank_k(4, 1, &f11, 4);
        let pp = parity_profile(&g3, &c, &b);
        assert_eq!((pp.zeta, pp.epsilon, pp.a), (1, 1, 4));
        assert_eq!(pp.y, pp.gamma[1]);
    }

    #[test]
    fn extraction_trivial_case() {
        let f = gf(7);
        let g = jordan_map(3, &f);
        let c = &Mat::unit(1, 1, 3, &f).unwrap() + &Mat::unit(2, 2, 3, &f).unwrap();
        let b = Mat::unit(3, 3, 3, &f).unwrap();
        let out = vandermonde_extract(&g, &c, &b).unwrap();
        assert!(out.is_zero(), "powers of c commute with c");
    }

    #[test]
    fn extraction_equals_direct_commutator() {
        for (m, n, p) in [(2u32, 3usize, 7u64), (2, 4, 11), (3, 4, 7), (3, 4, 11)] {
            let f = gf(p);
            for seed in 0..5u64 {
                let g = SymMultiMap::random(m, n, &f, seed).unwrap();
                let c = random_rank_k(n, 1 + (seed as usize) % n, &f, seed + 100);
                let b = random_rank_k(n, 1 + (seed as usize + 1) % n, &f, seed + 200);
                let got = vandermonde_extract(&g, &c, &b).unwrap();
                let want = g.trace_eval(&c).commutator(&c);
                assert_eq!(got, want, "m={m} n={n} p={p} seed={seed}");
            }
        }
    }

    #[test]
    fn extraction_guard() {
        let f = gf(5);
        let g = SymMultiMap::random(3, 4, &f, 0).unwrap();
        let c = Mat::identity(4, &f);
        let b = Mat::unit(1, 2, 4, &f).unwrap();
        assert!(matches!(
            vandermonde_extract(&g, &c, &b),
            Err(Error::GuardFailed(_))
        ));
    }

    #[test]
    fn verify_trace_examples() {
        let f = gf(7);
        let g = jordan_map(3, &f);
        let pass = verify_trace_commuting(
            &g,
            MatrixSelector::RankExact(2),
            Mode::Random { samples: 50, seed: 5 },
            DEFAULT_BUDGET,
        )
        .unwrap();
        assert!(pass.passed());

        let bad = coord_square_map(3, &f);
        match verify_trace_commuting(
            &bad,
            MatrixSelector::RankExact(3),
            Mode::Random { samples: 100, seed: 5 },
            DEFAULT_BUDGET,
        )
        .unwrap()
        {
            Verdict::Fail { witness, commutator, .. } => {
                assert_eq!(witness.rank(), 3);
                assert_eq!(bad.trace_eval(&witness).commutator(&witness), commutator);
            }
            _ => panic!("coordinate-square trace does not commute on invertibles"),
        }

        let zero = SymMultiMap::from_sorted_coeffs(2, 2, &f, BTreeMap::new()).unwrap();
        assert!(verify_trace_commuting(&zero, MatrixSelector::All, Mode::Exhaustive, DEFAULT_BUDGET)
            .unwrap()
            .passed());
    }

    #[test]
    fn replay_trace_commuting_map() {
        let f = gf(7);
        let g = jordan_map(3, &f);
        match replay_trace_proof(&g, 3, DEFAULT_BUDGET).unwrap() {
            TraceReplayOutcome::CommutingEverywhere { log, .. } => {
                // every v-subset of the 9 positions for v = 1..=3
                assert_eq!(log.len(), 9 + 36 + 84);
            }
            _ => panic!("xy+yx commutes"),
        }
    }

    #[test]
    fn replay_trace_violation() {
        let f = gf(7);
        let bad = coord_square_map(3, &f);
        match replay_trace_proof(&bad, 3, DEFAULT_BUDGET).unwrap() {
            TraceReplayOutcome::Violation { witness, commutator, .. } => {
                assert_eq!(witness.rank(), 3);
                assert_eq!(bad.trace_eval(&witness).commutator(&witness), commutator);
                assert!(!commutator.is_zero());
            }
            _ => panic!("coordinate-square trace must be rejected"),
        }
    }

    #[test]
    fn replay_trace_k_range() {
        let f = gf(7);
        let g = jordan_map(3, &f);
        assert!(matches!(
            replay_trace_proof(&g, 2, DEFAULT_BUDGET),
            Err(Error::UnsupportedK { .. })
        ));
        let f5 = gf(5);
        let g5 = jordan_map(3, &f5);
        assert!(matches!(
            replay_trace_proof(&g5, 3, DEFAULT_BUDGET),
            Err(Error::GuardFailed(_))
        ));
    }

    #[test]
    fn decompose_jordan_trace() {
        let f = gf(7);
        let g = jordan_map(3, &f);
        match decompose_trace(&g).unwrap() {
            TraceDecomposeOutcome::Decomposed(dec) => {
                assert_eq!(dec.mu0, Scalar::from_int(2, &f));
                assert!(dec.mus[0].values().all(Scalar::is_zero));
                assert!(dec.mus[1].values().all(Scalar::is_zero));
            }
            _ => panic!("2x^2 decomposes"),
        }
    }

    #[test]
    fn decompose_diagonal_trace() {
        // T(x) = d(x)·x with d(x) = sum_i x_ii
        let f = gf(7);
        let n = 3usize;
        let half = Scalar::from_int(2, &f).inv().unwrap();
        let mut coeffs = BTreeMap::new();
        let n2 = (n * n) as u16;
        let is_diag = |b: u16| (b as usize / n) == (b as usize % n);
        for a in 0..n2 {
            for b in a..n2 {
                let ua = Mat::unit(a as usize / n + 1, a as usize % n + 1, n, &f).unwrap();
                let ub = Mat::unit(b as usize / n + 1, b as usize % n + 1, n, &f).unwrap();
                let mut v = Mat::zero(n, &f);
                if is_diag(a) {
                    v = &v + &ub;
                }
                if is_diag(b) {
                    v = &v + &ua;
                }
                // G(U_a, U_b) = (d(U_a) U_b + d(U_b) U_a) / 2
                let v = v.scale(&half);
                if !v.is_zero() {
                    coeffs.insert(vec![a, b], v);
                }
            }
        }
        let g = SymMultiMap::from_sorted_coeffs(2, n, &f, coeffs).unwrap();
        match decompose_trace(&g).unwrap() {
            TraceDecomposeOutcome::Decomposed(dec) => {
                assert!(dec.mu0.is_zero());
                for (tuple, c) in &dec.mus[0] {
                    if is_diag(tuple[0]) {
                        assert!(c.is_one(), "mu_1 is the diagonal sum");
                    } else {
                        assert!(c.is_zero());
                    }
                }
                assert!(dec.mus[1].values().all(Scalar::is_zero));
            }
            _ => panic!("d(x)x decomposes"),
        }
    }

    #[test]
    fn decompose_rejects_coord_square() {
        let f = gf(7);
        let bad = coord_square_map(3, &f);
        match decompose_trace(&bad).unwrap() {
            TraceDecomposeOutcome::NotDecomposable { tuple, position } => {
                assert_eq!(tuple.len(), 2);
                assert!(position.0 >= 1 && position.0 <= 3);
            }
            _ => panic!("x_11^2 e_11 is not of the trace shape"),
        }
    }

    #[test]
    fn decompose_guard() {
        let f = gf(2);
        let zero = SymMultiMap::from_sorted_coeffs(2, 3, &f, BTreeMap::new()).unwrap();
        assert!(matches!(decompose_trace(&zero), Err(Error::GuardFailed(_))));
    }

    #[test]
    fn symmetrize_twice_scales_by_m_factorial_squared() {
        let f = gf(7);
        let raw = product_table(3, &f);
        let once = symmetrize(&raw).unwrap();
        let again_raw = MultiTable::from_fn(2, 3, &f, |t| once.coeff(t));
        let twice = symmetrize(&again_raw).unwrap();
        let x = random_rank_k(3, 3, &f, 8);
        let four = Scalar::from_int(4, &f); // (2!)^2 = 4
        assert_eq!(twice.trace_eval(&x), raw.trace_eval(&x).scale(&four));
    }

    #[test]
    fn random_is_deterministic_and_symmetric() {
        let f = gf(11);
        let a = SymMultiMap::random(3, 3, &f, 9).unwrap();
        let b = SymMultiMap::random(3, 3, &f, 9).unwrap();
        assert_eq!(a, b);
        // symmetric lookup: coeff on any permutation of a tuple agrees
        assert_eq!(a.coeff(&[2, 0, 5]), a.coeff(&[5, 2, 0]));
        assert!(SymMultiMap::random(2, 2, &FieldSpec::rationals(), 0).is_err());
    }
}
