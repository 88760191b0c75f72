//! Dense n x n exact matrices: arithmetic, commutator, rank, and rank-class
//! enumeration/sampling over prime fields.
//!
//! Positions are 1-based in the public API, mirroring the usual matrix-unit
//! indexing e_ij; storage is row-major and 0-based internally.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::RngExt;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::field::{is_prime_u64, FieldSpec, Scalar};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mat {
    n: usize,
    spec: FieldSpec,
    entries: Vec<Scalar>,
}

impl Mat {
    pub fn zero(n: usize, spec: &FieldSpec) -> Mat {
        Mat {
            n,
            spec: spec.clone(),
            entries: vec![Scalar::zero(spec); n * n],
        }
    }

    pub fn identity(n: usize, spec: &FieldSpec) -> Mat {
        let mut m = Mat::zero(n, spec);
        for i in 0..n {
            m.entries[i * n + i] = Scalar::one(spec);
        }
        m
    }

    /// The matrix unit e_ij (1-based).
    pub fn unit(i: usize, j: usize, n: usize, spec: &FieldSpec) -> Result<Mat, Error> {
        if i < 1 || i > n || j < 1 || j > n {
            return Err(Error::IndexOutOfRange { i, j, n });
        }
        let mut m = Mat::zero(n, spec);
        m.entries[(i - 1) * n + (j - 1)] = Scalar::one(spec);
        Ok(m)
    }

    pub fn from_rows(rows: Vec<Vec<Scalar>>, spec: &FieldSpec) -> Result<Mat, Error> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "expected {n} entries per row, got {}",
                    row.len()
                )));
            }
            for s in row {
                if s.spec() != *spec {
                    return Err(Error::MixedFields);
                }
                entries.push(s);
            }
        }
        Ok(Mat { n, spec: spec.clone(), entries })
    }

    /// Builds from a flat row-major entry list of length n^2.
    pub fn from_entries(n: usize, spec: &FieldSpec, entries: Vec<Scalar>) -> Result<Mat, Error> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        if entries.iter().any(|s| s.spec() != *spec) {
            return Err(Error::MixedFields);
        }
        Ok(Mat { n, spec: spec.clone(), entries })
    }

    pub(crate) fn from_residues(n: usize, spec: &FieldSpec, digits: &[u64]) -> Mat {
        let p = spec.modulus().expect("prime field");
        Mat {
            n,
            spec: spec.clone(),
            entries: digits.iter().map(|&d| Scalar::from_residue(d, p)).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    /// Entry at 1-based (i, j).
    pub fn get(&self, i: usize, j: usize) -> &Scalar {
        assert!(i >= 1 && i <= self.n && j >= 1 && j <= self.n, "1-based index in range");
        &self.entries[(i - 1) * self.n + (j - 1)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: Scalar) {
        assert!(i >= 1 && i <= self.n && j >= 1 && j <= self.n, "1-based index in range");
        assert!(value.spec() == self.spec, "entry from the same field");
        self.entries[(i - 1) * self.n + (j - 1)] = value;
    }

    #[inline]
    pub(crate) fn at(&self, r: usize, c: usize) -> &Scalar {
        &self.entries[r * self.n + c]
    }

    /// Flat row-major entries; this is exactly vec(x) in the basis order
    /// e_11, e_12, ..., e_nn.
    pub fn vec_entries(&self) -> &[Scalar] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Scalar::is_zero)
    }

    /// Returns s when the matrix equals s·I.
    pub fn central_scalar(&self) -> Option<Scalar> {
        let s = self.entries[0].clone();
        for r in 0..self.n {
            for c in 0..self.n {
                let e = self.at(r, c);
                if r == c {
                    if *e != s {
                        return None;
                    }
                } else if !e.is_zero() {
                    return None;
                }
            }
        }
        Some(s)
    }

    pub fn scale(&self, s: &Scalar) -> Mat {
        Mat {
            n: self.n,
            spec: self.spec.clone(),
            entries: self.entries.iter().map(|e| e * s).collect(),
        }
    }

    /// self += other · s, without the intermediate allocations of the
    /// operator chain.
    pub fn add_scaled_in_place(&mut self, other: &Mat, s: &Scalar) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            let t = b * s;
            *a = &*a + &t;
        }
    }

    /// x^e with x^0 = I.
    pub fn pow(&self, e: u32) -> Mat {
        let mut acc = Mat::identity(self.n, &self.spec);
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    /// AB - BA.
    pub fn commutator(&self, other: &Mat) -> Mat {
        assert!(self.n == other.n && self.spec == other.spec, "same matrix ring");
        &(self * other) - &(other * self)
    }

    /// Checked variant for unvalidated inputs.
    pub fn try_commutator(&self, other: &Mat) -> Result<Mat, Error> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(format!(
                "commutator of {}x{} and {}x{}",
                self.n, self.n, other.n, other.n
            )));
        }
        if self.spec != other.spec {
            return Err(Error::MixedFields);
        }
        Ok(self.commutator(other))
    }

    /// Row rank by exact elimination: modular over GF(p), fraction-free over
    /// the rationals.
    pub fn rank(&self) -> usize {
        match self.spec.modulus() {
            Some(p) => {
                let mut scratch: Vec<u64> =
                    self.entries.iter().map(|s| s.residue().unwrap()).collect();
                linalg::rank_grid_mod(&mut scratch, self.n, self.n, p)
            }
            None => linalg::rank_rational(&self.entries, self.n, self.n),
        }
    }

    pub(crate) fn residues(&self) -> Vec<u64> {
        self.entries
            .iter()
            .map(|s| s.residue().expect("prime-field matrix"))
            .collect()
    }
}

impl fmt::Display for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|c| self.at(r, c).to_string()).collect();
            writeln!(f, "[{}]", row.join(" "))?;
        }
        Ok(())
    }
}

impl std::ops::Add for &Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        assert!(self.n == rhs.n && self.spec == rhs.spec, "same matrix ring");
        Mat {
            n: self.n,
            spec: self.spec.clone(),
            entries: self.entries.iter().zip(&rhs.entries).map(|(a, b)| a + b).collect(),
        }
    }
}

impl std::ops::Sub for &Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        assert!(self.n == rhs.n && self.spec == rhs.spec, "same matrix ring");
        Mat {
            n: self.n,
            spec: self.spec.clone(),
            entries: self.entries.iter().zip(&rhs.entries).map(|(a, b)| a - b).collect(),
        }
    }
}

impl std::ops::Neg for &Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        Mat {
            n: self.n,
            spec: self.spec.clone(),
            entries: self.entries.iter().map(|a| -a).collect(),
        }
    }
}

impl std::ops::Mul for &Mat {
    type Output = Mat;
    fn mul(self, rhs: &Mat) -> Mat {
        assert!(self.n == rhs.n && self.spec == rhs.spec, "same matrix ring");
        let n = self.n;
        let mut out = Mat::zero(n, &self.spec);
        for i in 0..n {
            for l in 0..n {
                let a = self.at(i, l);
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let prod = a * rhs.at(l, j);
                    out.entries[i * n + j] = &out.entries[i * n + j] + &prod;
                }
            }
        }
        out
    }
}

/// Number of n x n matrices of rank exactly k over GF(q), by the
/// Gaussian-binomial closed form prod_{i<k} (q^n - q^i)^2 / (q^k - q^i).
pub fn count_rank(n: usize, k: usize, q: u64) -> Result<BigUint, Error> {
    if k > n {
        return Err(Error::InvalidRank { k, n });
    }
    if !is_prime_u64(q) {
        return Err(Error::NotPrime(q));
    }
    let qb = BigUint::from(q);
    let qn = qb.pow(n as u32);
    let qk = qb.pow(k as u32);
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..k {
        let qi = qb.pow(i as u32);
        let f = &qn - &qi;
        num *= &f * &f;
        den *= &qk - &qi;
    }
    debug_assert!((&num % &den).is_zero());
    Ok(num / den)
}

/// Deterministic enumeration of every rank-k matrix over a prime field, in
/// lexicographic entry order. Filter-over-all-matrices: correctness over
/// speed, validated against `count_rank`.
#[derive(Debug)]
pub struct RankClassIter {
    n: usize,
    k: usize,
    spec: FieldSpec,
    p: u64,
    digits: Vec<u64>,
    scratch: Vec<u64>,
    done: bool,
}

impl Iterator for RankClassIter {
    type Item = Mat;

    fn next(&mut self) -> Option<Mat> {
        while !self.done {
            self.scratch.copy_from_slice(&self.digits);
            let r = linalg::rank_grid_mod(&mut self.scratch, self.n, self.n, self.p);
            let hit = r == self.k;
            let item = if hit {
                Some(Mat::from_residues(self.n, &self.spec, &self.digits))
            } else {
                None
            };
            // advance the odometer (big-endian lexicographic order)
            let mut i = self.digits.len();
            loop {
                if i == 0 {
                    self.done = true;
                    break;
                }
                i -= 1;
                self.digits[i] += 1;
                if self.digits[i] < self.p {
                    break;
                }
                self.digits[i] = 0;
            }
            if let Some(m) = item {
                return Some(m);
            }
        }
        None
    }
}

/// Yields every rank-k matrix exactly once; total equals `count_rank`.
/// `BudgetExceeded` when p^(n^2) would exceed `budget`.
pub fn enumerate_rank_k(
    n: usize,
    k: usize,
    spec: &FieldSpec,
    budget: u64,
) -> Result<RankClassIter, Error> {
    let Some(p) = spec.modulus() else {
        return Err(Error::RequiresPrimeField("rank-class enumeration"));
    };
    if k > n {
        return Err(Error::InvalidRank { k, n });
    }
    let needed = linalg::checked_pow_u128(p, (n * n) as u32).unwrap_or(u128::MAX);
    if needed > budget as u128 {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    Ok(RankClassIter {
        n,
        k,
        spec: spec.clone(),
        p,
        digits: vec![0; n * n],
        scratch: vec![0; n * n],
        done: false,
    })
}

/// Seeded rank-k sample: the product of a full-column-rank n x k factor and a
/// full-row-rank k x n factor, rejection-sampled. Deterministic per seed.
pub fn random_rank_k(n: usize, k: usize, spec: &FieldSpec, seed: u64) -> Mat {
    assert!(k <= n, "rank at most n");
    if k == 0 {
        return Mat::zero(n, spec);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reseed = seed;
    loop {
        let left = sample_full_rank_factor(n, k, spec, &mut rng);
        let right = sample_full_rank_factor(k, n, spec, &mut rng);
        match (left, right) {
            (Some(l), Some(r)) => {
                let mut out = Mat::zero(n, spec);
                for i in 0..n {
                    for j in 0..n {
                        let mut acc = Scalar::zero(spec);
                        for t in 0..k {
                            let prod = &l[i * k + t] * &r[t * n + j];
                            acc = &acc + &prod;
                        }
                        out.entries[i * n + j] = acc;
                    }
                }
                debug_assert_eq!(out.rank(), k);
                return out;
            }
            _ => {
                // 1000 rejections per factor is practically unreachable;
                // reseed and retry rather than looping forever.
                reseed = reseed.wrapping_add(0x9E37_79B9_7F4A_7C15);
                rng = ChaCha8Rng::seed_from_u64(reseed);
            }
        }
    }
}

/// Samples an r x c factor of full rank min(r, c); None after 1000 rejections.
fn sample_full_rank_factor(
    r: usize,
    c: usize,
    spec: &FieldSpec,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<Scalar>> {
    let want = r.min(c);
    for _ in 0..1000 {
        let entries: Vec<Scalar> = (0..r * c).map(|_| random_scalar(spec, rng)).collect();
        let rank = match spec.modulus() {
            Some(p) => {
                let mut scratch: Vec<u64> = entries.iter().map(|s| s.residue().unwrap()).collect();
                linalg::rank_grid_mod(&mut scratch, r, c, p)
            }
            None => linalg::rank_rational(&entries, r, c),
        };
        if rank == want {
            return Some(entries);
        }
    }
    None
}

/// Uniform residue over GF(p); small integers in [-4, 4] over the rationals.
pub(crate) fn random_scalar(spec: &FieldSpec, rng: &mut ChaCha8Rng) -> Scalar {
    match spec.modulus() {
        Some(p) => Scalar::from_residue(rng.random_range(0..p), p),
        None => Scalar::from_int(rng.random_range(-4..=4), spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gf(p: u64) -> FieldSpec {
        FieldSpec::prime(p).unwrap()
    }

    fn unit(i: usize, j: usize, n: usize, f: &FieldSpec) -> Mat {
        Mat::unit(i, j, n, f).unwrap()
    }

    #[test]
    fn matrix_unit_examples() {
        let f = gf(5);
        let e12 = unit(1, 2, 2, &f);
        assert!(e12.get(1, 2).is_one());
        assert!(e12.get(1, 1).is_zero());
        assert!(e12.get(2, 1).is_zero());
        assert!(Mat::unit(3, 3, 3, &f).unwrap().get(3, 3).is_one());
        assert_eq!(
            Mat::unit(1, 4, 3, &f),
            Err(Error::IndexOutOfRange { i: 1, j: 4, n: 3 })
        );
    }

    #[test]
    fn commutator_examples() {
        let f = gf(7);
        let e11 = unit(1, 1, 2, &f);
        let e12 = unit(1, 2, 2, &f);
        let e21 = unit(2, 1, 2, &f);
        let e22 = unit(2, 2, 2, &f);
        assert_eq!(e11.commutator(&e12), e12);
        assert_eq!(e12.commutator(&e21), &e11 - &e22);
        let i2 = Mat::identity(2, &f);
        let a = random_rank_k(2, 2, &f, 42);
        assert!(i2.commutator(&a).is_zero());
        assert!(a.commutator(&a).is_zero());
    }

    #[test]
    fn rank_examples() {
        let f = gf(5);
        assert_eq!(Mat::identity(3, &f).rank(), 3);
        assert_eq!(Mat::zero(3, &f).rank(), 0);
        // all-ones 2x2 block embedded in M_3
        let mut m = Mat::zero(3, &f);
        for i in 1..=2 {
            for j in 1..=2 {
                m.set(i, j, f.one());
            }
        }
        assert_eq!(m.rank(), 1);
    }

    #[test]
    fn rank_over_rationals() {
        let q = FieldSpec::rationals();
        assert_eq!(Mat::identity(4, &q).rank(), 4);
        let mut m = Mat::zero(2, &q);
        m.set(1, 1, Scalar::parse("1/2", &q).unwrap());
        m.set(1, 2, Scalar::parse("1/3", &q).unwrap());
        m.set(2, 1, Scalar::parse("3/2", &q).unwrap());
        m.set(2, 2, Scalar::parse("1", &q).unwrap());
        assert_eq!(m.rank(), 1);
    }

    #[test]
    fn count_rank_frozen_values() {
        // Derived by exhaustive enumeration (see enumeration tests below and
        // the acceptance suite).
        assert_eq!(count_rank(3, 1, 2).unwrap(), BigUint::from(49u32));
        assert_eq!(count_rank(3, 3, 2).unwrap(), BigUint::from(168u32));
        assert_eq!(count_rank(3, 1, 3).unwrap(), BigUint::from(338u32));
        assert_eq!(count_rank(3, 0, 2).unwrap(), BigUint::from(1u32));
        assert_eq!(count_rank(4, 0, 7).unwrap(), BigUint::from(1u32));
        assert_eq!(count_rank(2, 1, 2).unwrap(), BigUint::from(9u32));
        assert!(matches!(count_rank(2, 3, 5), Err(Error::InvalidRank { .. })));
        assert!(matches!(count_rank(2, 1, 6), Err(Error::NotPrime(6))));
    }

    #[test]
    fn count_rank_sums_to_all_matrices() {
        for n in 1..=3usize {
            for q in [2u64, 3, 5] {
                let total: BigUint = (0..=n)
                    .map(|k| count_rank(n, k, q).unwrap())
                    .sum();
                assert_eq!(total, BigUint::from(q).pow((n * n) as u32));
            }
        }
    }

    #[test]
    fn enumeration_matches_count() {
        for n in 1..=3usize {
            for q in [2u64, 3] {
                let f = gf(q);
                for k in 0..=n {
                    let got = enumerate_rank_k(n, k, &f, 20_000_000).unwrap().count();
                    assert_eq!(BigUint::from(got), count_rank(n, k, q).unwrap(), "n={n} k={k} q={q}");
                }
            }
        }
        assert_eq!(enumerate_rank_k(2, 1, &gf(2), 1000).unwrap().count(), 9);
    }

    #[test]
    fn enumeration_budget() {
        let err = enumerate_rank_k(4, 2, &gf(7), 1000).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
        assert!(matches!(
            enumerate_rank_k(2, 1, &FieldSpec::rationals(), 1000),
            Err(Error::RequiresPrimeField(_))
        ));
    }

    #[test]
    fn enumeration_yields_distinct_rank_k() {
        let f = gf(3);
        let all: Vec<Mat> = enumerate_rank_k(2, 1, &f, 100_000).unwrap().collect();
        for m in &all {
            assert_eq!(m.rank(), 1);
        }
        let mut dedup = all.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), all.len());
    }

    #[test]
    fn random_rank_k_postconditions() {
        let f = gf(5);
        assert_eq!(random_rank_k(3, 2, &f, 1).rank(), 2);
        assert_eq!(random_rank_k(3, 3, &f, 1).rank(), 3);
        assert_eq!(random_rank_k(3, 0, &f, 1), Mat::zero(3, &f));
        let q = FieldSpec::rationals();
        assert_eq!(random_rank_k(2, 1, &q, 7).rank(), 1);
        // determinism
        assert_eq!(random_rank_k(4, 2, &f, 9), random_rank_k(4, 2, &f, 9));
    }

    proptest! {
        #[test]
        fn rank_invariant_under_equivalence(seed in 0u64..500, n in 2usize..=4, k in 0usize..=4) {
            let k = k.min(n);
            let f = gf(5);
            let a = random_rank_k(n, k, &f, seed);
            let p = random_rank_k(n, n, &f, seed.wrapping_add(1));
            let q = random_rank_k(n, n, &f, seed.wrapping_add(2));
            prop_assert_eq!((&(&p * &a) * &q).rank(), k);
        }

        #[test]
        fn commutator_is_bilinear(seed in 0u64..200) {
            let f = gf(7);
            let a = random_rank_k(3, 2, &f, seed);
            let b = random_rank_k(3, 1, &f, seed.wrapping_add(10));
            let c = random_rank_k(3, 3, &f, seed.wrapping_add(20));
            let x = Scalar::from_int(3, &f);
            let y = Scalar::from_int(5, &f);
            let lhs = (&a.scale(&x) + &b.scale(&y)).commutator(&c);
            let rhs = &a.commutator(&c).scale(&x) + &b.commutator(&c).scale(&y);
            prop_assert_eq!(lhs, rhs);
        }
    }
}
