//! Internal exact elimination kernels.
//!
//! Prime-field work runs on raw u64 residues so the hot paths (rank
//! filtering, constraint assembly) stay cheap; rational rank uses
//! fraction-free (Bareiss) elimination on cleared integer rows to bound
//! intermediate growth. General small systems over either field go through a
//! `Scalar`-generic solver.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::field::{inv_m, mul_m, sub_m, FieldSpec, Scalar};

/// Row rank of an `nrows x ncols` grid mod p. Mutates the scratch in place.
pub(crate) fn rank_grid_mod(rows: &mut [u64], nrows: usize, ncols: usize, p: u64) -> usize {
    let mut rank = 0;
    for col in 0..ncols {
        if rank == nrows {
            break;
        }
        let mut piv = None;
        for r in rank..nrows {
            if rows[r * ncols + col] % p != 0 {
                piv = Some(r);
                break;
            }
        }
        let Some(piv) = piv else { continue };
        if piv != rank {
            for c in 0..ncols {
                rows.swap(rank * ncols + c, piv * ncols + c);
            }
        }
        let inv = inv_m(rows[rank * ncols + col] % p, p);
        for r in rank + 1..nrows {
            let f = rows[r * ncols + col] % p;
            if f == 0 {
                continue;
            }
            let scale = mul_m(f, inv, p);
            for c in col..ncols {
                let sub = mul_m(scale, rows[rank * ncols + c] % p, p);
                rows[r * ncols + c] = sub_m(rows[r * ncols + c] % p, sub, p);
            }
        }
        rank += 1;
    }
    rank
}

/// Row rank over the rationals by clearing denominators and running
/// fraction-free forward elimination on the integer rows.
pub(crate) fn rank_rational(entries: &[Scalar], nrows: usize, ncols: usize) -> usize {
    let mut rows: Vec<Vec<BigInt>> = Vec::with_capacity(nrows);
    for r in 0..nrows {
        let slice = &entries[r * ncols..(r + 1) * ncols];
        let mut lcm = BigInt::one();
        for s in slice {
            let q = s.rational().expect("rational entries");
            let d = q.denom();
            let g = gcd_big(&lcm, d);
            lcm = &lcm / &g * d;
        }
        rows.push(
            slice
                .iter()
                .map(|s| {
                    let q = s.rational().unwrap();
                    q.numer() * (&lcm / q.denom())
                })
                .collect(),
        );
    }
    // Bareiss: exact division by the previous pivot keeps entries integral.
    let mut prev = BigInt::one();
    let mut rank = 0;
    for col in 0..ncols {
        if rank == nrows {
            break;
        }
        let Some(piv) = (rank..nrows).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(rank, piv);
        for r in rank + 1..nrows {
            for c in col + 1..ncols {
                let num = &rows[rank][col] * &rows[r][c] - &rows[r][col] * &rows[rank][c];
                rows[r][c] = num / &prev;
            }
            rows[r][col] = BigInt::zero();
        }
        prev = rows[rank][col].clone();
        rank += 1;
    }
    rank
}

fn gcd_big(a: &BigInt, b: &BigInt) -> BigInt {
    let mut a = a.abs();
    let mut b = b.abs();
    while !b.is_zero() {
        let r = &a % &b;
        a = b;
        b = r;
    }
    if a.is_zero() {
        BigInt::one()
    } else {
        a
    }
}

/// Incrementally maintained reduced row echelon form over GF(p).
///
/// Rows are kept with pivot 1 and zeros above and below each pivot, so span
/// membership and nullspace extraction read straight off the rows.
pub(crate) struct GfEchelon {
    pub p: u64,
    pub width: usize,
    rows: Vec<Vec<u64>>,
    pivots: Vec<usize>,
}

impl GfEchelon {
    pub fn new(width: usize, p: u64) -> Self {
        GfEchelon { p, width, rows: Vec::new(), pivots: Vec::new() }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Reduces `row` against the current rows; inserts the remainder if it is
    /// nonzero. Returns whether the rank grew.
    pub fn insert(&mut self, mut row: Vec<u64>) -> bool {
        debug_assert_eq!(row.len(), self.width);
        let p = self.p;
        for (r, &pc) in self.rows.iter().zip(&self.pivots) {
            let f = row[pc];
            if f != 0 {
                for (x, y) in row.iter_mut().zip(r) {
                    *x = sub_m(*x, mul_m(f, *y, p), p);
                }
            }
        }
        let Some(lead) = row.iter().position(|&x| x != 0) else {
            return false;
        };
        let inv = inv_m(row[lead], p);
        for x in row.iter_mut() {
            *x = mul_m(*x, inv, p);
        }
        for r in self.rows.iter_mut() {
            let f = r[lead];
            if f != 0 {
                for (x, y) in r.iter_mut().zip(&row) {
                    *x = sub_m(*x, mul_m(f, *y, p), p);
                }
            }
        }
        self.rows.push(row);
        self.pivots.push(lead);
        true
    }

    /// Whether `v` is annihilated by every stored row (dot products vanish).
    pub fn annihilates(&self, v: &[u64]) -> bool {
        debug_assert_eq!(v.len(), self.width);
        let p = self.p as u128;
        self.rows.iter().all(|row| {
            let mut acc: u128 = 0;
            for (&a, &b) in row.iter().zip(v) {
                acc += a as u128 * b as u128;
                if acc >= u128::MAX / 2 {
                    acc %= p;
                }
            }
            acc % p == 0
        })
    }

    /// Nullspace basis in a fixed order: one vector per free column,
    /// ascending.
    pub fn nullspace_basis(&self) -> Vec<Vec<u64>> {
        let p = self.p;
        let mut is_pivot = vec![false; self.width];
        for &pc in &self.pivots {
            is_pivot[pc] = true;
        }
        let mut basis = Vec::new();
        for free in 0..self.width {
            if is_pivot[free] {
                continue;
            }
            let mut v = vec![0u64; self.width];
            v[free] = 1;
            for (row, &pc) in self.rows.iter().zip(&self.pivots) {
                if row[free] != 0 {
                    v[pc] = sub_m(0, row[free], p);
                }
            }
            basis.push(v);
        }
        basis
    }
}

/// Outcome of the generic exact solver.
pub(crate) enum SolveOutcome {
    /// One solution; free variables are pinned to zero.
    Solution(Vec<Scalar>),
    /// The system is inconsistent; carries the original index of a row that
    /// reduced to 0 = nonzero.
    Inconsistent { row: usize },
}

/// Gaussian elimination over any `FieldSpec`, exact arithmetic throughout.
/// `rows` is the coefficient matrix, `rhs` the right-hand side.
pub(crate) fn gauss_solve(
    mut rows: Vec<Vec<Scalar>>,
    mut rhs: Vec<Scalar>,
    spec: &FieldSpec,
) -> SolveOutcome {
    let nrows = rows.len();
    let ncols = if nrows == 0 { 0 } else { rows[0].len() };
    let mut origin: Vec<usize> = (0..nrows).collect();
    let mut pivot_cols = Vec::new();
    let mut rank = 0;
    for col in 0..ncols {
        if rank == nrows {
            break;
        }
        let Some(piv) = (rank..nrows).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(rank, piv);
        rhs.swap(rank, piv);
        origin.swap(rank, piv);
        let inv = rows[rank][col].inv().expect("nonzero pivot");
        for c in col..ncols {
            rows[rank][c] = &rows[rank][c] * &inv;
        }
        rhs[rank] = &rhs[rank] * &inv;
        for r in 0..nrows {
            if r == rank || rows[r][col].is_zero() {
                continue;
            }
            let f = rows[r][col].clone();
            for c in col..ncols {
                let sub = &f * &rows[rank][c];
                rows[r][c] = &rows[r][c] - &sub;
            }
            let sub = &f * &rhs[rank];
            rhs[r] = &rhs[r] - &sub;
        }
        pivot_cols.push(col);
        rank += 1;
    }
    for r in rank..nrows {
        if !rhs[r].is_zero() {
            return SolveOutcome::Inconsistent { row: origin[r] };
        }
    }
    let mut solution = vec![Scalar::zero(spec); ncols];
    for (r, &pc) in pivot_cols.iter().enumerate() {
        solution[pc] = rhs[r].clone();
    }
    SolveOutcome::Solution(solution)
}

/// Calls `f` on every length-`len` digit vector over 0..p in lexicographic
/// (big-endian, leftmost digit most significant) order. Stops early when `f`
/// returns false.
pub(crate) fn for_each_grid(len: usize, p: u64, mut f: impl FnMut(&[u64]) -> bool) {
    let mut digits = vec![0u64; len];
    loop {
        if !f(&digits) {
            return;
        }
        let mut i = len;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < p {
                break;
            }
            digits[i] = 0;
        }
    }
}

/// p^exp with saturation guard: returns None when the value exceeds u128.
pub(crate) fn checked_pow_u128(p: u64, exp: u32) -> Option<u128> {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(p as u128)?;
    }
    Some(acc)
}
