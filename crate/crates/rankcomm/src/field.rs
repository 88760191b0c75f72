//! Exact scalar arithmetic over prime fields GF(p) and arbitrary-precision
//! rationals, plus the characteristic/cardinality guards used by the
//! commuting-map machinery.
//!
//! Over these two domains additive maps coincide with linear maps over the
//! prime subfield, which is what lets the rest of the crate represent
//! additive maps as finite exact operators. Extension fields would break that
//! identification and are deliberately not supported.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum FieldKind {
    Prime(u64),
    Rationals,
}

/// An exact scalar domain: GF(p) for a validated prime p, or Q.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldSpec(FieldKind);

/// Field cardinality; `None` means infinite.
pub type Cardinality = Option<u64>;

impl FieldSpec {
    /// GF(p). Fails with `NotPrime` unless p passes a deterministic
    /// Miller-Rabin check.
    pub fn prime(p: u64) -> Result<Self, Error> {
        if is_prime_u64(p) {
            Ok(FieldSpec(FieldKind::Prime(p)))
        } else {
            Err(Error::NotPrime(p))
        }
    }

    pub fn rationals() -> Self {
        FieldSpec(FieldKind::Rationals)
    }

    pub(crate) fn prime_unchecked(p: u64) -> Self {
        debug_assert!(is_prime_u64(p));
        FieldSpec(FieldKind::Prime(p))
    }

    /// 0 for the rationals, p for GF(p).
    pub fn characteristic(&self) -> u64 {
        match self.0 {
            FieldKind::Prime(p) => p,
            FieldKind::Rationals => 0,
        }
    }

    pub fn cardinality(&self) -> Cardinality {
        match self.0 {
            FieldKind::Prime(p) => Some(p),
            FieldKind::Rationals => None,
        }
    }

    pub fn is_prime_field(&self) -> bool {
        matches!(self.0, FieldKind::Prime(_))
    }

    pub fn modulus(&self) -> Option<u64> {
        match self.0 {
            FieldKind::Prime(p) => Some(p),
            FieldKind::Rationals => None,
        }
    }

    /// Parses the CLI form: `p:<prime>` or `Q`.
    pub fn parse(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        if s == "Q" || s == "q" {
            return Ok(FieldSpec::rationals());
        }
        if let Some(rest) = s.strip_prefix("p:") {
            let p: u64 = rest
                .parse()
                .map_err(|_| Error::Parse(format!("bad modulus in field spec {s:?}")))?;
            return FieldSpec::prime(p);
        }
        Err(Error::Parse(format!(
            "bad field spec {s:?} (expected p:<prime> or Q)"
        )))
    }

    pub fn zero(&self) -> Scalar {
        Scalar::zero(self)
    }

    pub fn one(&self) -> Scalar {
        Scalar::one(self)
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            FieldKind::Prime(p) => write!(f, "GF({p})"),
            FieldKind::Rationals => write!(f, "Q"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Repr {
    /// Canonical residue in [0, p).
    Prime { p: u64, r: u64 },
    /// Reduced fraction.
    Rational(Box<BigRational>),
}

/// An exact field element in canonical form. Equality is representational.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Scalar(Repr);

impl Scalar {
    pub fn zero(spec: &FieldSpec) -> Scalar {
        match spec.0 {
            FieldKind::Prime(p) => Scalar(Repr::Prime { p, r: 0 }),
            FieldKind::Rationals => Scalar(Repr::Rational(Box::new(BigRational::zero()))),
        }
    }

    pub fn one(spec: &FieldSpec) -> Scalar {
        Scalar::from_int(1, spec)
    }

    /// Embeds an integer as n·1 in the field.
    pub fn from_int(value: i64, spec: &FieldSpec) -> Scalar {
        match spec.0 {
            FieldKind::Prime(p) => {
                let r = (value as i128).rem_euclid(p as i128) as u64;
                Scalar(Repr::Prime { p, r })
            }
            FieldKind::Rationals => Scalar(Repr::Rational(Box::new(BigRational::from_integer(
                BigInt::from(value),
            )))),
        }
    }

    pub(crate) fn from_residue(r: u64, p: u64) -> Scalar {
        Scalar(Repr::Prime { p, r: r % p })
    }

    pub(crate) fn residue(&self) -> Option<u64> {
        match &self.0 {
            Repr::Prime { r, .. } => Some(*r),
            Repr::Rational(_) => None,
        }
    }

    pub fn spec(&self) -> FieldSpec {
        match &self.0 {
            Repr::Prime { p, .. } => FieldSpec::prime_unchecked(*p),
            Repr::Rational(_) => FieldSpec::rationals(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.0 {
            Repr::Prime { r, .. } => *r == 0,
            Repr::Rational(q) => q.is_zero(),
        }
    }

    pub fn is_one(&self) -> bool {
        match &self.0 {
            Repr::Prime { r, .. } => *r == 1,
            Repr::Rational(q) => q.is_one(),
        }
    }

    pub fn try_add(&self, other: &Scalar) -> Result<Scalar, Error> {
        match (&self.0, &other.0) {
            (Repr::Prime { p, r: a }, Repr::Prime { p: q, r: b }) if p == q => {
                Ok(Scalar(Repr::Prime { p: *p, r: add_m(*a, *b, *p) }))
            }
            (Repr::Rational(a), Repr::Rational(b)) => {
                Ok(Scalar(Repr::Rational(Box::new(&**a + &**b))))
            }
            _ => Err(Error::MixedFields),
        }
    }

    pub fn try_sub(&self, other: &Scalar) -> Result<Scalar, Error> {
        match (&self.0, &other.0) {
            (Repr::Prime { p, r: a }, Repr::Prime { p: q, r: b }) if p == q => {
                Ok(Scalar(Repr::Prime { p: *p, r: sub_m(*a, *b, *p) }))
            }
            (Repr::Rational(a), Repr::Rational(b)) => {
                Ok(Scalar(Repr::Rational(Box::new(&**a - &**b))))
            }
            _ => Err(Error::MixedFields),
        }
    }

    pub fn try_mul(&self, other: &Scalar) -> Result<Scalar, Error> {
        match (&self.0, &other.0) {
            (Repr::Prime { p, r: a }, Repr::Prime { p: q, r: b }) if p == q => {
                Ok(Scalar(Repr::Prime { p: *p, r: mul_m(*a, *b, *p) }))
            }
            (Repr::Rational(a), Repr::Rational(b)) => {
                Ok(Scalar(Repr::Rational(Box::new(&**a * &**b))))
            }
            _ => Err(Error::MixedFields),
        }
    }

    /// Multiplicative inverse; `DivisionByZero` on the zero element.
    pub fn inv(&self) -> Result<Scalar, Error> {
        match &self.0 {
            Repr::Prime { p, r } => {
                if *r == 0 {
                    Err(Error::DivisionByZero)
                } else {
                    Ok(Scalar(Repr::Prime { p: *p, r: inv_m(*r, *p) }))
                }
            }
            Repr::Rational(q) => {
                if q.is_zero() {
                    Err(Error::DivisionByZero)
                } else {
                    Ok(Scalar(Repr::Rational(Box::new(q.recip()))))
                }
            }
        }
    }

    pub fn pow(&self, mut e: u64) -> Scalar {
        let mut base = self.clone();
        let mut acc = Scalar::one(&self.spec());
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.try_mul(&base).expect("same field");
            }
            base = base.try_mul(&base).expect("same field");
            e >>= 1;
        }
        acc
    }

    /// Parses the serialized form: a decimal residue for prime fields, or
    /// `a/b` (reduced automatically) for rationals. Integers are reduced into
    /// the field either way.
    pub fn parse(s: &str, spec: &FieldSpec) -> Result<Scalar, Error> {
        let s = s.trim();
        let bad = || Error::Parse(format!("bad scalar {s:?}"));
        let (num_str, den_str) = match s.split_once('/') {
            Some((n, d)) => (n, Some(d)),
            None => (s, None),
        };
        let num: BigInt = num_str.parse().map_err(|_| bad())?;
        let den: BigInt = match den_str {
            Some(d) => d.parse().map_err(|_| bad())?,
            None => BigInt::one(),
        };
        if den.is_zero() {
            return Err(Error::DivisionByZero);
        }
        match spec.0 {
            FieldKind::Prime(p) => {
                let pi = BigInt::from(p);
                let n = ((num % &pi) + &pi) % &pi;
                let d = ((den % &pi) + &pi) % &pi;
                let n64: u64 = n.try_into().unwrap();
                let d64: u64 = d.try_into().unwrap();
                let nres = Scalar::from_residue(n64, p);
                if d64 == 1 {
                    Ok(nres)
                } else {
                    let dres = Scalar::from_residue(d64, p);
                    nres.try_mul(&dres.inv()?)
                }
            }
            FieldKind::Rationals => Ok(Scalar(Repr::Rational(Box::new(BigRational::new(
                num, den,
            ))))),
        }
    }

    pub(crate) fn rational(&self) -> Option<&BigRational> {
        match &self.0 {
            Repr::Rational(q) => Some(q),
            _ => None,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Prime { r, .. } => write!(f, "{r}"),
            Repr::Rational(q) => {
                if q.denom().is_one() {
                    write!(f, "{}", q.numer())
                } else if q.denom().is_negative() {
                    // Ratio::new normalizes signs, so this is unreachable in
                    // practice; keep output canonical regardless.
                    write!(f, "{}/{}", -q.numer(), -q.denom())
                } else {
                    write!(f, "{}/{}", q.numer(), q.denom())
                }
            }
        }
    }
}

impl std::ops::Add for &Scalar {
    type Output = Scalar;
    fn add(self, rhs: &Scalar) -> Scalar {
        self.try_add(rhs).expect("scalars from the same field")
    }
}

impl std::ops::Sub for &Scalar {
    type Output = Scalar;
    fn sub(self, rhs: &Scalar) -> Scalar {
        self.try_sub(rhs).expect("scalars from the same field")
    }
}

impl std::ops::Mul for &Scalar {
    type Output = Scalar;
    fn mul(self, rhs: &Scalar) -> Scalar {
        self.try_mul(rhs).expect("scalars from the same field")
    }
}

impl std::ops::Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        match &self.0 {
            Repr::Prime { p, r } => Scalar(Repr::Prime { p: *p, r: sub_m(0, *r, *p) }),
            Repr::Rational(q) => Scalar(Repr::Rational(Box::new(-&**q))),
        }
    }
}

/// Which theorem's field hypotheses to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardRequirement {
    /// char K = 0 or char K > 3.
    AdditiveTheorem,
    /// char K = 0 or char K > m+1, and |K| >= m+4.
    Multitrace { m: u32 },
}

/// A guard outcome. Failing the guard is a value, not an error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardVerdict {
    pub pass: bool,
    pub reason: String,
}

impl GuardVerdict {
    pub fn to_result(&self) -> Result<(), Error> {
        if self.pass {
            Ok(())
        } else {
            Err(Error::GuardFailed(self.reason.clone()))
        }
    }
}

pub fn char_guard(spec: &FieldSpec, req: GuardRequirement) -> GuardVerdict {
    let ch = spec.characteristic();
    match req {
        GuardRequirement::AdditiveTheorem => {
            if ch == 0 || ch > 3 {
                GuardVerdict {
                    pass: true,
                    reason: format!("char {ch} is 0 or exceeds 3"),
                }
            } else {
                GuardVerdict {
                    pass: false,
                    reason: format!("char {ch} must be 0 or exceed 3"),
                }
            }
        }
        GuardRequirement::Multitrace { m } => {
            if m < 2 {
                return GuardVerdict {
                    pass: false,
                    reason: format!("arity m={m} must be at least 2"),
                };
            }
            let m = m as u64;
            if !(ch == 0 || ch > m + 1) {
                return GuardVerdict {
                    pass: false,
                    reason: format!("char {ch} must be 0 or exceed m+1={}", m + 1),
                };
            }
            match spec.cardinality() {
                Some(card) if card < m + 4 => GuardVerdict {
                    pass: false,
                    reason: format!("field has {card} elements, needs at least m+4={}", m + 4),
                },
                _ => GuardVerdict {
                    pass: true,
                    reason: "characteristic and cardinality admissible".into(),
                },
            }
        }
    }
}

// ---- modular helpers ----

#[inline]
pub(crate) fn add_m(a: u64, b: u64, p: u64) -> u64 {
    let s = a + b;
    if s >= p {
        s - p
    } else {
        s
    }
}

#[inline]
pub(crate) fn sub_m(a: u64, b: u64, p: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        p - (b - a)
    }
}

#[inline]
pub(crate) fn mul_m(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

pub(crate) fn pow_m(mut a: u64, mut e: u64, p: u64) -> u64 {
    let mut acc = 1 % p;
    a %= p;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_m(acc, a, p);
        }
        a = mul_m(a, a, p);
        e >>= 1;
    }
    acc
}

#[inline]
pub(crate) fn inv_m(a: u64, p: u64) -> u64 {
    debug_assert!(a % p != 0);
    pow_m(a, p - 2, p)
}

/// Deterministic Miller-Rabin; the fixed base set decides correctly for all
/// u64 inputs.
pub(crate) fn is_prime_u64(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &q in &BASES {
        if n % q == 0 {
            return n == q;
        }
    }
    let mut d = n - 1;
    let mut s = 0u32;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_m(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_m(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gf(p: u64) -> FieldSpec {
        FieldSpec::prime(p).unwrap()
    }

    #[test]
    fn construction_validates_primality() {
        assert!(FieldSpec::prime(5).is_ok());
        assert_eq!(FieldSpec::prime(4), Err(Error::NotPrime(4)));
        assert_eq!(FieldSpec::prime(1), Err(Error::NotPrime(1)));
        assert_eq!(FieldSpec::prime(0), Err(Error::NotPrime(0)));
    }

    #[test]
    fn characteristic_and_cardinality() {
        assert_eq!(gf(7).characteristic(), 7);
        assert_eq!(gf(7).cardinality(), Some(7));
        assert_eq!(FieldSpec::rationals().characteristic(), 0);
        assert_eq!(FieldSpec::rationals().cardinality(), None);
    }

    #[test]
    fn gf5_arithmetic() {
        let f = gf(5);
        let a = Scalar::from_int(2, &f);
        let b = Scalar::from_int(4, &f);
        assert_eq!(a.try_add(&b).unwrap(), Scalar::from_int(1, &f));
        assert_eq!(a.inv().unwrap(), Scalar::from_int(3, &f));
    }

    #[test]
    fn rational_arithmetic() {
        let q = FieldSpec::rationals();
        let half = Scalar::parse("1/2", &q).unwrap();
        let third = Scalar::parse("1/3", &q).unwrap();
        let sum = half.try_add(&third).unwrap();
        assert_eq!(sum, Scalar::parse("5/6", &q).unwrap());
        assert_eq!(sum.to_string(), "5/6");
    }

    #[test]
    fn inv_of_zero_is_an_error() {
        assert_eq!(gf(5).zero().inv(), Err(Error::DivisionByZero));
        assert_eq!(FieldSpec::rationals().zero().inv(), Err(Error::DivisionByZero));
    }

    #[test]
    fn mixed_fields_rejected() {
        let a = Scalar::from_int(1, &gf(5));
        let b = Scalar::from_int(1, &gf(7));
        let c = Scalar::from_int(1, &FieldSpec::rationals());
        assert_eq!(a.try_add(&b), Err(Error::MixedFields));
        assert_eq!(a.try_mul(&c), Err(Error::MixedFields));
    }

    #[test]
    fn exhaustive_inverses_small_primes() {
        for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101] {
            let f = gf(p);
            for a in 1..p {
                let s = Scalar::from_residue(a, p);
                assert_eq!(s.try_mul(&s.inv().unwrap()).unwrap(), f.one());
            }
        }
    }

    #[test]
    fn int_embed_wraps_at_characteristic() {
        for p in [2u64, 3, 5, 7, 11] {
            let f = gf(p);
            assert!(Scalar::from_int(p as i64, &f).is_zero());
            for k in 1..p {
                assert!(!Scalar::from_int(k as i64, &f).is_zero());
            }
        }
    }

    #[test]
    fn additive_inverse_is_exact() {
        let f = gf(7);
        for a in 0..7 {
            let s = Scalar::from_residue(a, 7);
            assert_eq!(s.try_add(&-&s).unwrap(), f.zero());
        }
        let q = FieldSpec::rationals();
        let s = Scalar::parse("-3/4", &q).unwrap();
        assert_eq!(s.try_add(&-&s).unwrap(), q.zero());
    }

    #[test]
    fn guard_additive_theorem() {
        assert!(char_guard(&gf(5), GuardRequirement::AdditiveTheorem).pass);
        assert!(!char_guard(&gf(3), GuardRequirement::AdditiveTheorem).pass);
        assert!(!char_guard(&gf(2), GuardRequirement::AdditiveTheorem).pass);
        assert!(char_guard(&FieldSpec::rationals(), GuardRequirement::AdditiveTheorem).pass);
    }

    #[test]
    fn guard_multitrace() {
        assert!(char_guard(&gf(7), GuardRequirement::Multitrace { m: 2 }).pass);
        // 5 < m+4 = 6
        assert!(!char_guard(&gf(5), GuardRequirement::Multitrace { m: 2 }).pass);
        assert!(char_guard(&FieldSpec::rationals(), GuardRequirement::Multitrace { m: 2 }).pass);
        assert!(!char_guard(&gf(7), GuardRequirement::Multitrace { m: 1 }).pass);
        // char 7 > 4, |K| = 7 >= 7
        assert!(char_guard(&gf(7), GuardRequirement::Multitrace { m: 3 }).pass);
        assert!(!char_guard(&gf(5), GuardRequirement::Multitrace { m: 3 }).pass);
    }

    #[test]
    fn scalar_parse_roundtrip() {
        let f = gf(7);
        assert_eq!(Scalar::parse("-1", &f).unwrap(), Scalar::from_int(6, &f));
        assert_eq!(Scalar::parse("1/2", &f).unwrap(), Scalar::from_int(4, &f));
        let q = FieldSpec::rationals();
        assert_eq!(Scalar::parse("2/4", &q).unwrap().to_string(), "1/2");
        assert_eq!(Scalar::parse("4/-2", &q).unwrap().to_string(), "-2");
        assert!(Scalar::parse("1/0", &q).is_err());
        assert!(Scalar::parse("x", &q).is_err());
    }

    #[test]
    fn field_spec_parse() {
        assert_eq!(FieldSpec::parse("p:5").unwrap(), gf(5));
        assert_eq!(FieldSpec::parse("Q").unwrap(), FieldSpec::rationals());
        assert!(FieldSpec::parse("p:6").is_err());
        assert!(FieldSpec::parse("gf5").is_err());
    }
}
