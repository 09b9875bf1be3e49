//! Arithmetic in a prime field `F_q`.
//!
//! Elements are plain residues; the modulus lives in a [`PrimeField`] context
//! that every operation is routed through, so two fields never mix silently.

use std::fmt;

use crate::error::{Error, Result};

/// A residue in `[0, q)` for some ambient prime `q`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fe(pub u64);

impl Fe {
    pub const ZERO: Fe = Fe(0);
    pub const ONE: Fe = Fe(1);

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Fe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Binary operation selector for [`PrimeField::arith`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// The field `F_q` for a prime `q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PrimeField {
    q: u64,
}

/// Largest modulus accepted; keeps `a * b` inside `u128` trivially and
/// matches the desk-scale parameter sets this crate targets.
pub const MAX_MODULUS: u64 = 1 << 31;

impl PrimeField {
    pub fn new(q: u64) -> Result<Self> {
        if q > MAX_MODULUS {
            return Err(Error::InvalidParams(format!(
                "field modulus {q} exceeds supported maximum {MAX_MODULUS}"
            )));
        }
        if !is_prime(q) {
            return Err(Error::InvalidParams(format!("field modulus {q} is not prime")));
        }
        Ok(Self { q })
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    /// Reduces an arbitrary integer into the field.
    pub fn elem(&self, v: u64) -> Fe {
        Fe(v % self.q)
    }

    /// Reduces a signed integer into the field.
    pub fn from_i64(&self, v: i64) -> Fe {
        Fe(v.rem_euclid(self.q as i64) as u64)
    }

    /// Checks that a raw value is a canonical residue.
    pub fn checked(&self, v: u64) -> Result<Fe> {
        if v < self.q {
            Ok(Fe(v))
        } else {
            Err(Error::Parse(format!("symbol {v} is not in [0, {})", self.q)))
        }
    }

    #[inline]
    pub fn add(&self, a: Fe, b: Fe) -> Fe {
        let s = a.0 + b.0;
        Fe(if s >= self.q { s - self.q } else { s })
    }

    #[inline]
    pub fn sub(&self, a: Fe, b: Fe) -> Fe {
        Fe(if a.0 >= b.0 { a.0 - b.0 } else { a.0 + self.q - b.0 })
    }

    #[inline]
    pub fn neg(&self, a: Fe) -> Fe {
        if a.0 == 0 {
            a
        } else {
            Fe(self.q - a.0)
        }
    }

    #[inline]
    pub fn mul(&self, a: Fe, b: Fe) -> Fe {
        Fe(a.0 * b.0 % self.q)
    }

    pub fn pow(&self, base: Fe, mut exp: u64) -> Fe {
        let mut acc = Fe::ONE;
        let mut b = base;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(&self, a: Fe) -> Result<Fe> {
        if a.is_zero() {
            return Err(Error::InvalidOperand("inverse of zero".into()));
        }
        Ok(self.pow(a, self.q - 2))
    }

    pub fn div(&self, a: Fe, b: Fe) -> Result<Fe> {
        Ok(self.mul(a, self.inv(b)?))
    }

    pub fn arith(&self, a: Fe, b: Fe, op: ArithOp) -> Result<Fe> {
        match op {
            ArithOp::Add => Ok(self.add(a, b)),
            ArithOp::Sub => Ok(self.sub(a, b)),
            ArithOp::Mul => Ok(self.mul(a, b)),
            ArithOp::Div => self.div(a, b),
        }
    }

    pub fn sum<I: IntoIterator<Item = Fe>>(&self, it: I) -> Fe {
        it.into_iter().fold(Fe::ZERO, |acc, x| self.add(acc, x))
    }

    pub fn dot(&self, a: &[Fe], b: &[Fe]) -> Fe {
        debug_assert_eq!(a.len(), b.len());
        a.iter()
            .zip(b)
            .fold(Fe::ZERO, |acc, (x, y)| self.add(acc, self.mul(*x, *y)))
    }

    /// Componentwise `a + b`.
    pub fn add_vec(&self, a: &[Fe], b: &[Fe]) -> Vec<Fe> {
        a.iter().zip(b).map(|(x, y)| self.add(*x, *y)).collect()
    }

    /// Componentwise `a - b`.
    pub fn sub_vec(&self, a: &[Fe], b: &[Fe]) -> Vec<Fe> {
        a.iter().zip(b).map(|(x, y)| self.sub(*x, *y)).collect()
    }
}

impl fmt::Display for PrimeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F_{}", self.q)
    }
}

/// Deterministic trial division; moduli here are small.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n < 4 {
        return true;
    }
    if n.is_multiple_of(2) {
        return false;
    }
    let mut d = 3;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Smallest prime `>= n`.
pub fn next_prime(n: u64) -> u64 {
    let mut k = n.max(2);
    while !is_prime(k) {
        k += 1;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(q: u64) -> PrimeField {
        PrimeField::new(q).unwrap()
    }

    #[test]
    fn small_examples() {
        assert_eq!(f(5).arith(Fe(3), Fe(4), ArithOp::Add).unwrap(), Fe(2));
        assert_eq!(f(5).arith(Fe(1), Fe(2), ArithOp::Div).unwrap(), Fe(3));
        assert_eq!(f(7).arith(Fe(4), Fe(5), ArithOp::Mul).unwrap(), Fe(6));
        assert_eq!(f(7).arith(Fe(2), Fe(5), ArithOp::Sub).unwrap(), Fe(4));
    }

    #[test]
    fn division_by_zero_is_invalid_operand() {
        let err = f(11).arith(Fe(3), Fe(0), ArithOp::Div).unwrap_err();
        assert!(matches!(err, Error::InvalidOperand(_)));
    }

    #[test]
    fn rejects_composite_modulus() {
        assert!(PrimeField::new(9).is_err());
        assert!(PrimeField::new(1).is_err());
        assert!(PrimeField::new(2).is_ok());
    }

    #[test]
    fn primes() {
        let ps: Vec<u64> = (0..30).filter(|&n| is_prime(n)).collect();
        assert_eq!(ps, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
        assert_eq!(next_prime(10), 11);
        assert_eq!(next_prime(11), 11);
        assert_eq!(next_prime(24), 29);
    }

    #[test]
    fn inverses_exhaustive_small_fields() {
        for q in [2, 3, 5, 7, 11, 13, 23] {
            let fld = f(q);
            for a in 1..q {
                assert_eq!(fld.mul(Fe(a), fld.inv(Fe(a)).unwrap()), Fe::ONE);
            }
        }
    }

    #[test]
    fn signed_reduction() {
        assert_eq!(f(7).from_i64(-1), Fe(6));
        assert_eq!(f(7).from_i64(15), Fe(1));
    }

    proptest::proptest! {
        #[test]
        fn add_sub_round_trip(a in 0u64..1_000_003, b in 0u64..1_000_003) {
            let fld = f(1_000_003);
            let (a, b) = (Fe(a), Fe(b));
            proptest::prop_assert_eq!(fld.sub(fld.add(a, b), b), a);
            proptest::prop_assert_eq!(fld.add(a, b), fld.add(b, a));
            proptest::prop_assert_eq!(fld.mul(a, b), fld.mul(b, a));
        }

        #[test]
        fn mul_inverse(a in 1u64..65_521) {
            let fld = f(65_521);
            proptest::prop_assert_eq!(fld.mul(Fe(a), fld.inv(Fe(a)).unwrap()), Fe::ONE);
        }

        #[test]
        fn associativity(a in 0u64..97, b in 0u64..97, c in 0u64..97) {
            let fld = f(97);
            let (a, b, c) = (Fe(a), Fe(b), Fe(c));
            proptest::prop_assert_eq!(fld.add(fld.add(a, b), c), fld.add(a, fld.add(b, c)));
            proptest::prop_assert_eq!(fld.mul(fld.mul(a, b), c), fld.mul(a, fld.mul(b, c)));
        }
    }
}
