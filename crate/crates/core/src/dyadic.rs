//! Exact dyadic rationals `m / 2^k` for mesh geometry.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Neg, Sub};

/// A rational number whose denominator is a power of two.
///
/// Always stored in lowest terms (odd mantissa, or `exp == 0`), so derived
/// equality and hashing agree with numeric equality.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default)]
pub struct Dyadic {
    mant: i64,
    exp: u32,
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { mant: 0, exp: 0 };

    pub fn new(mant: i64, exp: u32) -> Self {
        let mut d = Dyadic { mant, exp };
        d.normalize();
        d
    }

    pub fn from_int(v: i64) -> Self {
        Dyadic { mant: v, exp: 0 }
    }

    /// `2^(-k)`.
    pub fn pow2_neg(k: u32) -> Self {
        Dyadic { mant: 1, exp: k }
    }

    fn normalize(&mut self) {
        if self.mant == 0 {
            self.exp = 0;
            return;
        }
        let tz = self.mant.trailing_zeros().min(self.exp);
        self.mant >>= tz;
        self.exp -= tz;
    }

    pub fn numerator(&self) -> i64 {
        self.mant
    }

    pub fn denominator(&self) -> i64 {
        1i64 << self.exp
    }

    /// Exponent of the reduced denominator.
    pub fn exponent(&self) -> u32 {
        self.exp
    }

    pub fn to_f64(self) -> f64 {
        self.mant as f64 / (self.exp as f64).exp2()
    }

    /// Mantissa expressed over the denominator `2^k`, with `k >= exponent()`.
    fn scaled(self, k: u32) -> i64 {
        debug_assert!(k >= self.exp);
        self.mant << (k - self.exp)
    }

    pub fn half(self) -> Self {
        Dyadic::new(self.mant, self.exp + 1)
    }

    pub fn double(self) -> Self {
        if self.exp > 0 {
            Dyadic { mant: self.mant, exp: self.exp - 1 }
        } else {
            Dyadic { mant: self.mant * 2, exp: 0 }
        }
    }

    /// Largest multiple of `step` not exceeding `self`; `step` must be a
    /// positive power of two (possibly negative exponent).
    pub fn floor_to(self, step: Dyadic) -> Self {
        debug_assert!(step.mant > 0 && step.mant.count_ones() == 1);
        let k = self.exp.max(step.exp);
        let a = self.scaled(k);
        let s = step.scaled(k);
        Dyadic::new(a.div_euclid(s) * s, k)
    }

    pub fn abs(self) -> Self {
        Dyadic { mant: self.mant.abs(), exp: self.exp }
    }

    /// Power of a positive dyadic to a non-negative integer.
    pub fn powi(self, n: u32) -> Self {
        Dyadic::new(self.mant.pow(n), self.exp * n)
    }
}

impl Add for Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: Dyadic) -> Dyadic {
        let k = self.exp.max(rhs.exp);
        Dyadic::new(self.scaled(k) + rhs.scaled(k), k)
    }
}

impl Sub for Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: Dyadic) -> Dyadic {
        self + (-rhs)
    }
}

impl Neg for Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Dyadic {
        Dyadic { mant: -self.mant, exp: self.exp }
    }
}

impl std::ops::Mul for Dyadic {
    type Output = Dyadic;
    fn mul(self, rhs: Dyadic) -> Dyadic {
        Dyadic::new(self.mant * rhs.mant, self.exp + rhs.exp)
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let k = self.exp.max(other.exp);
        self.scaled(k).cmp(&other.scaled(k))
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.mant, self.denominator())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lowest_terms() {
        let a = Dyadic::new(4, 3);
        assert_eq!(a, Dyadic::new(1, 1));
        assert_eq!(a.to_string(), "1/2");
        assert_eq!(Dyadic::new(0, 7).to_string(), "0/1");
        assert_eq!(Dyadic::new(-3, 2).to_string(), "-3/4");
    }

    #[test]
    fn floor_to_grid() {
        let step = Dyadic::pow2_neg(2);
        assert_eq!(Dyadic::new(3, 3).floor_to(step), Dyadic::new(1, 2));
        assert_eq!(Dyadic::new(-1, 3).floor_to(step), Dyadic::new(-1, 2));
        assert_eq!(Dyadic::new(-1, 2).floor_to(step), Dyadic::new(-1, 2));
    }

    proptest! {
        #[test]
        fn arithmetic_matches_f64(a in -4096i64..4096, ea in 0u32..12, b in -4096i64..4096, eb in 0u32..12) {
            let x = Dyadic::new(a, ea);
            let y = Dyadic::new(b, eb);
            prop_assert_eq!((x + y).to_f64(), x.to_f64() + y.to_f64());
            prop_assert_eq!((x - y).to_f64(), x.to_f64() - y.to_f64());
            prop_assert_eq!(x.cmp(&y), x.to_f64().partial_cmp(&y.to_f64()).unwrap());
        }
    }
}
