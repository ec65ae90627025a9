//! Exact sums of rational powers of q.
//!
//! Dimension bookkeeping adds terms of the form c·q^{x} with c a positive
//! rational and x a rational exponent (ball radii raised to a rational
//! power s). Such sums are compared exactly: q = p^f is normalized to base
//! p, terms are grouped by the fractional part of the base-p exponent (the
//! integer part folds into the rational coefficient), and two sums are
//! equal iff their normal forms coincide — powers p^{a/b} with distinct
//! reduced fractional exponents are linearly independent over the
//! rationals (x^L − p is Eisenstein, hence irreducible). Strict
//! comparisons are decided by interval arithmetic around integer nth
//! roots, refined until the sign of the difference is certain; by the
//! independence fact the refinement always terminates on unequal sums.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::{BigRational, Ratio};
use num_traits::{One, Signed, Zero};

/// A finite sum Σ c_g · p^{g} with g ∈ [0, 1) reduced rationals and c_g
/// nonzero rationals (positive for sums built from radii; differences of
/// sums appear internally with either sign).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QPowSum {
    p: u32,
    terms: BTreeMap<Ratio<u64>, BigRational>,
}

impl QPowSum {
    pub fn zero(p: u32) -> QPowSum {
        QPowSum { p, terms: BTreeMap::new() }
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// A plain rational (exponent 0).
    pub fn rational(p: u32, c: BigRational) -> QPowSum {
        let mut s = QPowSum::zero(p);
        s.add_term(Ratio::new(0, 1), c);
        s
    }

    /// q^{exp} with q = p^f: normalizes the exponent to base p and splits
    /// off the integer part into the coefficient.
    pub fn q_power(p: u32, f: u32, exp: Ratio<i64>) -> QPowSum {
        QPowSum::scaled_q_power(p, f, exp, BigRational::one())
    }

    /// c · q^{exp}.
    pub fn scaled_q_power(p: u32, f: u32, exp: Ratio<i64>, c: BigRational) -> QPowSum {
        let y = exp * Ratio::new(f as i64, 1);
        let floor = y.floor().to_integer();
        let frac = y - Ratio::new(floor, 1);
        debug_assert!(frac >= Ratio::new(0, 1) && frac < Ratio::new(1, 1));
        let key = Ratio::new(*frac.numer() as u64, *frac.denom() as u64);
        let p_big = BigInt::from(p);
        let scale = if floor >= 0 {
            BigRational::from_integer(p_big.pow(floor as u32))
        } else {
            BigRational::new(BigInt::one(), p_big.pow((-floor) as u32))
        };
        let mut s = QPowSum::zero(p);
        s.add_term(key, c * scale);
        s
    }

    fn add_term(&mut self, key: Ratio<u64>, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(key).or_insert_with(BigRational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn add_assign(&mut self, other: &QPowSum) {
        assert_eq!(self.p, other.p, "mixed base in q-power sum");
        for (k, c) in &other.terms {
            self.add_term(*k, c.clone());
        }
    }

    pub fn add(&self, other: &QPowSum) -> QPowSum {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn sub(&self, other: &QPowSum) -> QPowSum {
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add_term(*k, -c.clone());
        }
        out
    }

    pub fn scale(&self, c: &BigRational) -> QPowSum {
        let mut out = QPowSum::zero(self.p);
        for (k, v) in &self.terms {
            out.add_term(*k, v.clone() * c.clone());
        }
        out
    }

    /// Exact sign of the sum as a real number.
    pub fn sign(&self) -> Ordering {
        if self.terms.is_empty() {
            return Ordering::Equal;
        }
        // All-positive or all-negative coefficients decide immediately
        // (every p^g is positive).
        if self.terms.values().all(|c| c.is_positive()) {
            return Ordering::Greater;
        }
        if self.terms.values().all(|c| c.is_negative()) {
            return Ordering::Less;
        }
        // Mixed signs: certified interval evaluation, refined until the
        // enclosure of the sum excludes zero. Termination is guaranteed:
        // a nonzero normal form is a nonzero real.
        let mut bits: u32 = 16;
        loop {
            let mut lo = BigRational::zero();
            let mut hi = BigRational::zero();
            for (k, c) in &self.terms {
                let (plo, phi) = p_pow_bounds(self.p, *k, bits);
                if c.is_positive() {
                    lo += c.clone() * plo;
                    hi += c.clone() * phi;
                } else {
                    lo += c.clone() * phi;
                    hi += c.clone() * plo;
                }
            }
            if lo.is_positive() {
                return Ordering::Greater;
            }
            if hi.is_negative() {
                return Ordering::Less;
            }
            bits *= 2;
            assert!(bits <= 1 << 20, "interval refinement failed to separate");
        }
    }

    /// Exact comparison of two sums as real numbers.
    pub fn cmp_exact(&self, other: &QPowSum) -> Ordering {
        self.sub(other).sign()
    }

    /// Floating approximation for reports (never used for decisions).
    pub fn approx(&self) -> f64 {
        let mut acc = 0.0;
        for (k, c) in &self.terms {
            let g = *k.numer() as f64 / *k.denom() as f64;
            let c64 = bigrational_to_f64(c);
            acc += c64 * (self.p as f64).powf(g);
        }
        acc
    }
}

fn bigrational_to_f64(x: &BigRational) -> f64 {
    // Good enough for display: scale through a 2^64 window.
    let num = x.numer();
    let den = x.denom();
    let fnum = num.to_string().parse::<f64>().unwrap_or(f64::NAN);
    let fden = den.to_string().parse::<f64>().unwrap_or(f64::NAN);
    fnum / fden
}

/// Rational enclosure [lo, hi] of p^{a/b} with hi − lo ≤ p / 2^bits.
/// Computed from the integer b-th root of p^a · 2^{b·bits}.
fn p_pow_bounds(p: u32, g: Ratio<u64>, bits: u32) -> (BigRational, BigRational) {
    let a = *g.numer();
    let b = *g.denom();
    if a == 0 {
        return (BigRational::one(), BigRational::one());
    }
    let scale = BigUint::one() << bits;
    let scaled = BigUint::from(p).pow(a as u32) * (&scale).pow(b as u32);
    let root = scaled.nth_root(b as u32);
    // root ≤ (p^a)^{1/b}·2^bits < root + 1.
    let lo = BigRational::new(BigInt::from(root.clone()), BigInt::from(scale.clone()));
    let hi = BigRational::new(BigInt::from(root + BigUint::one()), BigInt::from(scale));
    (lo, hi)
}

impl fmt::Display for QPowSum {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(out, "0");
        }
        let mut first = true;
        for (k, c) in &self.terms {
            if !first {
                write!(out, " + ")?;
            }
            first = false;
            if k.numer().is_zero() {
                write!(out, "{c}")?;
            } else {
                write!(out, "({c})*{}^({})", self.p, k)?;
            }
        }
        Ok(())
    }
}
