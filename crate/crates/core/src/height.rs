//! Heights: digit-length measures with controlled growth under ring
//! operations.
//!
//! The height of an element is the largest base-p digit index carrying a
//! nonzero digit in any component (the polynomial degree in F_q[[t]], one
//! less than the digit count in Z_p). Heights grow by at most a constant
//! under addition and multiplication; the constants are measured per field
//! and cached. Bounded-height elements biject with balls of matching radius,
//! which is what makes canonical ball representatives work.

use crate::error::Error;
use crate::field::{Ball, Char, Element, Field, Val};
use crate::Result;

/// Measured height-growth slack for one field: height(x+y) ≤
/// max(h1,h2) + c_add and height(xy) ≤ h1 + h2 + c_mul.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeightProfile {
    pub c_add: u32,
    pub c_mul: u32,
}

impl HeightProfile {
    /// Exhaustively measure the slacks over all pairs of height ≤ 2, in a
    /// padded rebuild of the field so no product height is clipped by the
    /// working precision. The additive slack has a known ceiling (0 in
    /// finite characteristic where digits never carry, 1 otherwise), which
    /// the measurement is asserted against.
    pub fn measure(field: &Field) -> HeightProfile {
        let pad = (field.e() as u32) * 16;
        let big = if field.precision() >= pad {
            field.clone()
        } else {
            field
                .with_precision(pad)
                .expect("padded rebuild for height measurement")
        };
        let sample = enumerate_height_leq(&big, 2).expect("height-2 sample");
        let cap_add = match field.characteristic() {
            Char::Finite => 0,
            Char::Zero => 1,
        };
        let mut c_add: u32 = 0;
        let mut c_mul: u32 = 0;
        for x in &sample {
            let hx = height(x);
            for y in &sample {
                let hy = height(y);
                let hs = height(&big.add(x, y));
                c_add = c_add.max(hs.saturating_sub(hx.max(hy)));
                let hp = height(&big.mul(x, y));
                c_mul = c_mul.max(hp.saturating_sub(hx + hy));
            }
        }
        assert!(
            c_add <= cap_add,
            "additive height slack {c_add} exceeds the structural bound {cap_add}"
        );
        if field.characteristic() == Char::Finite {
            assert_eq!(c_mul, 0, "degrees add exactly in finite characteristic");
        }
        HeightProfile { c_add, c_mul }
    }
}

/// Largest digit index with a nonzero digit across all components; 0 for
/// the zero element by convention.
pub fn height(x: &Element) -> u32 {
    let mut h = 0u32;
    for comp in &x.comps {
        for (j, &d) in comp.iter().enumerate() {
            if d != 0 {
                h = h.max(j as u32);
            }
        }
    }
    h
}

/// The height if it is ≤ cutoff, else None: at finite precision an element
/// whose top digit block is occupied cannot be certified to have small
/// height, and the caller must say what "small" means.
pub fn height_within(x: &Element, cutoff: u32) -> Option<u32> {
    let h = height(x);
    if h <= cutoff {
        Some(h)
    } else {
        None
    }
}

/// All elements of height ≤ h, sorted in lexicographic digit order. These
/// are exactly the digit tensors supported on uniformizer positions
/// u < e·(h+1), so they are the centers of the subdivision of the unit
/// ball at that scale.
pub fn enumerate_height_leq(field: &Field, h: u32) -> Result<Vec<Element>> {
    let lambda = (field.e() as u32) * (h + 1);
    if lambda > field.precision() {
        return Err(Error::PrecisionExhausted(format!(
            "height {h} needs {lambda} digit positions but precision is {}",
            field.precision()
        )));
    }
    let unit = Ball::of(&[field.zero()], 0);
    Ok(unit
        .subdivide(lambda)?
        .into_iter()
        .map(|b| b.center.into_iter().next().unwrap())
        .collect())
}

/// The 2^{ef} negation representatives: sums of −1 times basis monomials
/// over every subset of the components. For any x of height ≤ h, −x agrees
/// with one of these at every digit index ≥ h + 1.
pub fn neg_representatives(field: &Field) -> Result<Vec<Element>> {
    if field.characteristic() == Char::Finite {
        return Err(Error::BadFieldSpec(
            "negation preserves height in finite characteristic; no representatives needed"
                .into(),
        ));
    }
    let cc = field.comp_count();
    let mut out = Vec::with_capacity(1 << cc);
    for mask in 0u32..(1 << cc) {
        // −(basis monomial) fills its component with (p−1) digits; sums over
        // distinct components do not interact.
        let mut z = field.zero();
        for c in 0..cc {
            if mask & (1 << c) != 0 {
                let p = field.p();
                for d in z.comps[c].iter_mut() {
                    *d = p - 1;
                }
            }
        }
        out.push(z);
    }
    Ok(out)
}

/// Do x and y agree at every digit index j ≥ d in every component?
pub fn differs_only_in_lsd(x: &Element, y: &Element, d: u32) -> Result<bool> {
    let field = x.field();
    if d as usize > field.comp_len(0) {
        return Err(Error::PrecisionExhausted(format!(
            "cannot certify agreement from digit {d}: only {} digits carried",
            field.comp_len(0)
        )));
    }
    for (cx, cy) in x.comps.iter().zip(y.comps.iter()) {
        for j in (d as usize)..cx.len() {
            if cx[j] != cy[j] {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// The perturbation oracle in subtraction form: |(−x + δ) − y| ≥ |δ|.
/// Fail-closed: when the left side vanishes through precision the
/// inequality cannot be certified and the answer is false.
pub fn perturbation_holds(field: &Field, x: &Element, y: &Element, delta: &Element) -> bool {
    let lhs = field.sub(&field.add(&field.neg(x), delta), y);
    perturb_compare(field, &lhs, delta)
}

/// The companion in addition form: |(−x + δ) + y| ≥ |δ|.
pub fn perturbation_sum_holds(field: &Field, x: &Element, y: &Element, delta: &Element) -> bool {
    let lhs = field.add(&field.add(&field.neg(x), delta), y);
    perturb_compare(field, &lhs, delta)
}

fn perturb_compare(field: &Field, lhs: &Element, delta: &Element) -> bool {
    let dv = match field.valuation(delta) {
        Val::Finite(v) => v,
        // δ indistinguishable from zero: the hypothesis 0 < |δ| is not
        // certifiable, so neither is the conclusion.
        Val::AtLeast(_) => return false,
    };
    match field.valuation(lhs) {
        Val::Finite(v) => v <= dv,
        Val::AtLeast(_) => false,
    }
}
