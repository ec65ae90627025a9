//! Bootstrap arithmetic for characteristic-zero extensions.
//!
//! Before the canonical basis {t1^{k1} t2^{k2}} exists, we need a ring to
//! compute it in. That ring is A = (Z/p^M)[x, y] / (m(x), E(x, y)), where m
//! is the monic lift of the residue polynomial and E is the Eisenstein
//! polynomial y^e + a_{e-1}(x) y^{e-1} + … + a_0(x). A is free of rank f·e
//! over Z/p^M with basis {x^{k1} y^{k2}}, and contains
//!
//! * y — an exact root of E, which *is* t2;
//! * the multiplicative lift t1 of the class of x, found by Newton iteration
//!   on X^{q-1} − 1 (the derivative (q−1)X^{q-2} is a unit, so no division
//!   by the uniformizer ever occurs).
//!
//! Everything downstream (basis tables, element multiplication) is computed
//! here and converted once; element arithmetic never touches this module
//! again after field construction.

use super::digits;
use super::residue::Gfq;
use crate::error::Error;
use crate::Result;

/// Scalar in Z/p^M as a base-p digit vector of fixed length M.
pub type Scalar = Vec<u32>;

/// Element of A: coefficient of x^{k1} y^{k2} at index k1·e + k2.
pub type AElem = Vec<Scalar>;

#[derive(Debug, Clone)]
pub struct Structural {
    pub p: u32,
    pub f: usize,
    pub e: usize,
    /// Scalar digit length M: every scalar lives mod p^M.
    pub m0: usize,
    pub gf: Gfq,
    /// Monic lift of the residue polynomial: f+1 scalars, low degree first.
    mpoly: Vec<Scalar>,
    /// Eisenstein coefficients a_0 … a_{e-1}, each an element of the
    /// unramified subring (f x-coefficients, no y part). Empty when e = 1.
    epoly: Vec<Vec<Scalar>>,
}

impl Structural {
    /// Build the ring and validate the Eisenstein criterion: every a_i has
    /// valuation ≥ 1 in the unramified subring (all coordinates divisible by
    /// p) and a_0 has valuation exactly 1.
    pub fn new(gf: Gfq, e: usize, m0: usize, eis_coeffs: &[Vec<Scalar>]) -> Result<Structural> {
        let p = gf.p;
        let f = gf.f;
        assert!(m0 >= 1);
        let mpoly: Vec<Scalar> = gf
            .modulus
            .iter()
            .map(|&c| digits::to_digits(c as u128, p, m0))
            .collect();
        if e > 1 {
            if eis_coeffs.len() != e {
                return Err(Error::NotEisenstein(format!(
                    "need {e} coefficients a_0..a_{}, got {}",
                    e - 1,
                    eis_coeffs.len()
                )));
            }
            for (i, a) in eis_coeffs.iter().enumerate() {
                if a.len() != f || a.iter().any(|s| s.len() != m0) {
                    return Err(Error::NotEisenstein(format!(
                        "coefficient a_{i} has the wrong shape"
                    )));
                }
                if a.iter().any(|s| s[0] != 0) {
                    return Err(Error::NotEisenstein(format!(
                        "coefficient a_{i} is a unit (valuation 0); need valuation ≥ 1"
                    )));
                }
            }
            // a_0 / p must be a unit of the unramified subring: some
            // coordinate must be nonzero mod p after the shift.
            let unit = eis_coeffs[0]
                .iter()
                .any(|s| s.len() > 1 && s[1] != 0);
            if !unit {
                return Err(Error::NotEisenstein(
                    "constant coefficient a_0 has valuation ≥ 2; need exactly 1".into(),
                ));
            }
        } else if !eis_coeffs.is_empty() {
            return Err(Error::NotEisenstein(
                "ramification polynomial given but e = 1".into(),
            ));
        }
        Ok(Structural {
            p,
            f,
            e,
            m0,
            gf,
            mpoly,
            epoly: eis_coeffs.to_vec(),
        })
    }

    // ----- scalar helpers -------------------------------------------------

    fn s_zero(&self) -> Scalar {
        vec![0; self.m0]
    }

    fn s_from(&self, x: u128) -> Scalar {
        digits::to_digits(x, self.p, self.m0)
    }

    fn s_mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        digits::mul(a, b, self.p, self.m0)
    }

    // ----- ring elements --------------------------------------------------

    pub fn zero(&self) -> AElem {
        vec![self.s_zero(); self.f * self.e]
    }

    pub fn one(&self) -> AElem {
        let mut a = self.zero();
        a[0] = self.s_from(1);
        a
    }

    pub fn from_u128(&self, x: u128) -> AElem {
        let mut a = self.zero();
        a[0] = self.s_from(x);
        a
    }

    /// The class of x (the residue-field generator's naive lift).
    pub fn x_class(&self) -> AElem {
        let mut a = self.zero();
        if self.f > 1 {
            a[self.e] = self.s_from(1); // x^1 y^0 at index 1·e + 0
        } else {
            // Degree-1 modulus x + c: x ≡ −c.
            let c = self.mpoly[0].clone();
            let mut v = c;
            digits::negate(&mut v, self.p);
            a[0] = v;
        }
        a
    }

    /// The class of y: the exact Eisenstein root (only meaningful for e > 1).
    pub fn y_class(&self) -> AElem {
        assert!(self.e > 1, "y_class needs a ramified extension");
        let mut a = self.zero();
        a[1] = self.s_from(1); // x^0 y^1
        a
    }

    pub fn is_zero(&self, a: &AElem) -> bool {
        a.iter().all(|s| digits::is_zero(s))
    }

    pub fn add(&self, a: &AElem, b: &AElem) -> AElem {
        let mut out = a.clone();
        for (o, s) in out.iter_mut().zip(b.iter()) {
            digits::add_assign(o, s, self.p);
        }
        out
    }

    pub fn sub(&self, a: &AElem, b: &AElem) -> AElem {
        let mut out = a.clone();
        for (o, s) in out.iter_mut().zip(b.iter()) {
            digits::sub_assign(o, s, self.p);
        }
        out
    }

    pub fn neg(&self, a: &AElem) -> AElem {
        let mut out = a.clone();
        for s in out.iter_mut() {
            digits::negate(s, self.p);
        }
        out
    }

    /// Full product with reduction: multiply as bivariate polynomials, fold
    /// y-degrees ≥ e via y^e = −(a_0 + … + a_{e-1} y^{e-1}), then reduce each
    /// y-layer modulo m(x).
    pub fn mul(&self, a: &AElem, b: &AElem) -> AElem {
        let (f, e) = (self.f, self.e);
        // x-degree can grow during y-reduction: each fold multiplies by an
        // a_i of x-degree ≤ f−1, and at most e−1 folds happen to any term.
        let xcap = (2 * f - 1) + (e.saturating_sub(1)) * f.saturating_sub(1) + 1;
        let ycap = 2 * e - 1;
        let mut grid = vec![vec![self.s_zero(); xcap]; ycap];
        for k1a in 0..f {
            for k2a in 0..e {
                let sa = &a[k1a * e + k2a];
                if digits::is_zero(sa) {
                    continue;
                }
                for k1b in 0..f {
                    for k2b in 0..e {
                        let sb = &b[k1b * e + k2b];
                        if digits::is_zero(sb) {
                            continue;
                        }
                        let prod = self.s_mul(sa, sb);
                        digits::add_assign(&mut grid[k2a + k2b][k1a + k1b], &prod, self.p);
                    }
                }
            }
        }
        // Fold y-degrees from the top down.
        for dy in (e..ycap).rev() {
            for dx in 0..xcap {
                if digits::is_zero(&grid[dy][dx]) {
                    continue;
                }
                let c = std::mem::replace(&mut grid[dy][dx], self.s_zero());
                for (i, ai) in self.epoly.iter().enumerate() {
                    for (j, aij) in ai.iter().enumerate() {
                        if digits::is_zero(aij) {
                            continue;
                        }
                        let term = self.s_mul(&c, aij);
                        // subtract c·a_i(x)·y^{dy−e+i}
                        digits::sub_assign(&mut grid[dy - e + i][dx + j], &term, self.p);
                    }
                }
            }
        }
        // Reduce each surviving y-layer modulo the monic m(x).
        let mut out = self.zero();
        for (dy, layer) in grid.iter_mut().enumerate().take(e) {
            self.xreduce(layer);
            for k1 in 0..f {
                out[k1 * e + dy] = layer[k1].clone();
            }
        }
        out
    }

    /// In-place remainder of an x-coefficient vector modulo monic m(x).
    fn xreduce(&self, layer: &mut [Scalar]) {
        let f = self.f;
        for d in (f..layer.len()).rev() {
            if digits::is_zero(&layer[d]) {
                continue;
            }
            let c = std::mem::replace(&mut layer[d], self.s_zero());
            for i in 0..f {
                let t = self.s_mul(&c, &self.mpoly[i]);
                digits::sub_assign(&mut layer[d - f + i], &t, self.p);
            }
        }
    }

    pub fn pow(&self, a: &AElem, e: u64) -> AElem {
        let mut acc = self.one();
        let mut base = a.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(&acc, &base);
            }
            base = self.mul(&base, &base);
            e >>= 1;
        }
        acc
    }

    /// Residue of an element in F_q: the y-degree-0 layer mod p. (The classes
    /// of y and p both vanish in the residue field.)
    fn residue(&self, a: &AElem) -> Vec<u32> {
        (0..self.f).map(|k1| a[k1 * self.e][0] % self.p).collect()
    }

    /// Inverse of a unit (an element whose residue in F_q is nonzero), by a
    /// residue-field seed and Newton doubling z ← z(2 − az). The iteration
    /// count covers the ideal (p, y): y^e lies in (p), so contact 2^k ≥ e·M+e
    /// certifies exactness, which the final assertion re-checks.
    pub fn inv(&self, a: &AElem) -> AElem {
        let res = self.residue(a);
        assert!(
            !self.gf.is_zero(&res),
            "structural inverse of a non-unit"
        );
        let seed = self.gf.inv(&res);
        let mut z = self.zero();
        for (k1, &c) in seed.iter().enumerate() {
            z[k1 * self.e] = self.s_from(c as u128);
        }
        let two = self.from_u128(2);
        let target = self.e * self.m0 + self.e;
        let mut reach = 1usize;
        while reach < target {
            let az = self.mul(a, &z);
            let t = self.sub(&two, &az);
            z = self.mul(&z, &t);
            reach *= 2;
        }
        assert!(
            self.is_zero(&self.sub(&self.mul(a, &z), &self.one())),
            "structural inverse failed to converge"
        );
        z
    }

    /// The multiplicative (Teichmüller) lift t1 of the class of x: the unique
    /// root of X^{q−1} − 1 congruent to x modulo (p, y). Requires f ≥ 2
    /// (for f = 1 the basis only ever uses t1^0 = 1).
    pub fn teichmuller(&self) -> AElem {
        assert!(self.f >= 2, "teichmuller lift only needed for f ≥ 2");
        let q = self.gf.q;
        let mut t = self.x_class();
        let one = self.one();
        let qm1 = self.from_u128((q - 1) as u128);
        let target = self.m0 + 1;
        let mut reach = 1usize;
        while reach < target {
            // X ← X − (X^{q−1} − 1) / ((q−1) X^{q−2})
            let xq2 = self.pow(&t, q - 2);
            let fx = self.sub(&self.mul(&xq2, &t), &one);
            let dfx = self.mul(&qm1, &xq2);
            let step = self.mul(&fx, &self.inv(&dfx));
            t = self.sub(&t, &step);
            reach *= 2;
        }
        assert!(
            self.is_zero(&self.sub(&self.pow(&t, q - 1), &one)),
            "multiplicative lift failed to converge"
        );
        // t ≡ x mod p, and t has no y part (the iteration stays inside the
        // unramified subring).
        let diff = self.sub(&t, &self.x_class());
        for (idx, s) in diff.iter().enumerate() {
            if idx % self.e == 0 {
                assert!(s[0] == 0, "lift does not reduce to x");
            } else {
                assert!(digits::is_zero(s), "lift left the unramified subring");
            }
        }
        t
    }

    /// Basis-change data: t1^{k1} expanded in x-coordinates. Because t1 has
    /// no y part, the change of basis acts y-layer by y-layer through this
    /// single f×f matrix (≡ identity mod p). Returns (matrix, inverse), each
    /// row-major with entry[r][c] = x^r-coordinate of t1^c.
    pub fn basis_matrix(&self, t1: &AElem) -> (Vec<Vec<Scalar>>, Vec<Vec<Scalar>>) {
        let f = self.f;
        let mut mat = vec![vec![self.s_zero(); f]; f];
        let mut pw = self.one();
        for c in 0..f {
            for r in 0..f {
                mat[r][c] = pw[r * self.e].clone();
            }
            if c + 1 < f {
                pw = self.mul(&pw, t1);
            }
        }
        let inv = self.invert_matrix(&mat);
        (mat, inv)
    }

    /// Gauss–Jordan inverse over Z/p^M. Every pivot is a unit because the
    /// matrix is ≡ identity mod p, so no row swaps are ever needed.
    fn invert_matrix(&self, mat: &[Vec<Scalar>]) -> Vec<Vec<Scalar>> {
        let n = mat.len();
        let p = self.p;
        let mut a: Vec<Vec<Scalar>> = mat.to_vec();
        let mut inv: Vec<Vec<Scalar>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { self.s_from(1) } else { self.s_zero() })
                    .collect()
            })
            .collect();
        for col in 0..n {
            let piv = a[col][col].clone();
            assert!(piv[0] != 0, "basis matrix pivot is not a unit");
            let pinv = digits::invert_unit(&piv, p);
            for j in 0..n {
                a[col][j] = self.s_mul(&a[col][j], &pinv);
                inv[col][j] = self.s_mul(&inv[col][j], &pinv);
            }
            for row in 0..n {
                if row == col || digits::is_zero(&a[row][col]) {
                    continue;
                }
                let factor = a[row][col].clone();
                for j in 0..n {
                    let t = self.s_mul(&factor, &a[col][j]);
                    digits::sub_assign(&mut a[row][j], &t, p);
                    let t = self.s_mul(&factor, &inv[col][j]);
                    digits::sub_assign(&mut inv[row][j], &t, p);
                }
            }
        }
        for (i, row) in a.iter().enumerate() {
            for (j, s) in row.iter().enumerate() {
                let expect = u32::from(i == j);
                assert!(
                    digits::to_u128(s, p) == Some(expect as u128),
                    "matrix inversion failed"
                );
            }
        }
        inv
    }

    /// The element h with t2^{-1} = h / p: from the Eisenstein relation,
    /// t2 · g = −a_0 with g = t2^{e-1} + Σ_{i≥1} a_i t2^{i-1}, so
    /// h = −g · (a_0/p)^{-1}. Division of an element by p^w then becomes a
    /// plain per-component digit shift of the product with h^w.
    pub fn h_element(&self) -> AElem {
        assert!(self.e > 1);
        let y = self.y_class();
        let mut g = self.pow(&y, (self.e - 1) as u64);
        for i in 1..self.e {
            let mut ai = self.zero();
            for (k1, s) in self.epoly[i].iter().enumerate() {
                ai[k1 * self.e] = s.clone();
            }
            let term = self.mul(&ai, &self.pow(&y, (i - 1) as u64));
            g = self.add(&g, &term);
        }
        // u = a_0 / p in the unramified subring; validated unit at build.
        let mut u = self.zero();
        for (k1, s) in self.epoly[0].iter().enumerate() {
            u[k1 * self.e] = digits::shift_down(s, 1);
        }
        self.neg(&self.mul(&g, &self.inv(&u)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zp_like(p: u32, m0: usize) -> Structural {
        // Trivial extension: f = 1 (modulus x − 1), e = 1.
        let gf = Gfq::new(p, &[p - 1, 1]).unwrap();
        Structural::new(gf, 1, m0, &[]).unwrap()
    }

    #[test]
    fn trivial_ring_is_integer_arithmetic() {
        let a = zp_like(5, 6);
        let x = a.from_u128(1234);
        let y = a.from_u128(987);
        let prod = a.mul(&x, &y);
        assert_eq!(
            digits::to_u128(&prod[0], 5),
            Some(1234u128 * 987 % 5u128.pow(6))
        );
        let inv = a.inv(&a.from_u128(7));
        let check = a.mul(&inv, &a.from_u128(7));
        assert!(a.is_zero(&a.sub(&check, &a.one())));
    }

    #[test]
    fn ramified_quadratic_y_squares_to_two() {
        // Q_2(√2)-style: e = 2, f = 1, E(y) = y² − 2, so a_0 = −2, a_1 = 0.
        let m0 = 4;
        let gf = Gfq::new(2, &[1, 1]).unwrap(); // x + 1 → x ≡ 1
        let mut a0 = digits::to_digits(2, 2, m0);
        digits::negate(&mut a0, 2);
        let a1 = vec![0u32; m0];
        let s = Structural::new(gf, 2, m0, &[vec![a0], vec![a1]]).unwrap();
        let y = s.y_class();
        let y2 = s.mul(&y, &y);
        assert!(
            s.is_zero(&s.sub(&y2, &s.from_u128(2))),
            "y² must equal 2 exactly"
        );
        // h-element: y·h = p·1 → y·h − 2·(y²/2)... directly: y·(h/p) = 1,
        // i.e. y·h = p.
        let h = s.h_element();
        let yh = s.mul(&y, &h);
        assert!(s.is_zero(&s.sub(&yh, &s.from_u128(2))), "y·h = p");
    }

    #[test]
    fn eisenstein_validation() {
        let m0 = 4;
        let gf = Gfq::new(2, &[1, 1]).unwrap();
        // a_0 = 1 (unit): not Eisenstein.
        let bad = Structural::new(
            gf.clone(),
            2,
            m0,
            &[vec![digits::to_digits(1, 2, m0)], vec![vec![0; m0]]],
        );
        assert!(matches!(bad, Err(Error::NotEisenstein(_))));
        // a_0 = 4 (valuation 2): not Eisenstein either.
        let bad2 = Structural::new(
            gf,
            2,
            m0,
            &[vec![digits::to_digits(4, 2, m0)], vec![vec![0; m0]]],
        );
        assert!(matches!(bad2, Err(Error::NotEisenstein(_))));
    }

    #[test]
    fn teichmuller_in_unramified_quadratic_over_f3() {
        // f = 2 over p = 3 with primitive modulus x² + 2x + 2.
        let m0 = 8;
        let gf = Gfq::new(3, &[2, 2, 1]).unwrap();
        let s = Structural::new(gf, 1, m0, &[]).unwrap();
        let t1 = s.teichmuller();
        // t1^{q−1} = 1 and t1^q = t1.
        assert!(s.is_zero(&s.sub(&s.pow(&t1, 8), &s.one())));
        assert!(s.is_zero(&s.sub(&s.pow(&t1, 9), &t1)));
        // Basis matrix is invertible and the inverse actually inverts.
        let (mat, inv) = s.basis_matrix(&t1);
        // multiply mat · inv manually
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = vec![0u32; m0];
                for (k, invrow) in inv.iter().enumerate() {
                    let t = digits::mul(&mat[i][k], &invrow[j], 3, m0);
                    digits::add_assign(&mut acc, &t, 3);
                }
                let expect = u128::from(i == j);
                assert_eq!(digits::to_u128(&acc, 3), Some(expect));
            }
        }
    }

    #[test]
    fn teichmuller_f4() {
        // F_4-residue unramified extension of Z_2.
        let gf = Gfq::new(2, &[1, 1, 1]).unwrap();
        let s = Structural::new(gf, 1, 10, &[]).unwrap();
        let t1 = s.teichmuller();
        assert!(s.is_zero(&s.sub(&s.pow(&t1, 3), &s.one())), "t1³ = 1");
        // t1 ≠ 1: it reduces to x, a generator.
        assert!(!s.is_zero(&s.sub(&t1, &s.one())));
    }
}
