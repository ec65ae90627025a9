//! The residue field F_q = F_p[x]/(m(x)) for a monic irreducible m of degree
//! f, with the validation the field constructor needs: irreducibility (by the
//! derandomized power/gcd criterion) and, for proper extensions, that the
//! class of x generates the multiplicative group.
//!
//! Elements are coefficient vectors of length f over F_p, low degree first.

use crate::error::Error;
use crate::Result;

use super::digits::{is_prime_u64, pow_mod_u64};

/// Dense F_p[x] polynomial, low degree first, not necessarily normalized.
type Poly = Vec<u32>;

fn trim(a: &mut Poly) {
    while a.last() == Some(&0) {
        a.pop();
    }
}

fn deg(a: &Poly) -> Option<usize> {
    a.iter().rposition(|&c| c != 0)
}

fn poly_mul(a: &Poly, b: &Poly, p: u32) -> Poly {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut out = vec![0u32; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] = ((out[i + j] as u64 + ai as u64 * bj as u64) % p as u64) as u32;
        }
    }
    out
}

/// Remainder of a modulo monic m.
fn poly_rem(a: &Poly, m: &Poly, p: u32) -> Poly {
    let dm = deg(m).expect("modulus must be nonzero");
    assert_eq!(m[dm], 1, "modulus must be monic");
    let mut r = a.clone();
    trim(&mut r);
    while let Some(dr) = deg(&r) {
        if dr < dm {
            break;
        }
        let c = r[dr];
        // r -= c * x^{dr-dm} * m
        for (i, &mi) in m.iter().enumerate().take(dm + 1) {
            let idx = dr - dm + i;
            let sub = (c as u64 * mi as u64) % p as u64;
            r[idx] = ((r[idx] as u64 + p as u64 - sub % p as u64) % p as u64) as u32;
        }
        trim(&mut r);
    }
    r
}

fn poly_gcd(a: &Poly, b: &Poly, p: u32) -> Poly {
    let (mut a, mut b) = (a.clone(), b.clone());
    trim(&mut a);
    trim(&mut b);
    while !b.is_empty() {
        // Make b monic for the remainder step.
        let db = deg(&b).unwrap();
        let lead_inv = pow_mod_u64(b[db] as u64, p as u64 - 2, p as u64) as u32;
        let bm: Poly = b
            .iter()
            .map(|&c| ((c as u64 * lead_inv as u64) % p as u64) as u32)
            .collect();
        let r = poly_rem(&a, &bm, p);
        a = bm;
        b = r;
        trim(&mut b);
    }
    a
}

/// x^(p^k) mod m, by repeated p-th powering.
fn x_pow_p_iterated(m: &Poly, p: u32, k: usize) -> Poly {
    let mut cur: Poly = vec![0, 1]; // x
    for _ in 0..k {
        // cur = cur^p mod m by square-and-multiply on exponent p.
        let mut acc: Poly = vec![1];
        let mut base = cur.clone();
        let mut e = p as u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = poly_rem(&poly_mul(&acc, &base, p), m, p);
            }
            base = poly_rem(&poly_mul(&base, &base, p), m, p);
            e >>= 1;
        }
        cur = acc;
    }
    cur
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = vec![];
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Arithmetic in F_q = F_p[x]/(m), constructed with full validation.
#[derive(Debug, Clone)]
pub struct Gfq {
    pub p: u32,
    pub f: usize,
    pub q: u64,
    /// Monic modulus of degree f, low first, length f+1.
    pub modulus: Vec<u32>,
}

/// An F_q element: f coefficients over F_p, low degree first.
pub type GfqElem = Vec<u32>;

impl Gfq {
    /// Validates p prime, m monic of degree f with digits in range,
    /// irreducible over F_p, and (for f > 1) with x generating F_q^* — the
    /// basis construction lifts x multiplicatively, and the lifted generator
    /// must reduce to a generator of the residue field's unit group.
    pub fn new(p: u32, modulus: &[u32]) -> Result<Gfq> {
        if !is_prime_u64(p as u64) {
            return Err(Error::NonPrime(p as u64));
        }
        if modulus.len() < 2 {
            return Err(Error::BadFieldSpec(
                "residue polynomial needs degree ≥ 1".into(),
            ));
        }
        let f = modulus.len() - 1;
        if modulus[f] != 1 {
            return Err(Error::BadFieldSpec("residue polynomial must be monic".into()));
        }
        if modulus.iter().any(|&c| c >= p) {
            return Err(Error::BadFieldSpec(format!(
                "residue polynomial coefficient out of range for p = {p}"
            )));
        }
        let q = (p as u64)
            .checked_pow(f as u32)
            .filter(|&q| q <= 1 << 40)
            .ok_or_else(|| Error::BadFieldSpec("q = p^f too large".into()))?;
        let m: Poly = modulus.to_vec();
        if f > 1 {
            // Irreducibility: x^(p^f) ≡ x mod m, and for every prime ℓ | f,
            // gcd(x^(p^{f/ℓ}) − x, m) = 1.
            let xq = x_pow_p_iterated(&m, p, f);
            let mut diff = xq.clone();
            diff.resize(diff.len().max(2), 0);
            diff[1] = (diff[1] + p - 1) % p;
            trim(&mut diff);
            if !diff.is_empty() {
                return Err(Error::ReduciblePoly {
                    p: p as u64,
                    detail: "x^(p^f) != x in the quotient".into(),
                });
            }
            for l in prime_factors(f as u64) {
                let mut g = x_pow_p_iterated(&m, p, f / l as usize);
                g.resize(g.len().max(2), 0);
                g[1] = (g[1] + p - 1) % p;
                let gcd = poly_gcd(&g, &m, p);
                if deg(&gcd) != Some(0) {
                    return Err(Error::ReduciblePoly {
                        p: p as u64,
                        detail: format!("shares a factor with x^(p^(f/{l})) - x"),
                    });
                }
            }
        }
        let gf = Gfq { p, f, q, modulus: m };
        if f > 1 && !gf.is_generator(&gf.x_class()) {
            return Err(Error::NotPrimitive { p: p as u64 });
        }
        Ok(gf)
    }

    pub fn zero(&self) -> GfqElem {
        vec![0; self.f]
    }

    pub fn one(&self) -> GfqElem {
        let mut e = self.zero();
        e[0] = 1;
        e
    }

    pub fn x_class(&self) -> GfqElem {
        let mut e = self.zero();
        if self.f > 1 {
            e[1] = 1;
        } else {
            // Degree-1 modulus x + c: the class of x is −c.
            e[0] = (self.p - self.modulus[0]) % self.p;
        }
        e
    }

    pub fn is_zero(&self, a: &GfqElem) -> bool {
        a.iter().all(|&c| c == 0)
    }

    pub fn add(&self, a: &GfqElem, b: &GfqElem) -> GfqElem {
        (0..self.f).map(|i| (a[i] + b[i]) % self.p).collect()
    }

    pub fn sub(&self, a: &GfqElem, b: &GfqElem) -> GfqElem {
        (0..self.f).map(|i| (a[i] + self.p - b[i]) % self.p).collect()
    }

    pub fn neg(&self, a: &GfqElem) -> GfqElem {
        a.iter().map(|&c| (self.p - c) % self.p).collect()
    }

    pub fn mul(&self, a: &GfqElem, b: &GfqElem) -> GfqElem {
        let mut r = poly_rem(&poly_mul(a, b, self.p), &self.modulus, self.p);
        r.resize(self.f, 0);
        r
    }

    pub fn pow(&self, a: &GfqElem, e: u64) -> GfqElem {
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

    /// Inverse of a nonzero element (a^{q−2}).
    pub fn inv(&self, a: &GfqElem) -> GfqElem {
        assert!(!self.is_zero(a), "inverse of zero in F_q");
        self.pow(a, self.q - 2)
    }

    /// Does `a` generate the multiplicative group F_q^*?
    pub fn is_generator(&self, a: &GfqElem) -> bool {
        if self.is_zero(a) {
            return false;
        }
        prime_factors(self.q - 1)
            .into_iter()
            .all(|r| self.pow(a, (self.q - 1) / r) != self.one())
    }

    /// All q elements, in lexicographic coefficient order (low coefficient
    /// varies fastest).
    pub fn all_elements(&self) -> Vec<GfqElem> {
        let mut out = Vec::with_capacity(self.q as usize);
        let mut cur = self.zero();
        loop {
            out.push(cur.clone());
            let mut i = 0;
            loop {
                if i == self.f {
                    return out;
                }
                cur[i] += 1;
                if cur[i] < self.p {
                    break;
                }
                cur[i] = 0;
                i += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f4_arithmetic() {
        // F_4 = F_2[x]/(x^2+x+1); x is a generator of the 3-element unit group.
        let gf = Gfq::new(2, &[1, 1, 1]).expect("x^2+x+1 is irreducible over F_2");
        let x = gf.x_class();
        let x2 = gf.mul(&x, &x);
        // x^2 = x + 1
        assert_eq!(x2, vec![1, 1]);
        assert_eq!(gf.mul(&x2, &x), gf.one(), "x^3 = 1");
        assert!(gf.is_generator(&x));
        // Every nonzero element has a working inverse.
        for a in gf.all_elements() {
            if !gf.is_zero(&a) {
                assert_eq!(gf.mul(&a, &gf.inv(&a)), gf.one());
            }
        }
    }

    #[test]
    fn f9_primitive_and_not() {
        // x^2+1 is irreducible over F_3 but x has order 4, not 8.
        match Gfq::new(3, &[1, 0, 1]) {
            Err(Error::NotPrimitive { .. }) => {}
            other => panic!("expected NotPrimitive, got {other:?}"),
        }
        // x^2+2x+2: x has order 8.
        let gf = Gfq::new(3, &[2, 2, 1]).expect("x^2+2x+2 irreducible and primitive");
        assert!(gf.is_generator(&gf.x_class()));
        assert_eq!(gf.pow(&gf.x_class(), 8), gf.one());
        assert_ne!(gf.pow(&gf.x_class(), 4), gf.one());
    }

    #[test]
    fn reducible_rejected() {
        // x^2-1 = (x-1)(x+1) over F_5.
        match Gfq::new(5, &[4, 0, 1]) {
            Err(Error::ReduciblePoly { .. }) => {}
            other => panic!("expected ReduciblePoly, got {other:?}"),
        }
        // x^2 over F_3 (repeated root).
        assert!(Gfq::new(3, &[0, 0, 1]).is_err());
    }

    #[test]
    fn degree_one_modulus() {
        // x − 1 over F_3: the trivial extension; class of x is 1.
        let gf = Gfq::new(3, &[2, 1]).expect("degree-1 always fine");
        assert_eq!(gf.q, 3);
        assert_eq!(gf.x_class(), vec![1]);
        assert_eq!(gf.mul(&vec![2], &vec![2]), vec![1], "2*2 = 4 = 1 mod 3");
    }

    #[test]
    fn nonprime_rejected() {
        assert!(matches!(Gfq::new(4, &[1, 1]), Err(Error::NonPrime(4))));
    }

    #[test]
    fn field_axioms_f8() {
        // F_8 = F_2[x]/(x^3+x+1), exhaustive associativity/distributivity.
        let gf = Gfq::new(2, &[1, 1, 0, 1]).unwrap();
        let all = gf.all_elements();
        assert_eq!(all.len(), 8);
        for a in &all {
            for b in &all {
                for c in &all {
                    let ab_c = gf.mul(&gf.mul(a, b), c);
                    let a_bc = gf.mul(a, &gf.mul(b, c));
                    assert_eq!(ab_c, a_bc, "associativity");
                    let lhs = gf.mul(a, &gf.add(b, c));
                    let rhs = gf.add(&gf.mul(a, b), &gf.mul(a, c));
                    assert_eq!(lhs, rhs, "distributivity");
                }
            }
        }
    }
}
