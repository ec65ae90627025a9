//! Field descriptions and exact truncated arithmetic.
//!
//! A field is one of three families, unified under one element model:
//!
//! * `F_q[[t]]` — finite characteristic, e = 1;
//! * `Z_p` — characteristic zero, f = e = 1;
//! * finite extensions of `Q_p` with inertia degree f and ramification
//!   index e.
//!
//! Elements are canonical digit tensors over the basis {t1^{k1} t2^{k2}}:
//! component (k1, k2) holds base-p digits, digit j sitting at uniformizer
//! position u = j·e + k2. The normalization is |uniformizer| = q^{-1} with
//! q = p^f, so |t1| = 1, |t2| = q^{-1}, |p| = q^{-e}. All arithmetic is
//! exact modulo uniformizer^N; valuations at or beyond N are reported as a
//! "≥ N" verdict, never guessed.

pub mod digits;
pub mod residue;
pub mod spec_file;
pub mod structural;

use std::cmp::Ordering;
use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::Error;
use crate::height::HeightProfile;
use crate::Result;

use residue::Gfq;
use structural::Structural;

/// Hard cap on carried precision.
pub const MAX_PRECISION: u32 = 4096;
/// Guard on any single enumeration (subdivision children, brute-force
/// sweeps); larger requests return `Error::TooLarge` instead of thrashing.
pub const MAX_ENUM: u128 = 20_000_000;

/// Field characteristic family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Char {
    Zero,
    Finite,
}

/// A validated-on-construction field description. `eisenstein` holds the
/// non-leading coefficients a_0 … a_{e-1} of the Eisenstein polynomial, each
/// an element of the unramified subfield given as f digit lists (one per
/// t1-power, base-p digits low first, any length — the list denotes the
/// exact integer it spells).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSpec {
    pub characteristic: Char,
    pub p: u32,
    pub f: usize,
    pub e: usize,
    /// Monic degree-f polynomial over F_p, low degree first (length f+1).
    pub residue_poly: Vec<u32>,
    /// e coefficients, each f digit lists. Empty unless characteristic zero
    /// with e > 1.
    pub eisenstein: Vec<Vec<Vec<u32>>>,
    /// N: number of uniformizer digits carried.
    pub precision: u32,
}

impl FieldSpec {
    /// Convenience constructor for the unramified / trivial cases.
    pub fn unramified(characteristic: Char, p: u32, residue_poly: &[u32], precision: u32) -> FieldSpec {
        FieldSpec {
            characteristic,
            p,
            f: residue_poly.len() - 1,
            e: 1,
            residue_poly: residue_poly.to_vec(),
            eisenstein: vec![],
            precision,
        }
    }

    /// Plain Z_p at the given precision.
    pub fn zp(p: u32, precision: u32) -> FieldSpec {
        FieldSpec::unramified(Char::Zero, p, &[p - 1, 1], precision)
    }

    /// F_p[[t]] at the given precision.
    pub fn fpt(p: u32, precision: u32) -> FieldSpec {
        FieldSpec::unramified(Char::Finite, p, &[p - 1, 1], precision)
    }

    /// Ramified extension of Q_p by the Eisenstein polynomial
    /// y^e + c_{e-1} y^{e-1} + … + c_0 with small integer coefficients.
    pub fn ramified_zp(p: u32, coeffs: &[i64], precision: u32) -> FieldSpec {
        let e = coeffs.len();
        let digit_len = (precision as usize).div_ceil(e) + 2;
        let eis = coeffs
            .iter()
            .map(|&c| vec![signed_digits(c, p, digit_len)])
            .collect();
        FieldSpec {
            characteristic: Char::Zero,
            p,
            f: 1,
            e,
            residue_poly: vec![p - 1, 1],
            eisenstein: eis,
            precision,
        }
    }
}

/// Digits of the integer c mod p^len (two's-complement style for negatives).
fn signed_digits(c: i64, p: u32, len: usize) -> Vec<u32> {
    let mut d = digits::to_digits(c.unsigned_abs() as u128, p, len);
    if c < 0 {
        digits::negate(&mut d, p);
    }
    d
}

/// Valuation verdict: an exact uniformizer exponent, or "≥ N" when every
/// carried digit vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Val {
    Finite(u32),
    AtLeast(u32),
}

impl Val {
    /// Exact value if certified.
    pub fn finite(self) -> Option<u32> {
        match self {
            Val::Finite(v) => Some(v),
            Val::AtLeast(_) => None,
        }
    }

    /// Is the valuation certainly ≥ bound?
    pub fn at_least(self, bound: u32) -> bool {
        match self {
            Val::Finite(v) => v >= bound,
            Val::AtLeast(n) => n >= bound,
        }
    }

    /// Is the valuation certainly ≤ bound (i.e. |x| ≥ q^{-bound})?
    pub fn at_most(self, bound: u32) -> bool {
        match self {
            Val::Finite(v) => v <= bound,
            Val::AtLeast(_) => false,
        }
    }
}

impl PartialOrd for Val {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Val {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Val::Finite(a), Val::Finite(b)) => a.cmp(b),
            (Val::Finite(_), Val::AtLeast(_)) => Ordering::Less,
            (Val::AtLeast(_), Val::Finite(_)) => Ordering::Greater,
            (Val::AtLeast(_), Val::AtLeast(_)) => Ordering::Equal,
        }
    }
}

impl fmt::Display for Val {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Val::Finite(v) => write!(w, "{v}"),
            Val::AtLeast(n) => write!(w, ">={n}"),
        }
    }
}

#[derive(Debug)]
enum Kind {
    FiniteChar {
        gf: Gfq,
    },
    CharZero {
        #[allow(dead_code)]
        gf: Gfq,
        /// mono[a][b] = component tensor of t1^a t2^b, a < 2f−1, b < 2e−1.
        mono: Vec<Vec<Vec<Vec<u32>>>>,
        /// Component tensor of h with t2^{-1} = h/p (ramified only).
        h_comps: Option<Vec<Vec<u32>>>,
    },
}

#[derive(Debug)]
pub struct FieldInner {
    spec: FieldSpec,
    q: u64,
    /// Digit length of component (·, k2): ceil((N − k2) / e).
    comp_len: Vec<usize>,
    kind: Kind,
    profile: OnceLock<HeightProfile>,
}

/// Shared immutable handle to a constructed field.
#[derive(Debug, Clone)]
pub struct Field(Arc<FieldInner>);

/// A ring element: one base-p digit vector per basis component, exact modulo
/// uniformizer^N.
#[derive(Debug, Clone)]
pub struct Element {
    field: Field,
    pub(crate) comps: Vec<Vec<u32>>,
}

impl PartialEq for Element {
    fn eq(&self, other: &Self) -> bool {
        debug_assert!(
            self.field.compatible(&other.field),
            "comparing elements of different fields"
        );
        self.comps == other.comps
    }
}
impl Eq for Element {}

impl Element {
    pub fn field(&self) -> &Field {
        &self.field
    }

    /// Serialization-order digit string: components in (k1, k2) row-major
    /// order, digits low to high. This is also the canonical sort key.
    pub fn key(&self) -> Vec<u32> {
        self.comps.iter().flatten().copied().collect()
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(|c| digits::is_zero(c))
    }
}

impl Field {
    pub fn new(spec: FieldSpec) -> Result<Field> {
        let p = spec.p;
        let (f, e, n) = (spec.f, spec.e, spec.precision);
        if n < 1 || n > MAX_PRECISION {
            return Err(Error::BadFieldSpec(format!(
                "precision must be in [1, {MAX_PRECISION}], got {n}"
            )));
        }
        if f < 1 || e < 1 {
            return Err(Error::BadFieldSpec("need f ≥ 1 and e ≥ 1".into()));
        }
        if (n as usize) < e {
            return Err(Error::BadFieldSpec(format!(
                "precision {n} carries no digits for some components; need N ≥ e = {e}"
            )));
        }
        if spec.residue_poly.len() != f + 1 {
            return Err(Error::BadFieldSpec(format!(
                "residue polynomial must have degree f = {f}"
            )));
        }
        // Gfq validates primality, irreducibility, and (f > 1) that x
        // generates the unit group — the basis-consistency requirement.
        let gf = Gfq::new(p, &spec.residue_poly)?;
        match spec.characteristic {
            Char::Finite => {
                if e != 1 {
                    return Err(Error::BadFieldSpec(
                        "finite characteristic requires e = 1".into(),
                    ));
                }
                if !spec.eisenstein.is_empty() {
                    return Err(Error::BadFieldSpec(
                        "finite characteristic takes no ramification polynomial".into(),
                    ));
                }
                let comp_len = vec![n as usize];
                Ok(Field(Arc::new(FieldInner {
                    q: gf.q,
                    spec,
                    comp_len,
                    kind: Kind::FiniteChar { gf },
                    profile: OnceLock::new(),
                })))
            }
            Char::Zero => {
                if e == 1 && !spec.eisenstein.is_empty() {
                    return Err(Error::BadFieldSpec(
                        "unramified field takes no ramification polynomial".into(),
                    ));
                }
                let comp_len: Vec<usize> =
                    (0..e).map(|k2| (n as usize - k2).div_ceil(e)).collect();
                let m0 = comp_len[0];
                // The Eisenstein coefficients arrive in t1-basis digit lists;
                // convert to structural x-coordinates first. For that we need
                // the basis matrix of the unramified part, computed in a
                // helper ring without the y variable.
                let unram = Structural::new(gf.clone(), 1, m0, &[])?;
                let (tmat_u, _) = if f > 1 {
                    let t1u = unram.teichmuller();
                    unram.basis_matrix(&t1u)
                } else {
                    (vec![vec![digits::to_digits(1, p, m0)]], vec![vec![digits::to_digits(1, p, m0)]])
                };
                let mut eis_x: Vec<Vec<structural::Scalar>> = Vec::new();
                if e > 1 {
                    if spec.eisenstein.len() != e {
                        return Err(Error::NotEisenstein(format!(
                            "need {} coefficients, got {}",
                            e,
                            spec.eisenstein.len()
                        )));
                    }
                    for coeff in &spec.eisenstein {
                        if coeff.len() != f {
                            return Err(Error::NotEisenstein(format!(
                                "each coefficient needs {f} digit lists (one per t1-power)"
                            )));
                        }
                        // t1-coords, zero-extended to m0 digits.
                        let tc: Vec<structural::Scalar> = coeff
                            .iter()
                            .map(|d| {
                                let mut v = d.clone();
                                if v.iter().any(|&x| x >= p) {
                                    return Err(Error::BadFieldSpec(
                                        "eisenstein digit out of range".into(),
                                    ));
                                }
                                v.resize(m0, 0);
                                Ok(v)
                            })
                            .collect::<Result<_>>()?;
                        // x-coords = T · t1-coords.
                        let xc: Vec<structural::Scalar> = (0..f)
                            .map(|r| {
                                let mut acc = vec![0u32; m0];
                                for (k, tck) in tc.iter().enumerate() {
                                    let t = digits::mul(&tmat_u[r][k], tck, p, m0);
                                    digits::add_assign(&mut acc, &t, p);
                                }
                                acc
                            })
                            .collect();
                        eis_x.push(xc);
                    }
                } else if !spec.eisenstein.is_empty() {
                    return Err(Error::NotEisenstein("e = 1 takes no coefficients".into()));
                }
                let ring = Structural::new(gf.clone(), e, m0, &eis_x)?;
                let (_, tinv) = if f > 1 {
                    let t1 = ring.teichmuller();
                    ring.basis_matrix(&t1)
                } else {
                    (vec![vec![digits::to_digits(1, p, m0)]], vec![vec![digits::to_digits(1, p, m0)]])
                };
                // Monomial products t1^a t2^b expanded in the canonical basis.
                let t1a = if f > 1 { ring.teichmuller() } else { ring.one() };
                let t2a = if e > 1 { ring.y_class() } else { ring.from_u128(p as u128) };
                let mut mono = Vec::with_capacity(2 * f - 1);
                for a in 0..(2 * f - 1) as u64 {
                    let pa = ring.pow(&t1a, a);
                    let mut row = Vec::with_capacity(2 * e - 1);
                    for b in 0..(2 * e - 1) as u64 {
                        let prod = ring.mul(&pa, &ring.pow(&t2a, b));
                        row.push(a_to_comps(&ring, &tinv, &comp_len, &prod));
                    }
                    mono.push(row);
                }
                let h_comps = if e > 1 {
                    Some(a_to_comps(&ring, &tinv, &comp_len, &ring.h_element()))
                } else {
                    None
                };
                let field = Field(Arc::new(FieldInner {
                    q: gf.q,
                    spec,
                    comp_len,
                    kind: Kind::CharZero { gf, mono, h_comps },
                    profile: OnceLock::new(),
                }));
                // Sanity: the basis normalization |t2| = q^{-1}, |p| = q^{-e}.
                debug_assert_eq!(field.valuation(&field.uniformizer()), Val::Finite(1));
                debug_assert_eq!(
                    field.valuation(&field.from_i64(p as i64)),
                    Val::Finite(e as u32)
                );
                Ok(field)
            }
        }
    }

    // ----- descriptors ----------------------------------------------------

    pub fn spec(&self) -> &FieldSpec {
        &self.0.spec
    }

    pub fn p(&self) -> u32 {
        self.0.spec.p
    }

    pub fn q(&self) -> u64 {
        self.0.q
    }

    pub fn f(&self) -> usize {
        self.0.spec.f
    }

    pub fn e(&self) -> usize {
        self.0.spec.e
    }

    pub fn precision(&self) -> u32 {
        self.0.spec.precision
    }

    pub fn characteristic(&self) -> Char {
        self.0.spec.characteristic
    }

    /// Number of stored components per element.
    pub fn comp_count(&self) -> usize {
        match self.0.spec.characteristic {
            Char::Finite => self.0.spec.f,
            Char::Zero => self.0.spec.f * self.0.spec.e,
        }
    }

    /// Digit length of component index c.
    pub fn comp_len(&self, c: usize) -> usize {
        match self.0.spec.characteristic {
            Char::Finite => self.0.comp_len[0],
            Char::Zero => self.0.comp_len[c % self.0.spec.e],
        }
    }

    /// Same mathematical field (all parameters including precision equal)?
    pub fn compatible(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.spec == other.0.spec
    }

    /// Same field parameters ignoring precision?
    pub fn same_structure(&self, other: &Field) -> bool {
        let (a, b) = (&self.0.spec, &other.0.spec);
        a.characteristic == b.characteristic
            && a.p == b.p
            && a.f == b.f
            && a.e == b.e
            && a.residue_poly == b.residue_poly
            && a.eisenstein == b.eisenstein
    }

    /// The cached height profile (measured on first use).
    pub fn profile(&self) -> &HeightProfile {
        self.0
            .profile
            .get_or_init(|| HeightProfile::measure(self))
    }

    // ----- element constructors -------------------------------------------

    pub fn zero(&self) -> Element {
        let comps = (0..self.comp_count())
            .map(|c| vec![0u32; self.comp_len(c)])
            .collect();
        Element { field: self.clone(), comps }
    }

    pub fn one(&self) -> Element {
        let mut z = self.zero();
        z.comps[0][0] = 1;
        z
    }

    /// The canonical uniformizer: t in F_q[[t]], p in unramified
    /// characteristic zero, t2 in ramified extensions.
    pub fn uniformizer(&self) -> Element {
        let mut z = self.zero();
        match self.0.spec.characteristic {
            Char::Finite => z.comps[0][1] = 1,
            Char::Zero => {
                if self.0.spec.e == 1 {
                    z.comps[0][1] = 1;
                } else {
                    z.comps[1][0] = 1;
                }
            }
        }
        z
    }

    /// The multiplicative basis generator t1 (only distinct from 1 when
    /// f > 1).
    pub fn t1(&self) -> Element {
        let mut z = self.zero();
        if self.0.spec.f > 1 {
            match self.0.spec.characteristic {
                Char::Finite => z.comps[1][0] = 1,
                Char::Zero => z.comps[self.0.spec.e][0] = 1,
            }
        } else {
            z.comps[0][0] = 1;
        }
        z
    }

    /// Canonical integer embedding.
    pub fn from_i64(&self, k: i64) -> Element {
        let mut z = self.zero();
        match self.0.spec.characteristic {
            Char::Zero => {
                z.comps[0] = signed_digits(k, self.0.spec.p, self.comp_len(0));
            }
            Char::Finite => {
                let p = self.0.spec.p as i64;
                z.comps[0][0] = k.rem_euclid(p) as u32;
            }
        }
        z
    }

    /// Element from a scalar digit list on the first basis component
    /// (base-p digits low first), optionally negated. This is the reader for
    /// polynomial-file coefficients.
    pub fn from_scalar_digits(&self, digs: &[u32], negate: bool) -> Result<Element> {
        let p = self.0.spec.p;
        if digs.iter().any(|&d| d >= p) {
            return Err(Error::Parse(format!("digit out of range for p = {p}")));
        }
        if digs.len() > self.comp_len(0) {
            return Err(Error::PrecisionExhausted(format!(
                "coefficient needs {} digits but component 0 carries {}",
                digs.len(),
                self.comp_len(0)
            )));
        }
        let mut z = self.zero();
        z.comps[0][..digs.len()].copy_from_slice(digs);
        if negate {
            z = self.neg(&z);
        }
        Ok(z)
    }

    /// Element from a full component tensor (validated).
    pub fn from_comps(&self, comps: Vec<Vec<u32>>) -> Result<Element> {
        if comps.len() != self.comp_count() {
            return Err(Error::Parse("wrong component count".into()));
        }
        for (c, v) in comps.iter().enumerate() {
            if v.len() != self.comp_len(c) {
                return Err(Error::Parse(format!("component {c} has wrong digit count")));
            }
            if v.iter().any(|&d| d >= self.0.spec.p) {
                return Err(Error::Parse("digit out of range".into()));
            }
        }
        Ok(Element { field: self.clone(), comps })
    }

    // ----- digit access ---------------------------------------------------

    /// The digit of component row k1 at uniformizer position u.
    pub fn digit(&self, x: &Element, k1: usize, u: u32) -> u32 {
        let (c, j) = self.locate(k1, u);
        x.comps[c][j]
    }

    pub(crate) fn set_digit(&self, x: &mut Element, k1: usize, u: u32, d: u32) {
        debug_assert!(d < self.0.spec.p);
        let (c, j) = self.locate(k1, u);
        x.comps[c][j] = d;
    }

    /// (component index, digit index) of position u in row k1.
    fn locate(&self, k1: usize, u: u32) -> (usize, usize) {
        assert!(u < self.0.spec.precision, "position beyond precision");
        match self.0.spec.characteristic {
            Char::Finite => (k1, u as usize),
            Char::Zero => {
                let e = self.0.spec.e;
                let k2 = u as usize % e;
                (k1 * e + k2, u as usize / e)
            }
        }
    }

    /// Zero out all digits at uniformizer positions ≥ lambda: the canonical
    /// representative modulo uniformizer^lambda.
    pub fn truncate_positions(&self, x: &Element, lambda: u32) -> Element {
        let mut out = x.clone();
        for k1 in 0..self.0.spec.f {
            for u in lambda..self.0.spec.precision {
                self.set_digit(&mut out, k1, u, 0);
            }
        }
        out
    }

    // ----- arithmetic -----------------------------------------------------

    fn check_same(&self, x: &Element, y: &Element) -> Result<()> {
        if !self.compatible(&x.field) || !self.compatible(&y.field) {
            return Err(Error::FieldMismatch(
                "operands constructed from different field specs".into(),
            ));
        }
        Ok(())
    }

    pub fn add(&self, x: &Element, y: &Element) -> Element {
        self.check_same(x, y).expect("field mismatch in add");
        let mut out = x.clone();
        match self.0.spec.characteristic {
            Char::Zero => {
                for (o, b) in out.comps.iter_mut().zip(y.comps.iter()) {
                    digits::add_assign(o, b, self.0.spec.p);
                }
            }
            Char::Finite => {
                let p = self.0.spec.p;
                for (o, b) in out.comps.iter_mut().zip(y.comps.iter()) {
                    for (d, &s) in o.iter_mut().zip(b.iter()) {
                        *d = (*d + s) % p;
                    }
                }
            }
        }
        out
    }

    pub fn neg(&self, x: &Element) -> Element {
        let mut out = x.clone();
        match self.0.spec.characteristic {
            Char::Zero => {
                for c in out.comps.iter_mut() {
                    digits::negate(c, self.0.spec.p);
                }
            }
            Char::Finite => {
                let p = self.0.spec.p;
                for c in out.comps.iter_mut() {
                    for d in c.iter_mut() {
                        *d = (p - *d) % p;
                    }
                }
            }
        }
        out
    }

    pub fn sub(&self, x: &Element, y: &Element) -> Element {
        self.add(x, &self.neg(y))
    }

    pub fn mul(&self, x: &Element, y: &Element) -> Element {
        self.check_same(x, y).expect("field mismatch in mul");
        match &self.0.kind {
            Kind::FiniteChar { gf } => {
                let f = self.0.spec.f;
                let n = self.0.spec.precision as usize;
                let mut out = self.zero();
                for a in 0..n {
                    let xa: Vec<u32> = (0..f).map(|k| x.comps[k][a]).collect();
                    if xa.iter().all(|&d| d == 0) {
                        continue;
                    }
                    for b in 0..n - a {
                        let yb: Vec<u32> = (0..f).map(|k| y.comps[k][b]).collect();
                        if yb.iter().all(|&d| d == 0) {
                            continue;
                        }
                        let prod = gf.mul(&xa, &yb);
                        let p = self.0.spec.p;
                        for (k, &d) in prod.iter().enumerate() {
                            out.comps[k][a + b] = (out.comps[k][a + b] + d) % p;
                        }
                    }
                }
                out
            }
            Kind::CharZero { mono, .. } => {
                let e = self.0.spec.e;
                let p = self.0.spec.p;
                let m0 = self.0.comp_len[0];
                let cc = self.comp_count();
                let mut out = self.zero();
                for cx in 0..cc {
                    if digits::is_zero(&x.comps[cx]) {
                        continue;
                    }
                    for cy in 0..cc {
                        if digits::is_zero(&y.comps[cy]) {
                            continue;
                        }
                        let s = digits::mul(&x.comps[cx], &y.comps[cy], p, m0);
                        if digits::is_zero(&s) {
                            continue;
                        }
                        let entry = &mono[cx / e + cy / e][cx % e + cy % e];
                        for (cz, ez) in entry.iter().enumerate() {
                            if digits::is_zero(ez) {
                                continue;
                            }
                            let t = digits::mul(&s, ez, p, out.comps[cz].len());
                            digits::add_assign(&mut out.comps[cz], &t, p);
                        }
                    }
                }
                out
            }
        }
    }

    /// x^k by binary powering.
    pub fn pow(&self, x: &Element, k: u64) -> Element {
        let mut acc = self.one();
        let mut base = x.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                acc = self.mul(&acc, &base);
            }
            base = self.mul(&base, &base);
            k >>= 1;
        }
        acc
    }

    // ----- valuation ------------------------------------------------------

    /// Index of the first nonzero uniformizer position, or "≥ N". Components
    /// at the same position carry independent residue classes (powers of
    /// t1), so no cancellation across rows can hide a nonzero digit.
    pub fn valuation(&self, x: &Element) -> Val {
        let n = self.0.spec.precision;
        let mut best: Option<u32> = None;
        match self.0.spec.characteristic {
            Char::Finite => {
                for c in x.comps.iter() {
                    if let Some(j) = digits::first_nonzero(c) {
                        best = Some(best.map_or(j as u32, |b| b.min(j as u32)));
                    }
                }
            }
            Char::Zero => {
                let e = self.0.spec.e;
                for (ci, c) in x.comps.iter().enumerate() {
                    if let Some(j) = digits::first_nonzero(c) {
                        let u = (j * e + ci % e) as u32;
                        best = Some(best.map_or(u, |b| b.min(u)));
                    }
                }
            }
        }
        match best {
            Some(u) => Val::Finite(u),
            None => Val::AtLeast(n),
        }
    }

    /// |x| as a rational q^{-val}; None when only the "≥ N" bound is known.
    pub fn abs_value(&self, x: &Element) -> Option<num_rational::BigRational> {
        use num_bigint::BigInt;
        let v = self.valuation(x).finite()?;
        let q = BigInt::from(self.0.q);
        Some(num_rational::BigRational::new(
            BigInt::from(1),
            q.pow(v),
        ))
    }

    // ----- division -------------------------------------------------------

    /// Inverse of a unit (valuation exactly 0).
    pub fn inv_unit(&self, x: &Element) -> Result<Element> {
        if self.valuation(x) != Val::Finite(0) {
            return Err(Error::NotDivisible("inverse of a non-unit".into()));
        }
        // Seed: inverse of the residue in F_q, lifted digit-for-digit.
        let gf = match &self.0.kind {
            Kind::FiniteChar { gf } => gf,
            Kind::CharZero { gf, .. } => gf,
        };
        let res: Vec<u32> = (0..self.0.spec.f).map(|k1| self.digit(x, k1, 0)).collect();
        let res_inv = gf.inv(&res);
        let mut z = self.zero();
        for (k1, &d) in res_inv.iter().enumerate() {
            self.set_digit(&mut z, k1, 0, d);
        }
        let two = self.from_i64(2);
        // 1 − xz doubles its valuation every step.
        let n = self.0.spec.precision;
        let mut reach: u64 = 1;
        while reach < n as u64 {
            let xz = self.mul(x, &z);
            let t = self.sub(&two, &xz);
            z = self.mul(&z, &t);
            reach *= 2;
        }
        debug_assert!(self.mul(x, &z) == self.one(), "unit inverse failed");
        Ok(z)
    }

    /// x / uniformizer^w, requiring valuation(x) ≥ w. The result is exact
    /// modulo uniformizer^{N−w} when e = 1 or in finite characteristic, and
    /// modulo uniformizer^{N−w·e} in ramified extensions (the h-element
    /// route spends e digits of certainty per division); the top positions
    /// are filled with zeros.
    pub fn shift_down_uniformizer(&self, x: &Element, w: u32) -> Result<Element> {
        if w == 0 {
            return Ok(x.clone());
        }
        if !self.valuation(x).at_least(w) {
            return Err(Error::NotDivisible(format!(
                "valuation {} below the requested shift {w}",
                self.valuation(x)
            )));
        }
        match &self.0.kind {
            Kind::FiniteChar { .. } => {
                let mut out = x.clone();
                for c in out.comps.iter_mut() {
                    *c = digits::shift_down(c, w as usize);
                }
                Ok(out)
            }
            Kind::CharZero { h_comps, .. } => {
                if self.0.spec.e == 1 {
                    let mut out = x.clone();
                    for c in out.comps.iter_mut() {
                        *c = digits::shift_down(c, w as usize);
                    }
                    Ok(out)
                } else {
                    // x / t2^w = (x · h^w) / p^w, and division by p^w is a
                    // per-component digit shift.
                    let h = Element {
                        field: self.clone(),
                        comps: h_comps.clone().expect("ramified field has h"),
                    };
                    let mut y = x.clone();
                    for _ in 0..w {
                        y = self.mul(&y, &h);
                    }
                    let mut out = y;
                    for c in out.comps.iter_mut() {
                        *c = digits::shift_down(c, w as usize);
                    }
                    Ok(out)
                }
            }
        }
    }

    // ----- precision changes ----------------------------------------------

    /// The same field at a different precision.
    pub fn with_precision(&self, n: u32) -> Result<Field> {
        let mut spec = self.0.spec.clone();
        spec.precision = n;
        Field::new(spec)
    }

    /// Zero-extend an element into a higher-precision rebuild of this field.
    pub fn extend_element(&self, x: &Element, to: &Field) -> Element {
        assert!(self.same_structure(to) && to.precision() >= self.precision());
        let mut z = to.zero();
        for (c, v) in x.comps.iter().enumerate() {
            z.comps[c][..v.len()].copy_from_slice(v);
        }
        z
    }

    /// Truncate an element into a lower-precision rebuild of this field.
    pub fn truncate_element(&self, x: &Element, to: &Field) -> Element {
        assert!(self.same_structure(to) && to.precision() <= self.precision());
        let mut z = to.zero();
        for (c, v) in z.comps.iter_mut().enumerate() {
            let len = v.len();
            v.copy_from_slice(&x.comps[c][..len]);
        }
        z
    }

    // ----- Hensel lifting -------------------------------------------------

    /// Evaluate a one-variable polynomial (coefficient list, low degree
    /// first) by Horner's rule.
    pub fn eval_univariate(&self, poly: &[Element], x: &Element) -> Element {
        let mut acc = self.zero();
        for c in poly.iter().rev() {
            acc = self.add(&self.mul(&acc, x), c);
        }
        acc
    }

    /// Formal derivative coefficient list.
    pub fn derivative_univariate(&self, poly: &[Element]) -> Vec<Element> {
        poly.iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| self.mul(&self.from_i64(i as i64), c))
            .collect()
    }

    /// Newton lifting of a simple root: requires |poly(x0)| < |poly'(x0)|²
    /// with |poly'(x0)| = q^{-alpha} certified at the working precision.
    /// Internally recomputes at padded precision so the returned root
    /// satisfies poly(r) ≡ 0 mod uniformizer^N in this field, which is
    /// re-certified before returning.
    pub fn hensel_lift(&self, poly: &[Element], x0: &Element, alpha: u32) -> Result<Element> {
        let n = self.0.spec.precision;
        let deriv = self.derivative_univariate(poly);
        let dfx = self.eval_univariate(&deriv, x0);
        match self.valuation(&dfx) {
            Val::Finite(v) if v == alpha => {}
            Val::Finite(v) => {
                return Err(Error::HenselHypothesis(format!(
                    "derivative valuation is {v}, not the claimed {alpha}"
                )));
            }
            Val::AtLeast(_) => {
                return Err(Error::HenselHypothesis(
                    "derivative valuation not certifiable at this precision".into(),
                ));
            }
        }
        let fx = self.eval_univariate(poly, x0);
        if !self.valuation(&fx).at_least(2 * alpha + 1) {
            return Err(Error::HenselHypothesis(format!(
                "|poly(x0)| = q^-({}) does not beat |poly'(x0)|^2 = q^-({})",
                self.valuation(&fx),
                2 * alpha
            )));
        }
        // Padded working precision: alpha·(e+1) + e + 2 spare digits absorb
        // the certainty each division by uniformizer^alpha costs.
        let e = self.0.spec.e as u32;
        let npad = n + alpha * (e + 1) + e + 2;
        let big = self.with_precision(npad)?;
        let poly_big: Vec<Element> = poly.iter().map(|c| self.extend_element(c, &big)).collect();
        let deriv_big = big.derivative_univariate(&poly_big);
        let mut x = self.extend_element(x0, &big);
        let cap = 2 * (64 - u64::from(npad).leading_zeros()) + 8;
        let mut done = false;
        for _ in 0..cap {
            let fx = big.eval_univariate(&poly_big, &x);
            if big.valuation(&fx).at_least(n) {
                done = true;
                break;
            }
            let dfx = big.eval_univariate(&deriv_big, &x);
            if big.valuation(&dfx) != Val::Finite(alpha) {
                return Err(Error::HenselHypothesis(
                    "derivative valuation drifted during iteration".into(),
                ));
            }
            let unit = big.shift_down_uniformizer(&dfx, alpha)?;
            let fshift = big.shift_down_uniformizer(&fx, alpha)?;
            let step = big.mul(&fshift, &big.inv_unit(&unit)?);
            x = big.sub(&x, &step);
        }
        if !done {
            return Err(Error::PrecisionExhausted(
                "Newton iteration did not reach the requested contact".into(),
            ));
        }
        let r = big.truncate_element(&x, self);
        // Re-certify in this field: the root must vanish through precision.
        let check = self.eval_univariate(poly, &r);
        if !matches!(self.valuation(&check), Val::AtLeast(_)) {
            return Err(Error::PrecisionExhausted(
                "lifted root does not vanish through the requested precision".into(),
            ));
        }
        Ok(r)
    }
}

/// Convert a structural-ring element to canonical component tensors:
/// per y-layer, multiply by the inverse basis matrix, then truncate each
/// row to its component length.
fn a_to_comps(
    ring: &Structural,
    tinv: &[Vec<structural::Scalar>],
    comp_len: &[usize],
    a: &structural::AElem,
) -> Vec<Vec<u32>> {
    let (p, f, e, m0) = (ring.p, ring.f, ring.e, ring.m0);
    let mut comps = vec![vec![]; f * e];
    for k2 in 0..e {
        // x-coordinate column of this y-layer.
        let xs: Vec<&structural::Scalar> = (0..f).map(|k1| &a[k1 * e + k2]).collect();
        for r in 0..f {
            let mut acc = vec![0u32; m0];
            for (k, xk) in xs.iter().enumerate() {
                let t = digits::mul(&tinv[r][k], xk, p, m0);
                digits::add_assign(&mut acc, &t, p);
            }
            acc.truncate(comp_len[k2]);
            comps[r * e + k2] = acc;
        }
    }
    comps
}

// ----- operator sugar -----------------------------------------------------

impl std::ops::Add for &Element {
    type Output = Element;
    fn add(self, rhs: &Element) -> Element {
        self.field.add(self, rhs)
    }
}

impl std::ops::Sub for &Element {
    type Output = Element;
    fn sub(self, rhs: &Element) -> Element {
        self.field.sub(self, rhs)
    }
}

impl std::ops::Mul for &Element {
    type Output = Element;
    fn mul(self, rhs: &Element) -> Element {
        self.field.mul(self, rhs)
    }
}

impl std::ops::Neg for &Element {
    type Output = Element;
    fn neg(self) -> Element {
        self.field.neg(self)
    }
}

// ----- balls --------------------------------------------------------------

/// An ultrametric ball: center (reduced modulo uniformizer^radius_exp in
/// every coordinate) and radius q^{-radius_exp}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ball {
    pub center: Vec<Element>,
    pub radius_exp: u32,
}

impl Ball {
    /// Build from any representative point; the center is canonicalized.
    pub fn of(points: &[Element], radius_exp: u32) -> Ball {
        let field = points[0].field().clone();
        let center = points
            .iter()
            .map(|x| field.truncate_positions(x, radius_exp))
            .collect();
        Ball { center, radius_exp }
    }

    pub fn dimension(&self) -> usize {
        self.center.len()
    }

    pub fn field(&self) -> &Field {
        self.center[0].field()
    }

    /// Canonical sort key: concatenated coordinate keys.
    pub fn key(&self) -> Vec<u32> {
        self.center.iter().flat_map(|x| x.key()).collect()
    }

    /// Does the ball contain the point (all coordinates agree below the
    /// radius exponent)?
    pub fn contains(&self, point: &[Element]) -> bool {
        let field = self.field();
        self.center
            .iter()
            .zip(point.iter())
            .all(|(c, x)| &field.truncate_positions(x, self.radius_exp) == c)
    }

    /// All q^{n·(lambda'−lambda)} children at the finer radius, pairwise
    /// disjoint, partitioning this ball, sorted by center key.
    pub fn subdivide(&self, lambda2: u32) -> Result<Vec<Ball>> {
        let field = self.field().clone();
        let n = self.dimension();
        let lambda = self.radius_exp;
        assert!(lambda2 >= lambda, "subdivide must refine");
        if lambda2 > field.precision() {
            return Err(Error::PrecisionExhausted(format!(
                "subdividing to scale {lambda2} exceeds precision {}",
                field.precision()
            )));
        }
        // Free digit slots: coordinate × position in [lambda, lambda2) × row.
        let mut slots: Vec<(usize, usize, u32)> = Vec::new();
        for coord in 0..n {
            for u in lambda..lambda2 {
                for k1 in 0..field.f() {
                    slots.push((coord, k1, u));
                }
            }
        }
        let p = field.p() as u128;
        let mut total: u128 = 1;
        for _ in 0..slots.len() {
            total = total.saturating_mul(p);
            if total > MAX_ENUM {
                return Err(Error::TooLarge(format!(
                    "subdivision would produce more than {MAX_ENUM} children"
                )));
            }
        }
        let mut out = Vec::with_capacity(total as usize);
        let mut odo = vec![0u32; slots.len()];
        loop {
            let mut center = self.center.clone();
            for (s, &(coord, k1, u)) in slots.iter().enumerate() {
                field.set_digit(&mut center[coord], k1, u, odo[s]);
            }
            out.push(Ball { center, radius_exp: lambda2 });
            // Odometer advance (first slot fastest).
            let mut i = 0;
            loop {
                if i == odo.len() {
                    out.sort_by(|a, b| a.key().cmp(&b.key()));
                    return Ok(out);
                }
                odo[i] += 1;
                if odo[i] < field.p() {
                    break;
                }
                odo[i] = 0;
                i += 1;
            }
        }
    }
}

/// A finite union of equal-radius balls, kept sorted by center key.
#[derive(Debug, Clone)]
pub struct BallFamily {
    pub radius_exp: u32,
    pub balls: Vec<Ball>,
}

impl BallFamily {
    /// Validates equal radii and pairwise disjointness (equal-radius balls
    /// are disjoint iff their centers differ), then sorts canonically.
    pub fn new(mut balls: Vec<Ball>, radius_exp: u32) -> Result<BallFamily> {
        for b in &balls {
            if b.radius_exp != radius_exp {
                return Err(Error::BadFieldSpec(
                    "ball family must have a single radius".into(),
                ));
            }
        }
        balls.sort_by(|a, b| a.key().cmp(&b.key()));
        for w in balls.windows(2) {
            if w[0].key() == w[1].key() {
                return Err(Error::BadFieldSpec("duplicate ball in family".into()));
            }
        }
        Ok(BallFamily { radius_exp, balls })
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    /// Subdivide every ball to the finer scale.
    pub fn subdivide_all(&self, lambda2: u32) -> Result<BallFamily> {
        let mut out = Vec::new();
        for b in &self.balls {
            out.extend(b.subdivide(lambda2)?);
        }
        BallFamily::new(out, lambda2)
    }
}
