//! Integer polynomials in v vector variables and the single-scale
//! polynomial-configuration avoider.
//!
//! A polynomial here has coefficients ±m with m a finite-height ring
//! element; evaluation splits into a positive and a negative partial sum of
//! controlled height, which is what powers the perturbation argument: after
//! translating the last coordinate by a small δ, the value cannot fall back
//! to zero, giving sub-ball families on which |p| is bounded below.

use crate::error::Error;
use crate::exec;
use crate::field::{Ball, BallFamily, Char, Element, Field, Val, MAX_ENUM};
use crate::height::height;
use crate::Result;

/// One term: coefficient ±magnitude times the monomial with the given
/// exponent tuple over the n·v flattened scalar coordinates.
#[derive(Debug, Clone)]
pub struct Term {
    pub exps: Vec<u32>,
    pub negated: bool,
    pub magnitude: Element,
}

/// Polynomial in v variables each ranging over R^n, with finite-height
/// coefficients.
#[derive(Debug, Clone)]
pub struct IntPolynomial {
    field: Field,
    n: usize,
    v: usize,
    terms: Vec<Term>,
    degree: u32,
    coeff_height_bound: u32,
}

impl IntPolynomial {
    pub fn new(field: &Field, n: usize, v: usize, mut terms: Vec<Term>) -> Result<IntPolynomial> {
        if n == 0 || v == 0 {
            return Err(Error::Parse("need n ≥ 1 and v ≥ 1".into()));
        }
        for t in &terms {
            if t.exps.len() != n * v {
                return Err(Error::Parse(format!(
                    "exponent tuple must have {} entries",
                    n * v
                )));
            }
            if t.magnitude.is_zero() {
                return Err(Error::Parse("zero coefficient term".into()));
            }
        }
        terms.sort_by(|a, b| a.exps.cmp(&b.exps));
        for w in terms.windows(2) {
            if w[0].exps == w[1].exps {
                return Err(Error::Parse("duplicate exponent tuple".into()));
            }
        }
        let degree = terms
            .iter()
            .map(|t| t.exps.iter().sum::<u32>())
            .max()
            .unwrap_or(0);
        let coeff_height_bound = terms.iter().map(|t| height(&t.magnitude)).max().unwrap_or(0);
        Ok(IntPolynomial {
            field: field.clone(),
            n,
            v,
            terms,
            degree,
            coeff_height_bound,
        })
    }

    /// Convenience: integer coefficients keyed by exponent tuples.
    pub fn from_int_coeffs(
        field: &Field,
        n: usize,
        v: usize,
        entries: &[(Vec<u32>, i64)],
    ) -> Result<IntPolynomial> {
        let terms = entries
            .iter()
            .map(|(exps, c)| {
                if *c == 0 {
                    return Err(Error::Parse("zero coefficient term".into()));
                }
                Ok(Term {
                    exps: exps.clone(),
                    negated: *c < 0,
                    magnitude: field.from_i64(c.abs()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        IntPolynomial::new(field, n, v, terms)
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// b: the maximum coefficient-magnitude height.
    pub fn coeff_height_bound(&self) -> u32 {
        self.coeff_height_bound
    }

    /// s = binom(d + nv, nv), the dimension of the space of degree-≤d
    /// polynomials in nv variables.
    pub fn monomial_count_bound(&self) -> u64 {
        binomial(self.degree as u64 + (self.n * self.v) as u64, (self.n * self.v) as u64)
    }

    /// Evaluate at a flattened point (n·v scalar coordinates).
    pub fn eval_flat(&self, xs: &[Element]) -> Element {
        assert_eq!(xs.len(), self.n * self.v, "wrong point dimension");
        let (g, h) = self.eval_split(xs);
        self.field.sub(&g, &h)
    }

    /// Evaluate at a v-tuple of n-dimensional points.
    pub fn eval(&self, point: &[Vec<Element>]) -> Element {
        assert_eq!(point.len(), self.v, "wrong arity");
        let xs: Vec<Element> = point.iter().flat_map(|p| p.iter().cloned()).collect();
        self.eval_flat(&xs)
    }

    /// The positive and negative partial sums (G, H) with value G − H.
    /// At height-≤h arguments both sides have height ≤ b + d·h + C + s,
    /// which is the structural fact behind the avoidance bound.
    pub fn eval_split(&self, xs: &[Element]) -> (Element, Element) {
        let mut g = self.field.zero();
        let mut h = self.field.zero();
        for t in &self.terms {
            let mut m = t.magnitude.clone();
            for (i, &e) in t.exps.iter().enumerate() {
                if e > 0 {
                    m = self.field.mul(&m, &self.field.pow(&xs[i], e as u64));
                }
            }
            if t.negated {
                h = self.field.add(&h, &m);
            } else {
                g = self.field.add(&g, &m);
            }
        }
        (g, h)
    }

    /// Formal partial derivative with respect to one flattened scalar
    /// coordinate.
    pub fn partial_derivative(&self, coord: usize) -> IntPolynomial {
        assert!(coord < self.n * self.v, "coordinate out of range");
        let mut terms = Vec::new();
        for t in &self.terms {
            let e = t.exps[coord];
            if e == 0 {
                continue;
            }
            let mut exps = t.exps.clone();
            exps[coord] = e - 1;
            terms.push(Term {
                exps,
                negated: t.negated,
                magnitude: self.field.mul(&t.magnitude, &self.field.from_i64(e as i64)),
            });
        }
        // Multiplying by the exponent can make a magnitude vanish in finite
        // characteristic (e ≡ 0 mod p); drop such terms.
        terms.retain(|t| !t.magnitude.is_zero());
        IntPolynomial::new(&self.field, self.n, self.v, terms)
            .expect("derivative of a valid polynomial")
    }

    /// Is this a constant polynomial? Returns its value if so.
    pub fn constant_value(&self) -> Option<Element> {
        if self.degree == 0 || self.terms.is_empty() {
            let mut acc = self.field.zero();
            for t in &self.terms {
                let signed = if t.negated {
                    self.field.neg(&t.magnitude)
                } else {
                    t.magnitude.clone()
                };
                acc = self.field.add(&acc, &signed);
            }
            Some(acc)
        } else {
            None
        }
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        assert!(acc <= u64::MAX as u128, "binomial overflow");
    }
    acc as u64
}

/// Certified uniform lower bound: |∂p/∂x_coord| ≥ q^{-A} on the product of
/// the given ball families, established by center evaluation plus the
/// 1-Lipschitz bound (integer-coefficient polynomials move values by at
/// most the distance moved), refining balls until every tuple is decided.
pub fn derivative_lower_bound(
    poly: &IntPolynomial,
    coord: usize,
    t: &[BallFamily],
) -> Result<u32> {
    assert_eq!(t.len(), poly.v(), "one family per variable slot");
    let field = poly.field().clone();
    let deriv = poly.partial_derivative(coord);
    // Constant derivative: the bound is global, no sweep needed.
    if let Some(c) = deriv.constant_value() {
        return match field.valuation(&c) {
            Val::Finite(a) => Ok(a),
            Val::AtLeast(_) => Err(Error::VanishingDerivative(
                "the partial derivative is zero through precision".into(),
            )),
        };
    }
    let n = poly.n();
    let mut work: Vec<Vec<Ball>> = vec![vec![]];
    for fam in t {
        let mut next = Vec::new();
        for partial in &work {
            for b in &fam.balls {
                let mut tuple = partial.clone();
                tuple.push(b.clone());
                next.push(tuple);
            }
        }
        work = next;
    }
    let mut best: u32 = 0;
    let mut processed: u128 = 0;
    while let Some(tuple) = work.pop() {
        processed += 1;
        if processed > MAX_ENUM {
            return Err(Error::TooLarge(
                "derivative certification exceeded the enumeration budget".into(),
            ));
        }
        let xs: Vec<Element> = tuple.iter().flat_map(|b| b.center.iter().cloned()).collect();
        debug_assert_eq!(xs.len(), n * poly.v());
        let rho = tuple.iter().map(|b| b.radius_exp).min().unwrap();
        match field.valuation(&deriv.eval_flat(&xs)) {
            Val::Finite(w) if w < rho => {
                // |g| = q^{-w} on the whole tuple: center value dominates
                // every in-ball movement.
                best = best.max(w);
            }
            _ => {
                // Not decided at this scale; refine the coarsest balls.
                if rho >= field.precision() {
                    return Err(Error::VanishingDerivative(format!(
                        "derivative not certifiably nonzero on a ball tuple at precision {}",
                        field.precision()
                    )));
                }
                let mut children: Vec<Vec<Ball>> = vec![vec![]];
                for b in &tuple {
                    let parts: Vec<Ball> = if b.radius_exp == rho {
                        b.subdivide(rho + 1)?
                    } else {
                        vec![b.clone()]
                    };
                    let mut next = Vec::new();
                    for partial in &children {
                        for c in &parts {
                            let mut tup = partial.clone();
                            tup.push(c.clone());
                            next.push(tup);
                        }
                    }
                    children = next;
                }
                work.extend(children);
            }
        }
    }
    Ok(best)
}

/// Certificate for one avoidance step: on S_1 × … × S_v the polynomial
/// satisfies |p| ≥ q^{-lower_bound_exp}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvoidanceCertificate {
    /// Which parent balls (indices into the caller's ball list) the step
    /// covered; 0..v for standalone runs.
    pub covered_tuple: Vec<usize>,
    pub lower_bound_exp: u32,
    pub mu: u32,
    pub nu: u32,
    pub lambda: u32,
    /// h: the height bound of the per-ball representatives.
    pub h: u32,
    /// A: the certified derivative exponent.
    pub deriv_exp: u32,
    /// Valuation of the translation δ applied to the last slot.
    pub delta_val: u32,
    /// True when the constant-polynomial fast path was taken (no
    /// translation, lower bound = |constant|).
    pub constant_path: bool,
}

/// The scale parameters of one avoidance step, all derived from (A, μ, ν)
/// and the polynomial's shape constants.
pub(crate) fn step_scales(
    poly: &IntPolynomial,
    deriv_exp: u32,
    nu: u32,
) -> Result<(u32, u32, u32, u32)> {
    let field = poly.field();
    let e = match field.characteristic() {
        Char::Finite => 1u32,
        Char::Zero => field.e() as u32,
    };
    if nu % e != 0 || nu == 0 {
        return Err(Error::Infeasible(format!(
            "scale ν = {nu} must be a positive multiple of e = {e}"
        )));
    }
    // h: each q^{-ν}-ball holds exactly one element of height ≤ h, which
    // requires ν = e(h+1), i.e. h = ν/e − 1.
    let h = nu / e - 1;
    let b = poly.coeff_height_bound();
    let d = poly.degree();
    let c = d * field.profile().c_mul;
    let s = poly.monomial_count_bound();
    let beta = b as u64 + (d as u64) * (h as u64) + c as u64 + s;
    // λ = 2A + e(β + 1) + 1: one A for the derivative factor in the
    // translation's effect, one A for reading the bound back, plus the
    // strict separation digit. δ sits at λ − A − 1 so the certified value
    // q^{-A}|δ| = q^{-(λ-1)} strictly dominates the in-ball movement q^{-λ}.
    let lambda64 = 2 * deriv_exp as u64 + (e as u64) * (beta + 1) + 1;
    if lambda64 > field.precision() as u64 {
        return Err(Error::PrecisionExhausted(format!(
            "avoidance scale λ = {lambda64} exceeds precision {}",
            field.precision()
        )));
    }
    let lambda = lambda64 as u32;
    let delta_val = lambda - deriv_exp - 1;
    let lower = lambda - 1;
    Ok((h, lambda, delta_val, lower))
}

/// The single-scale avoidance step. Inputs: per-slot ball families at
/// radius q^{-μ}, the polynomial, a certified derivative exponent A for the
/// flattened coordinate `coord` (the slot holding it is the one that gets
/// translated), and the working scale ν. Output: per-slot families of
/// q^{-λ}-balls, one inside each q^{-ν}-ball, plus the certificate.
pub fn avoid_single_scale(
    t: &[BallFamily],
    poly: &IntPolynomial,
    deriv_exp: u32,
    mu: u32,
    nu: u32,
    coord: usize,
) -> Result<(Vec<BallFamily>, AvoidanceCertificate)> {
    let field = poly.field().clone();
    let v = poly.v();
    let n = poly.n();
    assert_eq!(t.len(), v, "one family per variable slot");
    assert!(coord < n * v, "flattened coordinate out of range");
    for fam in t {
        if fam.radius_exp != mu {
            return Err(Error::Infeasible(format!(
                "input family at radius exponent {} but μ = {mu}",
                fam.radius_exp
            )));
        }
    }
    if nu <= mu {
        return Err(Error::Infeasible(format!("need ν > μ, got ν = {nu}, μ = {mu}")));
    }

    // Constant polynomial: nothing to avoid beyond checking the constant is
    // not zero; any selection works and the bound is |constant| itself.
    if let Some(cval) = poly.constant_value() {
        let lower = match field.valuation(&cval) {
            Val::Finite(w) => w,
            Val::AtLeast(_) => {
                return Err(Error::Infeasible(
                    "the zero polynomial vanishes everywhere; nothing can avoid it".into(),
                ));
            }
        };
        let lambda = nu;
        let mut out = Vec::with_capacity(v);
        for fam in t {
            let fine = fam.subdivide_all(nu)?;
            let balls = fine
                .balls
                .into_iter()
                .map(|b| Ball { center: b.center, radius_exp: lambda })
                .collect();
            out.push(BallFamily::new(balls, lambda)?);
        }
        let cert = AvoidanceCertificate {
            covered_tuple: (0..v).collect(),
            lower_bound_exp: lower,
            mu,
            nu,
            lambda,
            h: 0,
            deriv_exp,
            delta_val: 0,
            constant_path: true,
        };
        return Ok((out, cert));
    }

    let (h, lambda, delta_val, lower) = step_scales(poly, deriv_exp, nu)?;
    debug_assert!(delta_val >= nu, "translation must stay inside its ν-ball");
    // δ = uniformizer^{delta_val}: a single digit at position delta_val.
    let delta = field.pow(&field.uniformizer(), delta_val as u64);
    debug_assert_eq!(field.valuation(&delta), Val::Finite(delta_val));

    let slot = coord / n;
    let within = coord % n;
    let mut out = Vec::with_capacity(v);
    for (i, fam) in t.iter().enumerate() {
        let fine = fam.subdivide_all(nu)?;
        let mut balls = Vec::with_capacity(fine.len());
        for b in fine.balls {
            // The center of a ν-ball is reduced mod uniformizer^ν, so it is
            // the unique height-≤h representative of that ball.
            debug_assert!(height(&b.center[0]) <= h || b.center.iter().all(|c| height(c) <= h));
            let mut center = b.center;
            if i == slot {
                center[within] = field.add(&center[within], &delta);
            }
            balls.push(Ball { center, radius_exp: lambda });
        }
        out.push(BallFamily::new(balls, lambda)?);
    }
    let cert = AvoidanceCertificate {
        covered_tuple: (0..v).collect(),
        lower_bound_exp: lower,
        mu,
        nu,
        lambda,
        h,
        deriv_exp,
        delta_val,
        constant_path: false,
    };
    Ok((out, cert))
}

/// Exhaustively verify a certificate: evaluate p at every tuple of selected
/// ball centers and check |p| ≥ q^{-L}. Center evaluation is decisive:
/// in-ball movement changes the value by at most q^{-λ} < q^{-L}. Returns
/// the first violating tuple (by mixed-radix index order) if any.
pub fn verify_avoidance(
    poly: &IntPolynomial,
    s: &[BallFamily],
    cert: &AvoidanceCertificate,
) -> Result<Option<Vec<usize>>> {
    let field = poly.field().clone();
    let sizes: Vec<u64> = s.iter().map(|f| f.len() as u64).collect();
    let total: u128 = sizes.iter().map(|&x| x as u128).product();
    if total > MAX_ENUM {
        return Err(Error::TooLarge(format!(
            "certificate sweep of {total} tuples exceeds the enumeration budget"
        )));
    }
    let total = total as u64;
    let lower = cert.lower_bound_exp;
    let pred = |idx: u64| -> bool {
        let mut rest = idx;
        let mut xs: Vec<Element> = Vec::with_capacity(poly.n() * poly.v());
        for (fam, &size) in s.iter().zip(sizes.iter()) {
            let b = &fam.balls[(rest % size) as usize];
            rest /= size;
            xs.extend(b.center.iter().cloned());
        }
        field.valuation(&poly.eval_flat(&xs)).at_most(lower)
    };
    match exec::first_violation(total, pred) {
        None => Ok(None),
        Some(idx) => {
            let mut rest = idx;
            let mut tuple = Vec::with_capacity(s.len());
            for &size in &sizes {
                tuple.push((rest % size) as usize);
                rest /= size;
            }
            Ok(Some(tuple))
        }
    }
}

/// Structural postcondition: every q^{-ν}-ball of the μ-family meets the
/// selected family in exactly one λ-ball.
pub fn one_ball_per_nu_ball(t_mu: &BallFamily, s: &BallFamily, nu: u32) -> Result<bool> {
    let fine = t_mu.subdivide_all(nu)?;
    if fine.len() != s.len() {
        return Ok(false);
    }
    for nb in &fine.balls {
        let inside = s
            .balls
            .iter()
            .filter(|sb| {
                nb.contains(&sb.center)
            })
            .count();
        if inside != 1 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Parse a polynomial file: header `vars <n> <v>`, then one term per line
/// `e1 e2 … e_{nv} : [-]d0,d1,…` with base-p digits low first.
pub fn parse_polynomial(field: &Field, text: &str) -> Result<IntPolynomial> {
    let mut lines = text
        .lines()
        .map(|l| match l.find('#') {
            Some(i) => &l[..i],
            None => l,
        })
        .map(str::trim)
        .filter(|l| !l.is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty polynomial file".into()))?;
    let mut hp = header.split_whitespace();
    if hp.next() != Some("vars") {
        return Err(Error::Parse("polynomial file must start with `vars <n> <v>`".into()));
    }
    let n: usize = hp
        .next()
        .and_then(|x| x.parse().ok())
        .ok_or_else(|| Error::Parse("bad n in header".into()))?;
    let v: usize = hp
        .next()
        .and_then(|x| x.parse().ok())
        .ok_or_else(|| Error::Parse("bad v in header".into()))?;
    if hp.next().is_some() {
        return Err(Error::Parse("trailing tokens in header".into()))?;
    }
    let mut terms = Vec::new();
    for line in lines {
        let Some((lhs, rhs)) = line.split_once(':') else {
            return Err(Error::Parse(format!("term line without `:`: {line:?}")));
        };
        let exps: Vec<u32> = lhs
            .split_whitespace()
            .map(|x| {
                x.parse()
                    .map_err(|_| Error::Parse(format!("bad exponent {x:?}")))
            })
            .collect::<Result<_>>()?;
        let rhs = rhs.trim();
        let (negated, digits_str) = match rhs.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, rhs),
        };
        let digits: Vec<u32> = digits_str
            .split(',')
            .map(|d| {
                d.trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad digit {d:?}")))
            })
            .collect::<Result<_>>()?;
        let magnitude = field.from_scalar_digits(&digits, false)?;
        terms.push(Term { exps, negated, magnitude });
    }
    IntPolynomial::new(field, n, v, terms)
}

/// Serialize in the file format (canonical digit lists).
pub fn polynomial_to_string(poly: &IntPolynomial) -> String {
    let mut out = format!("vars {} {}\n", poly.n(), poly.v());
    for t in poly.terms() {
        let exps: Vec<String> = t.exps.iter().map(|e| e.to_string()).collect();
        // Trim trailing zero digits for readability; keep at least one.
        let comp = &t.magnitude.comps[0];
        let keep = comp
            .iter()
            .rposition(|&d| d != 0)
            .map_or(1, |i| i + 1);
        let digits: Vec<String> = comp[..keep].iter().map(|d| d.to_string()).collect();
        out.push_str(&format!(
            "{} : {}{}\n",
            exps.join(" "),
            if t.negated { "-" } else { "" },
            digits.join(",")
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldSpec;

    fn ap3(field: &Field) -> IntPolynomial {
        // x1 − 2x2 + x3: the 3-term arithmetic-progression form.
        IntPolynomial::from_int_coeffs(
            field,
            1,
            3,
            &[
                (vec![1, 0, 0], 1),
                (vec![0, 1, 0], -2),
                (vec![0, 0, 1], 1),
            ],
        )
        .unwrap()
    }

    #[test]
    fn evaluation_examples() {
        let k = Field::new(FieldSpec::zp(5, 8)).unwrap();
        let p = ap3(&k);
        let at = |a: i64, b: i64, c: i64| {
            p.eval(&[
                vec![k.from_i64(a)],
                vec![k.from_i64(b)],
                vec![k.from_i64(c)],
            ])
        };
        assert!(at(1, 1, 1).is_zero(), "constant triples are progressions");
        assert_eq!(at(1, 2, 4), k.from_i64(1));
        let k2 = Field::new(FieldSpec::ramified_zp(2, &[-2, 0], 8)).unwrap();
        let prod = IntPolynomial::from_int_coeffs(&k2, 1, 2, &[(vec![1, 1], 1)]).unwrap();
        let t2 = k2.uniformizer();
        let val = prod.eval(&[vec![t2.clone()], vec![t2]]);
        assert_eq!(val, k2.from_i64(2));
        assert_eq!(k2.valuation(&val), Val::Finite(2));
    }

    #[test]
    fn derivative_examples() {
        let k = Field::new(FieldSpec::zp(5, 8)).unwrap();
        let p = ap3(&k);
        let d1 = p.partial_derivative(0);
        assert_eq!(d1.constant_value().unwrap(), k.one());
        let sq = IntPolynomial::from_int_coeffs(&k, 1, 1, &[(vec![2], 1)]).unwrap();
        let dsq = sq.partial_derivative(0);
        assert_eq!(dsq.terms().len(), 1);
        assert_eq!(dsq.terms()[0].exps, vec![1]);
        assert_eq!(dsq.terms()[0].magnitude, k.from_i64(2));
        // d/dx2 (x1·x2 + x2³) = x1 + 3x2².
        let mixed = IntPolynomial::from_int_coeffs(
            &k,
            1,
            2,
            &[(vec![1, 1], 1), (vec![0, 3], 1)],
        )
        .unwrap();
        let dm = mixed.partial_derivative(1);
        let val = dm.eval(&[vec![k.from_i64(7)], vec![k.from_i64(2)]]);
        assert_eq!(val, k.from_i64(7 + 3 * 4));
    }

    #[test]
    fn derivative_drops_p_multiples_in_finite_char() {
        let k = Field::new(FieldSpec::fpt(2, 8)).unwrap();
        // d/dx (x²) = 2x = 0 in characteristic 2.
        let sq = IntPolynomial::from_int_coeffs(&k, 1, 1, &[(vec![2], 1)]).unwrap();
        let d = sq.partial_derivative(0);
        assert!(d.terms().is_empty());
        assert!(d.constant_value().unwrap().is_zero());
    }

    #[test]
    fn derivative_bound_examples() {
        let k5 = Field::new(FieldSpec::zp(5, 8)).unwrap();
        let unit = |k: &Field| {
            BallFamily::new(vec![Ball::of(&[k.zero()], 0)], 0).unwrap()
        };
        let fams = vec![unit(&k5), unit(&k5), unit(&k5)];
        assert_eq!(derivative_lower_bound(&ap3(&k5), 2, &fams).unwrap(), 0);
        let k2 = Field::new(FieldSpec::zp(2, 8)).unwrap();
        let fams2 = vec![unit(&k2), unit(&k2), unit(&k2)];
        assert_eq!(
            derivative_lower_bound(&ap3(&k2), 1, &fams2).unwrap(),
            1,
            "|−2| = 2^{{-1}} in Z_2"
        );
        // ∂/∂x (x²/2 shape): derivative x vanishes at 0 — not certifiable.
        let k3 = Field::new(FieldSpec::zp(3, 6)).unwrap();
        let half_sq = IntPolynomial::from_int_coeffs(&k3, 1, 1, &[(vec![2], 1)]).unwrap();
        let err = derivative_lower_bound(&half_sq, 0, &[unit(&k3)]).unwrap_err();
        assert!(matches!(err, Error::VanishingDerivative(_)));
    }

    #[test]
    fn derivative_bound_refines_across_scales() {
        // p = x³ + 5x over Z_5: derivative 3x² + 5 has no root (val(3x²)
        // is even, val(5) odd) but drops to valuation 1 on the residue 0
        // ball, so certification must refine below the unit scale.
        let k = Field::new(FieldSpec::zp(5, 8)).unwrap();
        let p = IntPolynomial::from_int_coeffs(&k, 1, 1, &[(vec![3], 1), (vec![1], 5)]).unwrap();
        let fam = BallFamily::new(vec![Ball::of(&[k.zero()], 0)], 0).unwrap();
        assert_eq!(derivative_lower_bound(&p, 0, &[fam]).unwrap(), 1);
        // A derivative with an honest root in the domain (2x + 5 vanishes
        // at −5/2 ∈ Z_5) must exhaust refinement and report failure.
        let q = IntPolynomial::from_int_coeffs(&k, 1, 1, &[(vec![2], 1), (vec![1], 5)]).unwrap();
        let unit = BallFamily::new(vec![Ball::of(&[k.zero()], 0)], 0).unwrap();
        assert!(matches!(
            derivative_lower_bound(&q, 0, &[unit]).unwrap_err(),
            Error::VanishingDerivative(_)
        ));
    }

    #[test]
    fn avoidance_step_on_progressions() {
        // Three distinct unit-subdivided balls of Z_5, μ = 1, ν = 2.
        let k = Field::new(FieldSpec::zp(5, 8)).unwrap();
        let p = ap3(&k);
        let unit = Ball::of(&[k.zero()], 0);
        let kids = unit.subdivide(1).unwrap();
        let fam = |i: usize| BallFamily::new(vec![kids[i].clone()], 1).unwrap();
        let t = vec![fam(0), fam(1), fam(2)];
        let a = derivative_lower_bound(&p, 2, &t).unwrap();
        assert_eq!(a, 0);
        let (s, cert) = avoid_single_scale(&t, &p, a, 1, 2, 2).unwrap();
        assert_eq!(cert.lambda, 8, "λ = 2A + e(b + dh + C + s + 1) + 1");
        assert_eq!(cert.lower_bound_exp, 7);
        assert_eq!(cert.delta_val, 7);
        for (ti, si) in t.iter().zip(s.iter()) {
            assert!(one_ball_per_nu_ball(ti, si, 2).unwrap());
        }
        assert_eq!(verify_avoidance(&p, &s, &cert).unwrap(), None);
    }

    #[test]
    fn constant_polynomial_path() {
        let k = Field::new(FieldSpec::zp(5, 8)).unwrap();
        let one = IntPolynomial::from_int_coeffs(&k, 1, 2, &[(vec![0, 0], 1)]).unwrap();
        let unit = BallFamily::new(vec![Ball::of(&[k.zero()], 0)], 0).unwrap();
        let t = vec![unit.clone(), unit];
        let (s, cert) = avoid_single_scale(&t, &one, 0, 0, 1, 0).unwrap();
        assert!(cert.constant_path);
        assert_eq!(cert.lower_bound_exp, 0);
        assert_eq!(verify_avoidance(&one, &s, &cert).unwrap(), None);
        // The zero polynomial is unavoidable and must error.
        let five = IntPolynomial::from_int_coeffs(&k, 1, 2, &[(vec![0, 0], 5)]).unwrap();
        let zero_ish = IntPolynomial::new(&k, 1, 2, vec![]).unwrap();
        let t2 = vec![
            BallFamily::new(vec![Ball::of(&[k.zero()], 0)], 0).unwrap(),
            BallFamily::new(vec![Ball::of(&[k.zero()], 0)], 0).unwrap(),
        ];
        assert!(matches!(
            avoid_single_scale(&t2, &zero_ish, 0, 0, 1, 0).unwrap_err(),
            Error::Infeasible(_)
        ));
        let (_, c5) = avoid_single_scale(&t2, &five, 0, 0, 1, 0).unwrap();
        assert_eq!(c5.lower_bound_exp, 1, "|5| = 5^{{-1}}");
    }

    #[test]
    fn translated_slot_stays_inside_parent() {
        let k = Field::new(FieldSpec::zp(5, 10)).unwrap();
        let p = ap3(&k);
        let unit = Ball::of(&[k.zero()], 0);
        let kids = unit.subdivide(1).unwrap();
        let t: Vec<BallFamily> = (0..3)
            .map(|i| BallFamily::new(vec![kids[i].clone()], 1).unwrap())
            .collect();
        let (s, cert) = avoid_single_scale(&t, &p, 0, 1, 2, 2).unwrap();
        // Every selected ball of the last slot sits inside its ν-ball of T_3.
        let nu_balls = t[2].subdivide_all(cert.nu).unwrap();
        for sb in &s[2].balls {
            let parents = nu_balls
                .balls
                .iter()
                .filter(|nb| nb.contains(&sb.center))
                .count();
            assert_eq!(parents, 1);
        }
        // And the translation actually moved each center off the height
        // grid: original centers have support below ν ≤ δ-position, so the
        // added digit lands cleanly with no carry.
        assert!(s[2]
            .balls
            .iter()
            .all(|b| k.digit(&b.center[0], 0, cert.delta_val) == 1));
        assert!(s[0]
            .balls
            .iter()
            .all(|b| k.digit(&b.center[0], 0, cert.delta_val) == 0));
    }

    #[test]
    fn height_sum_structure() {
        // At height-≤h points, both partial sums stay below
        // b + d·h + C + s (the C_add slack per addition is absorbed by s).
        let k = Field::new(FieldSpec::zp(3, 24)).unwrap();
        let p = ap3(&k);
        let b = p.coeff_height_bound();
        let d = p.degree();
        let c = d * k.profile().c_mul;
        let s = p.monomial_count_bound() as u32;
        let h = 1u32;
        let beta = b + d * h + c + s;
        for x in crate::height::enumerate_height_leq(&k, h).unwrap() {
            for y in crate::height::enumerate_height_leq(&k, h).unwrap() {
                let xs = vec![x.clone(), y.clone(), k.from_i64(1)];
                let (g, hh) = p.eval_split(&xs);
                assert!(height(&g) <= beta);
                assert!(height(&hh) <= beta);
                assert_eq!(k.sub(&g, &hh), p.eval_flat(&xs));
            }
        }
    }

    #[test]
    fn polynomial_file_roundtrip() {
        let k = Field::new(FieldSpec::zp(5, 8)).unwrap();
        let text = "\
# 3-term progression form
vars 1 3
1 0 0 : 1
0 1 0 : -2
0 0 1 : 1
";
        let p = parse_polynomial(&k, text).unwrap();
        assert_eq!(p.degree(), 1);
        assert_eq!(p.terms().len(), 3);
        let out = polynomial_to_string(&p);
        let back = parse_polynomial(&k, &out).unwrap();
        assert_eq!(polynomial_to_string(&back), out);
        // Errors.
        assert!(parse_polynomial(&k, "").is_err());
        assert!(parse_polynomial(&k, "vars 1").is_err());
        assert!(parse_polynomial(&k, "vars 1 2\n1 : 1").is_err(), "wrong arity");
        assert!(
            parse_polynomial(&k, "vars 1 2\n1 0 : 1\n1 0 : 2").is_err(),
            "duplicate term"
        );
        assert!(parse_polynomial(&k, "vars 1 2\n1 0 : 7").is_err(), "digit ≥ p");
    }

    #[test]
    fn monomial_count() {
        let k = Field::new(FieldSpec::zp(5, 8)).unwrap();
        let p = ap3(&k);
        assert_eq!(p.monomial_count_bound(), 4, "binom(1+3, 3)");
        assert_eq!(binomial(10, 5), 252);
        assert_eq!(binomial(4, 0), 1);
    }
}
