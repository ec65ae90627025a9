//! Simultaneous avoidance for linearized families: every function of v
//! points that splits as a fixed zero-sum linear part α·x plus a quadratic
//! error |G(x)| ≤ C·Σ|x_j − x_1|² is handled by one construction at once.
//!
//! The machinery has three layers. `refine_pair` shrinks a disjoint pair of
//! balls so that one assignment pattern of coordinates to sides keeps α·x
//! away from zero; `refine_all_subsets` sweeps that over every proper
//! nonempty pattern; `build_simul_set` iterates the sweep down a binary
//! doubling tree whose leaf tuples then separate every mixed pattern by an
//! exactly tracked power of q, large enough to dominate the quadratic error.
//!
//! All scales are uniformizer-digit exponents and every comparison is exact
//! — the feasibility and dominance inequalities are decided over the
//! rationals, never in floating point.

use crate::engine::serialize as ser;
use crate::error::Error;
use crate::field::{Ball, Element, Field};
use crate::Result;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed};
use std::fmt::Write as _;

/// Scale α so its largest component becomes a unit: divide every
/// coefficient by the first component of minimal valuation. The avoidance
/// conditions and all separation claims are scale-invariant, and a unit
/// component makes the image-ball radius bounds tight.
fn normalized_alpha(field: &Field, alpha: &[Element]) -> Result<Vec<Element>> {
    if alpha.len() < 2 {
        return Err(Error::Infeasible(
            "a linear form needs at least two coefficients".into(),
        ));
    }
    if alpha.len() > 24 {
        return Err(Error::TooLarge(
            "subset sweeps over more than 24 coordinates are not supported".into(),
        ));
    }
    let mut lead: Option<(u32, usize)> = None;
    for (j, a) in alpha.iter().enumerate() {
        if let Some(w) = field.valuation(a).finite() {
            if lead.map_or(true, |(m, _)| w < m) {
                lead = Some((w, j));
            }
        }
    }
    let Some((m, j0)) = lead else {
        return Err(Error::Indeterminate(
            "every coefficient of the linear form vanishes at working precision".into(),
        ));
    };
    let unit = field.shift_down_uniformizer(&alpha[j0], m)?;
    let unit_inv = field.inv_unit(&unit)?;
    alpha
        .iter()
        .map(|a| Ok(field.mul(&field.shift_down_uniformizer(a, m)?, &unit_inv)))
        .collect()
}

/// Both avoidance conditions at working precision: the coefficients sum to
/// zero, and no proper nonempty partial sum vanishes.
///
/// "At precision" cuts both ways. A total with finite valuation certifiably
/// misses zero, so the zero-sum condition fails; a proper partial sum whose
/// digits all vanish is zero as far as precision N can see, so the
/// nonvanishing condition fails. The refinement operators, which must turn
/// partial sums into scaling exponents, report the vanishing case as
/// indeterminate instead — here it is simply a failed condition.
pub fn check_alpha(field: &Field, alpha: &[Element]) -> Result<bool> {
    let alpha = normalized_alpha(field, alpha)?;
    let mut total = field.zero();
    for a in &alpha {
        total = field.add(&total, a);
    }
    if field.valuation(&total).finite().is_some() {
        return Ok(false);
    }
    let full: u32 = (1u32 << alpha.len()) - 1;
    for mask in 1..full {
        let mut sum = field.zero();
        for (j, a) in alpha.iter().enumerate() {
            if mask & (1 << j) != 0 {
                sum = field.add(&sum, a);
            }
        }
        if field.valuation(&sum).finite().is_none() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Like [`check_alpha`], but pinpoints which condition fails so callers can
/// report it. Ok(()) means both conditions hold at working precision.
pub fn diagnose_alpha(field: &Field, alpha: &[Element]) -> Result<()> {
    let alpha = normalized_alpha(field, alpha)?;
    let mut total = field.zero();
    for a in &alpha {
        total = field.add(&total, a);
    }
    if let Some(u) = field.valuation(&total).finite() {
        return Err(Error::Infeasible(format!(
            "the zero-sum condition fails: the coefficients sum to a value of \
             valuation {u}, visibly nonzero at working precision"
        )));
    }
    let full: u32 = (1u32 << alpha.len()) - 1;
    for mask in 1..full {
        let mut sum = field.zero();
        for (j, a) in alpha.iter().enumerate() {
            if mask & (1 << j) != 0 {
                sum = field.add(&sum, a);
            }
        }
        if field.valuation(&sum).finite().is_none() {
            return Err(Error::Infeasible(format!(
                "the nonvanishing condition fails: the partial sum over \
                 subset mask {mask} vanishes at working precision"
            )));
        }
    }
    Ok(())
}

/// Valuation of the partial sum complementary to `mask`; the subset's
/// scaling constant is q^{-(1 + this)}.
fn complement_exponent(field: &Field, alpha: &[Element], mask: u32) -> Result<u32> {
    let mut s = field.zero();
    for (j, a) in alpha.iter().enumerate() {
        if mask & (1 << j) == 0 {
            s = field.add(&s, a);
        }
    }
    match field.valuation(&s).finite() {
        Some(a) => Ok(a),
        None => Err(Error::Indeterminate(format!(
            "the scaling constant for subset mask {mask} is indeterminate: the \
             complementary partial sum vanishes at working precision"
        ))),
    }
}

/// Complement-sum valuations for all proper nonempty subsets, in increasing
/// mask order (coordinate j is bit j).
pub fn subset_exponents(field: &Field, alpha: &[Element]) -> Result<Vec<u32>> {
    let alpha = normalized_alpha(field, alpha)?;
    let full: u32 = (1u32 << alpha.len()) - 1;
    (1..full)
        .map(|mask| complement_exponent(field, &alpha, mask))
        .collect()
}

/// Exponent of the composed per-level contraction: one digit for the
/// binary split plus (1 + a) digits for each proper nonempty subset, where
/// q^{-a} is the absolute value of the subset's complementary partial sum.
pub fn c_star_exp(field: &Field, alpha: &[Element]) -> Result<u32> {
    let exps = subset_exponents(field, alpha)?;
    Ok(1 + exps.iter().map(|a| 1 + a).sum::<u32>())
}

/// One pattern-avoiding shrink of a disjoint pair.
#[derive(Debug, Clone)]
pub struct PairRefinement {
    /// Refined first ball (the subset side of the pattern).
    pub b1: Ball,
    /// Refined second ball (the complement side), possibly translated.
    pub b2: Ball,
    /// Whether the complement side had to move to escape zero.
    pub translated: bool,
    /// Exact valuation of α·x for every tuple following the pattern.
    pub separation_exp: u32,
}

fn validate_pair(field: &Field, b1: &Ball, b2: &Ball) -> Result<()> {
    if !field.compatible(b1.field()) || !field.compatible(b2.field()) {
        return Err(Error::FieldMismatch(
            "the balls live in a different field than the form".into(),
        ));
    }
    if b1.dimension() != 1 || b2.dimension() != 1 {
        return Err(Error::Infeasible(
            "pair refinement works on one-dimensional balls".into(),
        ));
    }
    if b1.radius_exp != b2.radius_exp {
        return Err(Error::Infeasible(
            "the two balls must share one radius".into(),
        ));
    }
    let gap = field.sub(&b1.center[0], &b2.center[0]);
    match field.valuation(&gap).finite() {
        Some(d) if d < b1.radius_exp => Ok(()),
        _ => Err(Error::Infeasible("the two balls must be disjoint".into())),
    }
}

/// α·x for the tuple that reads coordinate j from `c1` when bit j of
/// `mask` is set and from `c2` otherwise.
fn pattern_value(
    field: &Field,
    alpha: &[Element],
    c1: &Element,
    c2: &Element,
    mask: u32,
) -> Element {
    let mut w = field.zero();
    for (j, a) in alpha.iter().enumerate() {
        let c = if mask & (1 << j) != 0 { c1 } else { c2 };
        w = field.add(&w, &field.mul(a, c));
    }
    w
}

/// Shrink a disjoint equal-radius pair so that the assignment pattern
/// `mask` (those coordinates in the first ball, the rest in the second)
/// keeps α·x at least q^{-(λ + 1 + a)} in absolute value, where q^{-a} is
/// the absolute value of the complementary partial sum.
///
/// Both refined balls keep their centers; if the image ball of the pattern
/// contains zero, the complement side is translated by uniformizer^λ. A
/// translation must displace the image center by a value of valuation
/// strictly below the refined radius exponent — in digit balls, shifting
/// the zero ball by an element of valuation equal to its own radius
/// exponent lands inside the same ball — and it must stay inside the
/// original second ball, which pins the shift's valuation at exactly λ.
pub fn refine_pair(
    field: &Field,
    alpha: &[Element],
    b1: &Ball,
    b2: &Ball,
    mask: u32,
) -> Result<PairRefinement> {
    let alpha = normalized_alpha(field, alpha)?;
    refine_pair_normalized(field, &alpha, b1, b2, mask)
}

fn refine_pair_normalized(
    field: &Field,
    alpha: &[Element],
    b1: &Ball,
    b2: &Ball,
    mask: u32,
) -> Result<PairRefinement> {
    validate_pair(field, b1, b2)?;
    let full: u32 = (1u32 << alpha.len()) - 1;
    if mask == 0 || mask >= full {
        return Err(Error::Infeasible(
            "the assignment pattern must be a proper nonempty subset".into(),
        ));
    }
    let lambda = b1.radius_exp;
    let a = complement_exponent(field, alpha, mask)?;
    let fine = lambda + 1 + a;
    if fine > field.precision() {
        return Err(Error::PrecisionExhausted(format!(
            "refining to radius exponent {fine} exceeds precision {}",
            field.precision()
        )));
    }
    let keep1 = Ball::of(&[b1.center[0].clone()], fine);
    let keep2 = Ball::of(&[b2.center[0].clone()], fine);
    // Every tuple following the pattern evaluates to the center value plus
    // a variation of valuation ≥ fine, so the pattern's image is exactly
    // the radius-q^{-fine} ball around w.
    let w = pattern_value(field, alpha, &keep1.center[0], &keep2.center[0], mask);
    if let Some(aw) = field.valuation(&w).finite() {
        if aw < fine {
            return Ok(PairRefinement {
                b1: keep1,
                b2: keep2,
                translated: false,
                separation_exp: aw,
            });
        }
    }
    // The image ball contains zero: move the complement side by
    // uniformizer^λ. The image center then moves by exactly valuation
    // λ + a = fine − 1, one digit clear of the radius, so the new image
    // ball certifiably misses zero.
    let shift = field.pow(&field.uniformizer(), lambda as u64);
    let moved = Ball::of(&[field.add(&keep2.center[0], &shift)], fine);
    let w2 = pattern_value(field, alpha, &keep1.center[0], &moved.center[0], mask);
    match field.valuation(&w2).finite() {
        Some(aw2) if aw2 < fine => Ok(PairRefinement {
            b1: keep1,
            b2: moved,
            translated: true,
            separation_exp: aw2,
        }),
        _ => Err(Error::Indeterminate(
            "the translated pattern could not be certified away from zero".into(),
        )),
    }
}

/// The full subset sweep over one pair.
#[derive(Debug, Clone)]
pub struct SubsetSweep {
    /// Final first ball, contained in every intermediate first ball.
    pub b1: Ball,
    /// Final second ball, contained in every intermediate second ball.
    pub b2: Ball,
    /// Largest per-pattern valuation: every mixed tuple drawn from the
    /// final pair satisfies |α·x| ≥ q^{-separation_exp}.
    pub separation_exp: u32,
    /// The per-subset refinements in increasing mask order.
    pub steps: Vec<PairRefinement>,
}

/// Iterate `refine_pair` over all 2^v − 2 proper nonempty assignment
/// patterns in increasing mask order. Later steps only shrink (or shift
/// within) the balls of earlier steps, so each pattern's separation
/// guarantee survives to the final pair: a tuple drawn from the final
/// balls with pattern mask m has α·x of valuation exactly the mask-m
/// step's separation exponent.
pub fn refine_all_subsets(
    field: &Field,
    alpha: &[Element],
    b1: &Ball,
    b2: &Ball,
) -> Result<SubsetSweep> {
    let alpha = normalized_alpha(field, alpha)?;
    sweep_normalized(field, &alpha, b1, b2)
}

fn sweep_normalized(
    field: &Field,
    alpha: &[Element],
    b1: &Ball,
    b2: &Ball,
) -> Result<SubsetSweep> {
    let full: u32 = (1u32 << alpha.len()) - 1;
    let mut cur1 = b1.clone();
    let mut cur2 = b2.clone();
    let mut steps = Vec::with_capacity(full as usize - 1);
    let mut separation_exp = 0;
    for mask in 1..full {
        let step = refine_pair_normalized(field, alpha, &cur1, &cur2, mask)?;
        cur1 = step.b1.clone();
        cur2 = step.b2.clone();
        separation_exp = separation_exp.max(step.separation_exp);
        steps.push(step);
    }
    Ok(SubsetSweep {
        b1: cur1,
        b2: cur2,
        separation_exp,
        steps,
    })
}

/// The binary doubling tree: 2^j balls at depth j, radius exponent
/// λ0 + j·cstar, every mixed tuple of points separated by the depth of its
/// deepest common ancestor.
#[derive(Debug, Clone)]
pub struct SimulSet {
    field: Field,
    alpha: Vec<Element>,
    c: BigRational,
    lambda0: u32,
    c_star: u32,
    levels: Vec<Vec<Ball>>,
}

/// Separation audit of one tree.
#[derive(Debug, Clone)]
pub struct SimulReport {
    /// One row per depth 1..=J.
    pub rows: Vec<SimulRow>,
    /// Human-readable descriptions of failed tuples (empty on success).
    pub violations: Vec<String>,
}

/// Exhaustive-check summary for one depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulRow {
    pub depth: u32,
    /// Radius exponent of the depth's balls: λ0 + depth·cstar.
    pub radius_exp: u32,
    /// Claimed separation: mixed tuples satisfy |α·x| ≥ q^{-this}.
    pub separation_exp: u32,
    /// Leaf tuples not contained in a single ball of this depth.
    pub tuples_checked: u64,
}

/// q^exp as an exact rational.
fn q_power(q: u64, exp: i64) -> BigRational {
    let base = BigInt::from(q).pow(exp.unsigned_abs() as u32);
    if exp >= 0 {
        BigRational::from_integer(base)
    } else {
        BigRational::new(BigInt::one(), base)
    }
}

/// Smallest starting radius exponent that satisfies the feasibility gate
/// C·v·q^{-λ0} < q^{-3·cstar}, i.e. the first λ0 a doubling tree for this
/// form can start from.
pub fn minimal_feasible_lambda0(field: &Field, alpha: &[Element], c: &BigRational) -> Result<u32> {
    if alpha.len() < 3 {
        return Err(Error::Infeasible(
            "simultaneous avoidance needs at least three coordinates".into(),
        ));
    }
    if !c.is_positive() {
        return Err(Error::Infeasible(
            "the quadratic-error constant must be positive".into(),
        ));
    }
    let alpha = normalized_alpha(field, alpha)?;
    diagnose_alpha(field, &alpha)?;
    let c_star = c_star_exp(field, &alpha)?;
    let cv = c * BigRational::from_integer(BigInt::from(alpha.len() as u64));
    for lambda0 in 0..=field.precision() {
        if cv < q_power(field.q(), lambda0 as i64 - 3 * c_star as i64) {
            return Ok(lambda0);
        }
    }
    Err(Error::PrecisionExhausted(format!(
        "no feasible lambda0 up to precision {}: C·v = {cv} needs \
         q^(lambda0 - {}) to exceed it",
        field.precision(),
        3 * c_star
    )))
}

/// Grow the doubling tree to the requested depth.
///
/// Requires the zero-sum and nonvanishing-partial-sum conditions, a
/// positive quadratic-error constant C with C·v·q^{-λ0} < q^{-3·cstar}
/// (the scale at which the linear part starts to dominate), and enough
/// precision to hold the leaf radius λ0 + depth·cstar. The quadratic
/// dominance inequality C·v·q^{-cstar·(2j−2)−2λ0} < q^{-cstar·j−λ0} is
/// asserted for every depth j as an exact rational comparison.
pub fn build_simul_set(
    field: &Field,
    alpha: &[Element],
    c: &BigRational,
    lambda0: u32,
    depth: u32,
) -> Result<SimulSet> {
    if alpha.len() < 3 {
        return Err(Error::Infeasible(
            "simultaneous avoidance needs at least three coordinates".into(),
        ));
    }
    if !c.is_positive() {
        return Err(Error::Infeasible(
            "the quadratic-error constant must be positive".into(),
        ));
    }
    let alpha = normalized_alpha(field, alpha)?;
    diagnose_alpha(field, &alpha)?;
    let c_star = c_star_exp(field, &alpha)?;
    let cv = c * BigRational::from_integer(BigInt::from(alpha.len() as u64));
    let gate = q_power(field.q(), lambda0 as i64 - 3 * c_star as i64);
    if cv >= gate {
        return Err(Error::Infeasible(format!(
            "lambda0 = {lambda0} is infeasible: C·v = {cv} is not below \
             q^(lambda0 - 3·cstar) = {gate}"
        )));
    }
    for j in 1..=depth as i64 {
        let bound = q_power(field.q(), (j - 2) * c_star as i64 + lambda0 as i64);
        if cv >= bound {
            return Err(Error::Infeasible(format!(
                "quadratic dominance fails at depth {j}: C·v = {cv} is not \
                 below q^((j-2)·cstar + lambda0) = {bound}"
            )));
        }
    }
    let leaf_exp = lambda0 as u64 + depth as u64 * c_star as u64;
    if leaf_exp > field.precision() as u64 {
        return Err(Error::PrecisionExhausted(format!(
            "depth {depth} needs radius exponent {leaf_exp}, beyond precision {}",
            field.precision()
        )));
    }
    let mut levels = vec![vec![Ball::of(&[field.zero()], lambda0)]];
    for j in 0..depth {
        let cur_lambda = lambda0 + j * c_star;
        let split = field.pow(&field.uniformizer(), cur_lambda as u64);
        let mut next = Vec::with_capacity(levels[j as usize].len() * 2);
        for ball in &levels[j as usize] {
            // The lexicographically first two children: digits 0 and 1 at
            // the splitting position.
            let c1 = ball.center[0].clone();
            let c2 = field.add(&c1, &split);
            let child1 = Ball::of(&[c1], cur_lambda + 1);
            let child2 = Ball::of(&[c2], cur_lambda + 1);
            let sweep = sweep_normalized(field, &alpha, &child1, &child2)?;
            debug_assert_eq!(sweep.b1.radius_exp, cur_lambda + c_star);
            next.push(sweep.b1);
            next.push(sweep.b2);
        }
        levels.push(next);
    }
    Ok(SimulSet {
        field: field.clone(),
        alpha,
        c: c.clone(),
        lambda0,
        c_star,
        levels,
    })
}

impl SimulSet {
    pub fn field(&self) -> &Field {
        &self.field
    }

    /// The normalized linear coefficients.
    pub fn alpha(&self) -> &[Element] {
        &self.alpha
    }

    pub fn lambda0(&self) -> u32 {
        self.lambda0
    }

    /// Exponent of the per-depth contraction factor.
    pub fn c_star(&self) -> u32 {
        self.c_star
    }

    /// Ball lists per depth; level j holds 2^j balls, and the two children
    /// of ball i at level j sit at indices 2i and 2i+1 of level j+1.
    pub fn levels(&self) -> &[Vec<Ball>] {
        &self.levels
    }

    /// Exhaustively verify the separation claim at every depth: for each
    /// tuple of leaf centers not contained in one depth-j ball,
    /// |α·x| ≥ q^{-(λ0 + j·cstar)}.
    ///
    /// A tuple splitting first at depth g+1 (all coordinates share a
    /// depth-g ball but no deeper one) must clear the depth-(g+1) bound;
    /// the bounds at later depths are weaker, so one check per tuple
    /// settles every row it is counted in.
    pub fn verify(&self) -> Result<SimulReport> {
        let depth = self.levels.len() - 1;
        let v = self.alpha.len();
        let leaves = &self.levels[depth];
        let l = leaves.len();
        let tuple_count = (l as u128)
            .checked_pow(v as u32)
            .filter(|&t| t <= 1 << 24)
            .ok_or_else(|| {
                Error::TooLarge("the leaf tuple space exceeds the sweep budget".into())
            })?;
        let prods: Vec<Vec<Element>> = leaves
            .iter()
            .map(|b| {
                self.alpha
                    .iter()
                    .map(|a| self.field.mul(a, &b.center[0]))
                    .collect()
            })
            .collect();
        let mut rows: Vec<SimulRow> = (1..=depth as u32)
            .map(|j| SimulRow {
                depth: j,
                radius_exp: self.lambda0 + j * self.c_star,
                separation_exp: self.lambda0 + j * self.c_star,
                tuples_checked: 0,
            })
            .collect();
        let mut violations = Vec::new();
        let mut idx = vec![0usize; v];
        for _ in 0..tuple_count {
            // Deepest level at which all coordinates share one ball: leaf
            // i descends from ball i >> (depth − t) at level t, so the
            // pairwise xor's bit length reads off the splitting depth.
            let mut g = depth;
            for j in 1..v {
                let x = idx[0] ^ idx[j];
                if x != 0 {
                    let bits = (usize::BITS - x.leading_zeros()) as usize;
                    g = g.min(depth - bits);
                }
            }
            if g < depth {
                for row in &mut rows[g..] {
                    row.tuples_checked += 1;
                }
                let mut w = self.field.zero();
                for (j, i) in idx.iter().enumerate() {
                    w = self.field.add(&w, &prods[*i][j]);
                }
                let bound = self.lambda0 + (g as u32 + 1) * self.c_star;
                let ok = self
                    .field
                    .valuation(&w)
                    .finite()
                    .is_some_and(|a| a <= bound);
                if !ok && violations.len() < 32 {
                    violations.push(format!(
                        "tuple {idx:?} splits at depth {}: |alpha.x| is not \
                         certifiably at least q^-{bound}",
                        g + 1
                    ));
                }
            }
            for j in (0..v).rev() {
                idx[j] += 1;
                if idx[j] < l {
                    break;
                }
                idx[j] = 0;
            }
        }
        // The counts have a closed form: everything except the tuples that
        // sit inside a single depth-j ball.
        for row in &rows {
            let inside = (1u128 << row.depth) * ((l >> row.depth) as u128).pow(v as u32);
            debug_assert_eq!(u128::from(row.tuples_checked), tuple_count - inside);
        }
        Ok(SimulReport { rows, violations })
    }

    /// Structured text rendering of the tree: header, form, per-subset
    /// scaling exponents, then each level's balls with parent links.
    /// Byte-identical across runs with identical inputs.
    pub fn tree_string(&self) -> String {
        let mut out = String::new();
        out.push_str("tree-format 1\n");
        out.push_str(&ser::field_line(&self.field));
        out.push('\n');
        writeln!(
            out,
            "form v={} c={} lambda0={} cstar={} alpha={}",
            self.alpha.len(),
            self.c,
            self.lambda0,
            self.c_star,
            ser::digits(&self.field, &self.alpha, self.field.precision()),
        )
        .unwrap();
        let exps = subset_exponents(&self.field, &self.alpha)
            .expect("subset exponents were finite at build time");
        let full: u32 = (1u32 << self.alpha.len()) - 1;
        for (k, mask) in (1..full).enumerate() {
            writeln!(out, "subset {mask} a={}", exps[k]).unwrap();
        }
        for (j, level) in self.levels.iter().enumerate() {
            let lambda = self.lambda0 + j as u32 * self.c_star;
            writeln!(out, "level {j} lambda={lambda} balls={}", level.len()).unwrap();
            for (i, b) in level.iter().enumerate() {
                let parent = if j == 0 {
                    "-".to_string()
                } else {
                    (i >> 1).to_string()
                };
                writeln!(
                    out,
                    "ball {j}.{i} parent={parent} center={}",
                    ser::digits(&self.field, &b.center, b.radius_exp),
                )
                .unwrap();
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn write_tree<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        out.write_all(self.tree_string().as_bytes())
    }
}

impl SimulReport {
    /// One row per depth plus the violation count; deterministic.
    pub fn render(&self) -> String {
        let mut out = String::from("separation-report 1\n");
        for r in &self.rows {
            writeln!(
                out,
                "depth={} radius_exp={} separation_exp={} tuples={}",
                r.depth, r.radius_exp, r.separation_exp, r.tuples_checked
            )
            .unwrap();
        }
        writeln!(out, "violations={}", self.violations.len()).unwrap();
        for v in &self.violations {
            writeln!(out, "violation {v}").unwrap();
        }
        out.push_str("end\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldSpec;

    fn z5(n: u32) -> Field {
        Field::new(FieldSpec::zp(5, n)).unwrap()
    }

    fn ints(field: &Field, ks: &[i64]) -> Vec<Element> {
        ks.iter().map(|&k| field.from_i64(k)).collect()
    }

    fn dot(field: &Field, alpha: &[Element], xs: &[&Element]) -> Element {
        let mut w = field.zero();
        for (a, x) in alpha.iter().zip(xs) {
            w = field.add(&w, &field.mul(a, x));
        }
        w
    }

    fn one() -> BigRational {
        BigRational::from_integer(BigInt::from(1))
    }

    #[test]
    fn progression_form_passes_with_unit_factors() {
        let k = z5(8);
        let alpha = ints(&k, &[1, -2, 1]);
        assert!(
            check_alpha(&k, &alpha).unwrap(),
            "x1 - 2x2 + x3 meets both conditions"
        );
        assert_eq!(
            subset_exponents(&k, &alpha).unwrap(),
            vec![0; 6],
            "every proper partial sum is a unit"
        );
        assert_eq!(
            c_star_exp(&k, &alpha).unwrap(),
            7,
            "one splitting digit plus one digit per subset"
        );
    }

    #[test]
    fn vanishing_partial_sum_fails_the_check() {
        let k = z5(8);
        let alpha = ints(&k, &[1, -1, 1, -1]);
        assert!(
            !check_alpha(&k, &alpha).unwrap(),
            "the first-two-coordinates pattern sums to zero"
        );
    }

    #[test]
    fn nonzero_total_fails_the_check() {
        let k = z5(8);
        let alpha = ints(&k, &[1, 1, 1]);
        assert!(
            !check_alpha(&k, &alpha).unwrap(),
            "the coefficients do not sum to zero"
        );
    }

    #[test]
    fn indeterminate_scaling_constant_blocks_refinement() {
        let k = z5(8);
        let alpha = ints(&k, &[1, -1, 1, -1]);
        let b1 = Ball::of(&[k.zero()], 1);
        let b2 = Ball::of(&[k.from_i64(1)], 1);
        // Pattern {1,2}: the complementary sum α3 + α4 vanishes, so the
        // subset's scaling constant has no exponent.
        match refine_pair(&k, &alpha, &b1, &b2, 0b0011) {
            Err(Error::Indeterminate(msg)) => {
                assert!(msg.contains("indeterminate"), "got: {msg}")
            }
            other => panic!("expected an indeterminate scaling constant, got {other:?}"),
        }
    }

    #[test]
    fn refinement_validates_its_inputs() {
        let k = z5(8);
        let alpha = ints(&k, &[1, -2, 1]);
        let b1 = Ball::of(&[k.zero()], 1);
        let b2 = Ball::of(&[k.from_i64(1)], 1);
        let coarse = Ball::of(&[k.from_i64(1)], 2);
        assert!(
            refine_pair(&k, &alpha, &b1, &b1.clone(), 0b101).is_err(),
            "identical balls are not disjoint"
        );
        assert!(
            refine_pair(&k, &alpha, &b1, &coarse, 0b101).is_err(),
            "mismatched radii are rejected"
        );
        assert!(
            refine_pair(&k, &alpha, &b1, &b2, 0).is_err(),
            "the empty pattern is rejected"
        );
        assert!(
            refine_pair(&k, &alpha, &b1, &b2, 0b111).is_err(),
            "the full pattern is rejected"
        );
    }

    #[test]
    fn refinement_keeps_a_branch_clear_of_zero() {
        let k = z5(6);
        let alpha = ints(&k, &[1, -2, 1]);
        let b1 = Ball::of(&[k.zero()], 1);
        let b2 = Ball::of(&[k.from_i64(1)], 1);
        let r = refine_pair(&k, &alpha, &b1, &b2, 0b101).unwrap();
        assert!(!r.translated, "the pattern value -2 already avoids zero");
        assert_eq!(
            r.b1.radius_exp, 2,
            "one splitting digit on top of a unit scaling constant"
        );
        assert_eq!(r.separation_exp, 0, "the pattern value is a unit");
        // Digits of α·x below position 3 are fixed by the coordinates'
        // digits below position 3 (carries only move upward), so sweeping
        // the radius-q^{-3} sub-centers decides the bound for every point
        // of the pattern at full precision.
        let side1 = r.b1.subdivide(3).unwrap();
        let side2 = r.b2.subdivide(3).unwrap();
        for x1 in &side1 {
            for x2 in &side2 {
                for x3 in &side1 {
                    let w = dot(
                        &k,
                        &alpha,
                        &[&x1.center[0], &x2.center[0], &x3.center[0]],
                    );
                    assert_eq!(
                        k.valuation(&w).finite(),
                        Some(0),
                        "every pattern tuple keeps absolute value 1"
                    );
                }
            }
        }
    }

    #[test]
    fn refinement_translates_off_the_zero_ball() {
        let k = z5(8);
        // With x2, x3 drawn from the ball at 1 and x1 from the ball at 2,
        // the pattern value is 2 − 1 − 1 = 0: the image ball contains zero
        // and the complement side must move. (Zero-sum forms never reach
        // this branch — their pattern value factors through the center
        // gap, which disjointness keeps large — so the coefficients here
        // deliberately sum to −1.)
        let alpha = ints(&k, &[1, -1, -1]);
        let b1 = Ball::of(&[k.from_i64(1)], 1);
        let b2 = Ball::of(&[k.from_i64(2)], 1);
        let r = refine_pair(&k, &alpha, &b1, &b2, 0b110).unwrap();
        assert!(r.translated, "the untranslated image ball contains zero");
        assert_eq!(r.b1.radius_exp, 2);
        assert_eq!(
            r.separation_exp, 1,
            "the shift moves the image center to valuation lambda + a = 1"
        );
        assert_eq!(
            r.b2.center[0].key(),
            k.from_i64(7).key(),
            "the center moved by uniformizer^1"
        );
        assert!(
            b2.contains(&r.b2.center),
            "the translated branch stays inside its parent"
        );
        let side1 = r.b1.subdivide(3).unwrap();
        let side2 = r.b2.subdivide(3).unwrap();
        for x1 in &side2 {
            for x2 in &side1 {
                for x3 in &side1 {
                    let w = dot(
                        &k,
                        &alpha,
                        &[&x1.center[0], &x2.center[0], &x3.center[0]],
                    );
                    assert_eq!(
                        k.valuation(&w).finite(),
                        Some(1),
                        "every translated-pattern tuple sits exactly at q^-1"
                    );
                }
            }
        }
    }

    #[test]
    fn subset_sweep_separates_every_mixed_pattern() {
        let k = z5(10);
        let alpha = ints(&k, &[1, -2, 1]);
        let b1 = Ball::of(&[k.zero()], 1);
        let b2 = Ball::of(&[k.from_i64(1)], 1);
        let sweep = refine_all_subsets(&k, &alpha, &b1, &b2).unwrap();
        assert_eq!(sweep.steps.len(), 6, "2^3 - 2 proper patterns");
        assert_eq!(
            sweep.b1.radius_exp, 7,
            "six unit scaling factors on top of the split"
        );
        assert_eq!(
            sweep.separation_exp, 0,
            "every pattern value here is a unit"
        );
        assert!(
            sweep.steps.iter().all(|s| !s.translated),
            "zero-sum forms never need the shift"
        );
        let side1 = sweep.b1.subdivide(8).unwrap();
        let side2 = sweep.b2.subdivide(8).unwrap();
        for mask in 1u32..7 {
            for i in 0..side1.len() {
                for j in 0..side1.len() {
                    for l in 0..side1.len() {
                        let pick = |coord: usize, t: usize| {
                            if mask & (1 << coord) != 0 {
                                &side1[t]
                            } else {
                                &side2[t]
                            }
                        };
                        let w = dot(
                            &k,
                            &alpha,
                            &[
                                &pick(0, i).center[0],
                                &pick(1, j).center[0],
                                &pick(2, l).center[0],
                            ],
                        );
                        assert_eq!(
                            k.valuation(&w).finite(),
                            Some(0),
                            "pattern {mask} stays a unit away from zero"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn deeper_scaling_factors_stretch_the_radius() {
        let k = z5(12);
        let alpha = ints(&k, &[1, -6, 5]);
        assert!(check_alpha(&k, &alpha).unwrap());
        assert_eq!(
            subset_exponents(&k, &alpha).unwrap(),
            vec![0, 0, 1, 1, 0, 0],
            "the patterns facing a divisible complement scale one digit deeper"
        );
        assert_eq!(c_star_exp(&k, &alpha).unwrap(), 9);
        let b1 = Ball::of(&[k.zero()], 1);
        let b2 = Ball::of(&[k.from_i64(1)], 1);
        let sweep = refine_all_subsets(&k, &alpha, &b1, &b2).unwrap();
        assert_eq!(
            sweep.b1.radius_exp, 9,
            "the radius shrinks by the product of per-subset factors"
        );
        assert_eq!(
            sweep.separation_exp, 1,
            "the weakest pattern value sits one digit deep"
        );
    }

    #[test]
    fn depth_zero_tree_is_a_single_ball() {
        let k = z5(30);
        let alpha = ints(&k, &[1, -2, 1]);
        let tree = build_simul_set(&k, &alpha, &one(), 22, 0).unwrap();
        assert_eq!(tree.levels().len(), 1);
        assert_eq!(tree.levels()[0].len(), 1);
        assert_eq!(tree.levels()[0][0].radius_exp, 22);
        let report = tree.verify().unwrap();
        assert!(report.rows.is_empty(), "no depth to audit");
        assert!(report.violations.is_empty());
    }

    #[test]
    fn doubling_tree_certifies_every_depth() {
        let k = z5(40);
        let alpha = ints(&k, &[1, -2, 1]);
        let tree = build_simul_set(&k, &alpha, &one(), 22, 2).unwrap();
        let sizes: Vec<usize> = tree.levels().iter().map(|l| l.len()).collect();
        assert_eq!(sizes, vec![1, 2, 4], "the ball count doubles per depth");
        let exps: Vec<u32> = tree.levels().iter().map(|l| l[0].radius_exp).collect();
        assert_eq!(
            exps,
            vec![22, 29, 36],
            "each depth contracts by the composed exponent"
        );
        let report = tree.verify().unwrap();
        assert!(
            report.violations.is_empty(),
            "no mixed tuple falls below its separation bound: {:?}",
            report.violations
        );
        let summary: Vec<(u32, u32, u64)> = report
            .rows
            .iter()
            .map(|r| (r.depth, r.separation_exp, r.tuples_checked))
            .collect();
        assert_eq!(
            summary,
            vec![(1, 29, 48), (2, 36, 60)],
            "tuple counts match the closed form"
        );
    }

    #[test]
    fn infeasible_scale_is_rejected() {
        let k = z5(40);
        let alpha = ints(&k, &[1, -2, 1]);
        // C·v = 3 against q^(21 − 21) = 1: the linear part cannot yet
        // dominate at lambda0 = 21.
        match build_simul_set(&k, &alpha, &one(), 21, 2) {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("infeasible"), "got: {msg}"),
            other => panic!("expected infeasibility at lambda0 = 21, got {other:?}"),
        }
    }

    #[test]
    fn minimal_feasible_scale_clears_the_gate() {
        let k = z5(40);
        let alpha = ints(&k, &[1, -2, 1]);
        // cstar = 7, so the gate reads 3 < 5^(lambda0 − 21): first cleared
        // at lambda0 = 22.
        assert_eq!(minimal_feasible_lambda0(&k, &alpha, &one()).unwrap(), 22);
        build_simul_set(&k, &alpha, &one(), 22, 1).unwrap();
    }

    #[test]
    fn diagnosis_names_the_failed_condition() {
        let k = z5(12);
        match diagnose_alpha(&k, &ints(&k, &[1, 1, 1])) {
            Err(Error::Infeasible(msg)) => {
                assert!(msg.contains("zero-sum condition"), "got: {msg}")
            }
            other => panic!("expected a zero-sum failure, got {other:?}"),
        }
        match diagnose_alpha(&k, &ints(&k, &[1, -1, 1, -1])) {
            Err(Error::Infeasible(msg)) => {
                assert!(msg.contains("nonvanishing condition"), "got: {msg}")
            }
            other => panic!("expected a partial-sum failure, got {other:?}"),
        }
        diagnose_alpha(&k, &ints(&k, &[1, -2, 1])).unwrap();
    }

    #[test]
    fn exhausted_precision_is_reported() {
        let k = z5(40);
        let alpha = ints(&k, &[1, -2, 1]);
        // Depth 3 needs radius exponent 22 + 3·7 = 43 > 40.
        match build_simul_set(&k, &alpha, &one(), 22, 3) {
            Err(Error::PrecisionExhausted(_)) => {}
            other => panic!("expected precision exhaustion at depth 3, got {other:?}"),
        }
    }

    #[test]
    fn identical_builds_render_identical_bytes() {
        let k = z5(40);
        let alpha = ints(&k, &[1, -2, 1]);
        let t1 = build_simul_set(&k, &alpha, &one(), 22, 2).unwrap();
        let t2 = build_simul_set(&k, &alpha, &one(), 22, 2).unwrap();
        assert_eq!(t1.tree_string(), t2.tree_string());
        assert_eq!(
            t1.verify().unwrap().render(),
            t2.verify().unwrap().render()
        );
    }

    #[test]
    fn tree_rendering_walks_levels_with_parents() {
        let k = z5(40);
        let alpha = ints(&k, &[1, -2, 1]);
        let tree = build_simul_set(&k, &alpha, &one(), 22, 2).unwrap();
        let text = tree.tree_string();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "tree-format 1");
        assert!(lines[1].starts_with("field characteristic=0 p=5"));
        assert!(lines
            .iter()
            .any(|l| l.starts_with("form v=3 c=1 lambda0=22 cstar=7")));
        assert!(lines.contains(&"level 0 lambda=22 balls=1"));
        assert!(lines.contains(&"level 2 lambda=36 balls=4"));
        assert!(lines.iter().any(|l| l.starts_with("ball 2.3 parent=1 ")));
        assert_eq!(*lines.last().unwrap(), "end");
        let report = tree.verify().unwrap().render();
        assert!(report.starts_with(
            "separation-report 1\ndepth=1 radius_exp=29 separation_exp=29 tuples=48\n"
        ));
        assert!(report.contains("violations=0"));
    }
}
