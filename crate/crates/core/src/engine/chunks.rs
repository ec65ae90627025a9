//! Compressed ball families. A chunk records a base center, a set of free
//! digit positions per coordinate, and a scale: it stands for every
//! q^{-scale}-ball whose center is the base plus an arbitrary digit choice
//! at the free positions. Untouched regions of the construction tree stay
//! as single chunks across stages instead of exploding into q^k explicit
//! balls, and the selection steps of the avoidance propositions map chunks
//! to chunks (center picks keep the free set; translations add to the
//! base), so whole trees stay a short chunk list.
//!
//! Canonical form: the base has digit 0 at every free position, every free
//! position is below the scale, and base centers are reduced modulo
//! uniformizer^scale. A position here is a uniformizer level u; it carries
//! q = p^f digit combinations (one digit per residue-component row),
//! encoded as a single value in [0, q) in base p.

use std::collections::BTreeSet;

use crate::error::Error;
use crate::field::{Ball, Element, Field, MAX_ENUM};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub base: Vec<Element>,
    pub free: Vec<BTreeSet<u32>>,
    pub scale: u32,
}

impl Chunk {
    /// A single ball as a chunk (no free positions).
    pub fn solid(ball: &Ball) -> Chunk {
        Chunk {
            free: vec![BTreeSet::new(); ball.center.len()],
            base: ball.center.clone(),
            scale: ball.radius_exp,
        }
    }

    /// All q^{-scale}-balls of the n-dimensional unit ball.
    pub fn full_unit(field: &Field, n: usize, scale: u32) -> Chunk {
        let free: BTreeSet<u32> = (0..scale).collect();
        Chunk {
            base: vec![field.zero(); n],
            free: vec![free; n],
            scale,
        }
    }

    pub fn field(&self) -> &Field {
        self.base[0].field()
    }

    pub fn dimension(&self) -> usize {
        self.base.len()
    }

    /// Number of balls the chunk stands for: q^{Σ_c |free_c|}.
    pub fn count(&self) -> Result<u128> {
        let q = self.field().q() as u128;
        let mut total: u128 = 1;
        for f in &self.free {
            for _ in f {
                total = total
                    .checked_mul(q)
                    .ok_or_else(|| Error::TooLarge("chunk ball count overflows".into()))?;
            }
        }
        Ok(total)
    }

    /// Deterministic sort/identity key: scale, base digits, free sets.
    pub fn key(&self) -> Vec<u32> {
        let mut key = vec![self.scale];
        for c in &self.base {
            key.extend(c.key());
        }
        for f in &self.free {
            key.push(u32::MAX); // separator
            key.extend(f.iter().copied());
        }
        key
    }

    fn assert_canonical(&self) {
        if cfg!(debug_assertions) {
            let field = self.field().clone();
            let f = field.f();
            for (c, fset) in self.base.iter().zip(self.free.iter()) {
                for &u in fset {
                    assert!(u < self.scale, "free position beyond scale");
                    for k1 in 0..f {
                        assert_eq!(field.digit(c, k1, u), 0, "base digit at free position");
                    }
                }
            }
        }
    }

    /// The packed digit of coordinate `coord` at position u: one value in
    /// [0, q) combining the f residue-component rows in base p.
    pub fn packed_digit(field: &Field, x: &Element, u: u32) -> u32 {
        let p = field.p();
        let mut d = 0u32;
        for k1 in (0..field.f()).rev() {
            d = d * p + field.digit(x, k1, u);
        }
        d
    }

    fn set_packed_digit(field: &Field, x: &mut Element, u: u32, mut d: u32) {
        let p = field.p();
        for k1 in 0..field.f() {
            field.set_digit(x, k1, u, d % p);
            d /= p;
        }
    }

    /// Restrict to the balls lying inside `ball` (radius coarser than the
    /// chunk's scale). Free positions below the ball's radius get fixed to
    /// the ball's digits; a fixed-position mismatch means disjointness.
    pub fn restrict_to(&self, ball: &Ball) -> Option<Chunk> {
        assert!(ball.radius_exp <= self.scale, "restriction must be coarser");
        assert_eq!(ball.center.len(), self.base.len());
        let field = self.field().clone();
        let mut out = self.clone();
        for (c, (bc, fset)) in ball.center.iter().zip(
            out.base.iter_mut().zip(out.free.iter_mut()),
        ) {
            for u in 0..ball.radius_exp {
                let want = Chunk::packed_digit(&field, c, u);
                if fset.contains(&u) {
                    fset.remove(&u);
                    Chunk::set_packed_digit(&field, bc, u, want);
                } else if Chunk::packed_digit(&field, bc, u) != want {
                    return None;
                }
            }
        }
        out.assert_canonical();
        Some(out)
    }

    /// The part of the chunk outside `ball`, as disjoint sub-chunks. For
    /// each free position below the ball's radius (ascending) and each
    /// digit differing from the ball's, one sub-chunk branches off with the
    /// earlier positions pinned to the ball's digits.
    pub fn subtract_ball(&self, ball: &Ball) -> Vec<Chunk> {
        assert!(ball.radius_exp <= self.scale);
        let field = self.field().clone();
        let q = field.q() as u32;
        // Fixed-position mismatch anywhere: the chunk is entirely outside.
        let inside = self.restrict_to(ball);
        if inside.is_none() {
            return vec![self.clone()];
        }
        let mut out = Vec::new();
        let mut pinned = self.clone();
        // Walk coordinates and positions in a fixed order, branching off.
        for coord in 0..self.dimension() {
            let positions: Vec<u32> = pinned.free[coord]
                .iter()
                .copied()
                .filter(|&u| u < ball.radius_exp)
                .collect();
            for u in positions {
                let want = Chunk::packed_digit(&field, &ball.center[coord], u);
                for d in 0..q {
                    if d == want {
                        continue;
                    }
                    let mut branch = pinned.clone();
                    branch.free[coord].remove(&u);
                    Chunk::set_packed_digit(&field, &mut branch.base[coord], u, d);
                    branch.assert_canonical();
                    out.push(branch);
                }
                pinned.free[coord].remove(&u);
                let want_digit = want;
                Chunk::set_packed_digit(&field, &mut pinned.base[coord], u, want_digit);
            }
        }
        out
    }

    /// Re-express at a finer scale keeping the same point set: positions in
    /// [scale, scale2) become free.
    pub fn bump_scale(&self, scale2: u32) -> Chunk {
        assert!(scale2 >= self.scale);
        let mut out = self.clone();
        for f in &mut out.free {
            f.extend(self.scale..scale2);
        }
        out.scale = scale2;
        out
    }

    /// Shrink every ball to the q^{-scale2}-ball around its center (the
    /// center-pick selection): the free set is kept, the scale refined.
    pub fn refine_keep_centers(&self, scale2: u32) -> Chunk {
        assert!(scale2 >= self.scale);
        let mut out = self.clone();
        out.scale = scale2;
        out
    }

    /// Translate every center by δ in one coordinate. Sound only when the
    /// addition cannot carry into a free position: δ's valuation must lie
    /// at or above every free position of that coordinate (carries move
    /// upward from there).
    pub fn translate(&self, coord: usize, delta: &Element, delta_val: u32) -> Chunk {
        let field = self.field().clone();
        assert!(delta_val < self.scale, "translation below the ball radius");
        assert!(
            self.free[coord].iter().all(|&u| u < delta_val),
            "translation digit must sit above the free positions"
        );
        let mut out = self.clone();
        out.base[coord] = field.add(&out.base[coord], delta);
        out.assert_canonical();
        out
    }

    /// Project to a coarser scale: the set of scale2-balls containing a
    /// ball of the chunk.
    pub fn project(&self, scale2: u32) -> Chunk {
        assert!(scale2 <= self.scale);
        let truncated = Ball::of(&self.base, scale2);
        let mut out = Chunk::solid(&truncated);
        for (fo, fs) in out.free.iter_mut().zip(self.free.iter()) {
            fo.extend(fs.iter().copied().filter(|&u| u < scale2));
        }
        out.assert_canonical();
        out
    }

    /// Is the (canonically reduced) point a center of this chunk?
    pub fn contains_center(&self, xs: &[Element]) -> bool {
        let field = self.field().clone();
        for (coord, x) in xs.iter().enumerate() {
            for u in 0..self.scale {
                if self.free[coord].contains(&u) {
                    continue;
                }
                if Chunk::packed_digit(&field, x, u)
                    != Chunk::packed_digit(&field, &self.base[coord], u)
                {
                    return false;
                }
            }
        }
        true
    }

    /// Do the two same-scale chunks describe disjoint ball sets?
    pub fn disjoint_from(&self, other: &Chunk) -> bool {
        assert_eq!(self.scale, other.scale, "compare chunks at equal scale");
        let field = self.field().clone();
        for coord in 0..self.dimension() {
            for u in 0..self.scale {
                if self.free[coord].contains(&u) || other.free[coord].contains(&u) {
                    continue;
                }
                if Chunk::packed_digit(&field, &self.base[coord], u)
                    != Chunk::packed_digit(&field, &other.base[coord], u)
                {
                    return true;
                }
            }
        }
        false
    }

    /// The i-th ball of the chunk: digits of i in base q fill the free
    /// positions in ascending (coordinate, position) order, least
    /// significant digit first.
    pub fn unrank(&self, mut i: u128) -> Ball {
        let field = self.field().clone();
        let q = field.q() as u128;
        let mut center = self.base.clone();
        for (coord, fset) in self.free.iter().enumerate() {
            for &u in fset {
                let d = (i % q) as u32;
                i /= q;
                Chunk::set_packed_digit(&field, &mut center[coord], u, d);
            }
        }
        assert_eq!(i, 0, "ball index beyond chunk size");
        Ball { center, radius_exp: self.scale }
    }

    /// All balls, in unrank order. Guarded by the enumeration budget.
    pub fn enumerate(&self) -> Result<Vec<Ball>> {
        let n = self.count()?;
        if n > MAX_ENUM {
            return Err(Error::TooLarge(format!(
                "chunk of {n} balls exceeds the enumeration budget"
            )));
        }
        Ok((0..n).map(|i| self.unrank(i)).collect())
    }
}

/// Total ball count of a chunk list.
pub fn total_count(chunks: &[Chunk]) -> Result<u128> {
    let mut total: u128 = 0;
    for c in chunks {
        total = total
            .checked_add(c.count()?)
            .ok_or_else(|| Error::TooLarge("ball count overflows".into()))?;
    }
    Ok(total)
}

/// The ball at a global index across a sorted chunk list.
pub fn unrank_in(chunks: &[Chunk], mut idx: u128) -> Result<Ball> {
    for c in chunks {
        let n = c.count()?;
        if idx < n {
            return Ok(c.unrank(idx));
        }
        idx -= n;
    }
    Err(Error::Infeasible("ball index beyond the family".into()))
}

/// Restrict a chunk list to a ball, dropping empty intersections.
pub fn restrict_all(chunks: &[Chunk], ball: &Ball) -> Vec<Chunk> {
    chunks.iter().filter_map(|c| c.restrict_to(ball)).collect()
}

/// Explode a chunk list to explicit balls (budget-guarded), sorted.
pub fn explode(chunks: &[Chunk]) -> Result<Vec<Ball>> {
    let total = total_count(chunks)?;
    if total > MAX_ENUM {
        return Err(Error::TooLarge(format!(
            "{total} balls exceed the enumeration budget"
        )));
    }
    let mut out = Vec::with_capacity(total as usize);
    for c in chunks {
        out.extend(c.enumerate()?);
    }
    out.sort_by_key(Ball::key);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldSpec;

    fn z5(n: u32) -> Field {
        Field::new(FieldSpec::zp(5, n)).unwrap()
    }

    #[test]
    fn counts_and_enumeration() {
        let k = z5(8);
        let c = Chunk::full_unit(&k, 1, 2);
        assert_eq!(c.count().unwrap(), 25);
        let balls = c.enumerate().unwrap();
        assert_eq!(balls.len(), 25);
        // unrank order: LSD at the smallest position. Index 7 = 2 + 1·5:
        // digit 2 at position 0, digit 1 at position 1.
        let b = c.unrank(7);
        assert_eq!(k.digit(&b.center[0], 0, 0), 2);
        assert_eq!(k.digit(&b.center[0], 0, 1), 1);
        // A chunk with a hole: free = {1} only (3 has digit 0 there, so the
        // base stays canonical).
        let mut gap = Chunk::solid(&Ball::of(&[k.from_i64(3)], 2));
        gap.free[0].insert(1);
        gap.assert_canonical();
        assert_eq!(gap.count().unwrap(), 5);
    }

    #[test]
    fn restriction_and_subtraction_partition() {
        let k = z5(8);
        let c = Chunk::full_unit(&k, 1, 3);
        let ball = Ball::of(&[k.from_i64(2)], 1);
        let inside = c.restrict_to(&ball).unwrap();
        assert_eq!(inside.count().unwrap(), 25, "5^2 balls under one residue");
        let outside = c.subtract_ball(&ball);
        let out_count: u128 = outside.iter().map(|x| x.count().unwrap()).sum();
        assert_eq!(out_count, 100, "4 residues × 25");
        // The pieces are pairwise disjoint and disjoint from the inside.
        for (i, a) in outside.iter().enumerate() {
            assert!(a.disjoint_from(&inside));
            for b in outside.iter().skip(i + 1) {
                assert!(a.disjoint_from(b));
            }
        }
        // A chunk already outside the ball survives subtraction whole.
        let elsewhere = Chunk::solid(&Ball::of(&[k.from_i64(4)], 3));
        assert_eq!(elsewhere.subtract_ball(&ball).len(), 1);
        // And one fully inside vanishes.
        let within = Chunk::solid(&Ball::of(&[k.from_i64(2 + 25)], 3));
        assert!(within.subtract_ball(&ball).is_empty());
    }

    #[test]
    fn scale_moves_and_translation() {
        let k = z5(12);
        let c = Chunk::full_unit(&k, 1, 2);
        let bumped = c.bump_scale(4);
        assert_eq!(bumped.count().unwrap(), 625, "same set, finer balls");
        let refined = bumped.refine_keep_centers(11);
        assert_eq!(refined.count().unwrap(), 625, "center picks only");
        // Translation by uniformizer^9: above every free position, below
        // the scale, so no carry can disturb the free digits.
        let delta = k.pow(&k.uniformizer(), 9);
        let shifted = refined.translate(0, &delta, 9);
        for i in 0..625 {
            let b = shifted.unrank(i);
            assert_eq!(k.digit(&b.center[0], 0, 9), 1);
        }
        // Projection back to scale 2 forgets both the pick and the shift.
        assert_eq!(shifted.project(2), c);
    }

    #[test]
    fn membership_and_global_unranking() {
        let k = z5(8);
        let a = Chunk::solid(&Ball::of(&[k.from_i64(1)], 2));
        let b = Chunk::full_unit(&k, 1, 2).restrict_to(&Ball::of(&[k.from_i64(2)], 1)).unwrap();
        let list = vec![a.clone(), b.clone()];
        assert_eq!(total_count(&list).unwrap(), 6, "1 solid + 5 in the residue");
        let first = unrank_in(&list, 0).unwrap();
        assert_eq!(first.center[0], k.from_i64(1));
        let sixth = unrank_in(&list, 1 + 4).unwrap();
        assert!(b.contains_center(&sixth.center));
        assert!(!a.contains_center(&sixth.center));
        assert!(unrank_in(&list, 6).is_err());
        let all = explode(&list).unwrap();
        assert_eq!(all.len(), 6);
        // Explosion is sorted and duplicate-free.
        let keys: Vec<_> = all.iter().map(Ball::key).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn packed_digits_cover_extension_rows() {
        // In a residue-degree-2 field a position holds q = p² digit
        // combinations.
        let k = Field::new(FieldSpec::unramified(crate::field::Char::Finite, 2, &[1, 1, 1], 6))
            .unwrap();
        assert_eq!(k.q(), 4);
        let c = Chunk::full_unit(&k, 1, 1);
        assert_eq!(c.count().unwrap(), 4);
        let balls = c.enumerate().unwrap();
        assert_eq!(balls.len(), 4);
        let mut keys: Vec<Vec<u32>> = balls.iter().map(Ball::key).collect();
        keys.dedup();
        assert_eq!(keys.len(), 4, "all four residue digits distinct");
    }
}
