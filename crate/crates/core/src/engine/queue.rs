//! The engine's work queue. Conceptually the queue lists every tuple
//! (function index ℓ, derivative order k, section tuple σ, source level j0)
//! in a fixed order; its blocks grow combinatorially with the leaf count,
//! so the queue is never materialized. Each block stores only section
//! counts, and items are recovered on demand by unranking a global index.
//!
//! Order within a block: function index ascending, section tuples in
//! lexicographic order, and for each tuple the derivative order descending
//! from r−1 to 0 — so the items sharing a tuple are consecutive, each
//! stage's order-k item directly following its order-(k+1) item.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::Error;
use crate::Result;

/// Falling factorial m·(m−1)···(m−v+1): the number of injective v-tuples
/// from an m-element set. Zero when v > m.
pub fn perm(m: u128, v: usize) -> BigUint {
    if (v as u128) > m {
        return BigUint::zero();
    }
    let mut out = BigUint::one();
    for t in 0..v as u128 {
        out *= BigUint::from(m - t);
    }
    out
}

/// The idx-th injective v-tuple from {0, …, m−1} in lexicographic order.
pub fn unrank_injection(m: u128, v: usize, idx: &BigUint) -> Result<Vec<u128>> {
    if idx >= &perm(m, v) {
        return Err(Error::Infeasible("tuple index beyond the section".into()));
    }
    let mut rest = idx.clone();
    let mut used: Vec<u128> = Vec::with_capacity(v);
    let mut out = Vec::with_capacity(v);
    for t in 0..v {
        // Each choice of this coordinate allows the same number of
        // completions, so lexicographic rank is mixed-radix.
        let base = perm(m - 1 - t as u128, v - 1 - t);
        let digit = (&rest / &base)
            .to_u128()
            .expect("digit bounded by the leaf count");
        rest %= &base;
        // The digit counts unused values in increasing order.
        let mut val = digit;
        for &u in &used {
            if u <= val {
                val += 1;
            }
        }
        let pos = used.partition_point(|&u| u < val);
        used.insert(pos, val);
        out.push(val);
    }
    Ok(out)
}

/// One function's span inside a block.
#[derive(Debug, Clone)]
pub struct SectionInfo {
    /// 1-based function index.
    pub ell: usize,
    /// Tuple arity of the function.
    pub v: usize,
    /// Number of derivative orders (items per tuple).
    pub r: u32,
    /// Number of section tuples: perm(leaf_count, v).
    pub sigma_count: BigUint,
    /// Items in the section: sigma_count · r.
    pub len: BigUint,
}

/// The block appended after one stage: for each admitted function, all
/// injective tuples into that stage's leaf family.
#[derive(Debug, Clone)]
pub struct BlockInfo {
    /// The stage whose leaf family the tuples index into.
    pub j0: usize,
    /// Leaf-ball count of that stage.
    pub leaf_count: u128,
    pub sections: Vec<SectionInfo>,
}

/// Build the block appended after stage j0: sections for functions
/// ℓ = 1, …, min(j0+1, L), where `specs[ℓ−1] = (v_ℓ, r_ℓ)`.
pub fn make_block(j0: usize, leaf_count: u128, specs: &[(usize, u32)]) -> BlockInfo {
    let cap = specs.len().min(j0 + 1);
    let sections = specs[..cap]
        .iter()
        .enumerate()
        .map(|(i, &(v, r))| {
            let sigma_count = perm(leaf_count, v);
            let len = &sigma_count * BigUint::from(r);
            SectionInfo { ell: i + 1, v, r, sigma_count, len }
        })
        .collect();
    BlockInfo { j0, leaf_count, sections }
}

/// Total item count across blocks.
pub fn queue_len(blocks: &[BlockInfo]) -> BigUint {
    blocks
        .iter()
        .flat_map(|b| b.sections.iter())
        .map(|s| s.len.clone())
        .sum()
}

/// A work item: avoid the order-k derivative of function ℓ over the
/// section tuple σ (ball indices into the leaf family of stage j0).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueItem {
    pub ell: usize,
    pub k: u32,
    pub sigma: Vec<u128>,
    pub j0: usize,
}

/// Recover the idx-th queue item (0-based across all blocks in order).
pub fn item_at(blocks: &[BlockInfo], idx: u64) -> Result<QueueItem> {
    let mut rest = BigUint::from(idx);
    for block in blocks {
        for s in &block.sections {
            if rest < s.len {
                let r = BigUint::from(s.r);
                let sigma_idx = &rest / &r;
                let within = (&rest % &r).to_u128().expect("below r") as u32;
                let k = s.r - 1 - within;
                let sigma = unrank_injection(block.leaf_count, s.v, &sigma_idx)?;
                return Ok(QueueItem { ell: s.ell, k, sigma, j0: block.j0 });
            }
            rest -= &s.len;
        }
    }
    Err(Error::Infeasible("queue index beyond the materialized blocks".into()))
}
