//! Execution helpers: the same reduction shapes compiled either onto rayon
//! (feature `parallel`, default) or onto plain iterators.
//!
//! Every construction sweep in this crate is one of three shapes:
//!
//! * count the indices in a range satisfying a predicate,
//! * find the *minimal* index in a range violating a predicate (determinism:
//!   parallel and sequential runs report the same witness),
//! * fold a maximum of a per-index score.
//!
//! The `_seq` variants are always available (benches compare them against the
//! default entry points).

/// Count indices `i` in `0..n` with `pred(i)` true. Sequential.
pub fn count_range_seq(n: u64, pred: impl Fn(u64) -> bool + Sync + Send) -> u64 {
    (0..n).filter(|&i| pred(i)).count() as u64
}

/// Minimal index in `0..n` where `pred` FAILS, if any. Sequential.
pub fn first_violation_seq(n: u64, pred: impl Fn(u64) -> bool + Sync + Send) -> Option<u64> {
    (0..n).find(|&i| !pred(i))
}

/// Maximum of `score(i)` over `0..n`, or `None` when the range is empty.
/// Sequential.
pub fn fold_max_seq<T: Ord + Send>(n: u64, score: impl Fn(u64) -> T + Sync + Send) -> Option<T> {
    (0..n).map(score).max()
}

#[cfg(feature = "parallel")]
mod par {
    use rayon::prelude::*;

    /// Count indices `i` in `0..n` with `pred(i)` true.
    pub fn count_range(n: u64, pred: impl Fn(u64) -> bool + Sync + Send) -> u64 {
        (0..n).into_par_iter().filter(|&i| pred(i)).count() as u64
    }

    /// Minimal index in `0..n` where `pred` FAILS, if any. `min()` over the
    /// violating indices keeps the reported witness independent of thread
    /// scheduling.
    pub fn first_violation(n: u64, pred: impl Fn(u64) -> bool + Sync + Send) -> Option<u64> {
        (0..n).into_par_iter().filter(|&i| !pred(i)).min()
    }

    /// Maximum of `score(i)` over `0..n`, or `None` when the range is empty.
    pub fn fold_max<T: Ord + Send>(n: u64, score: impl Fn(u64) -> T + Sync + Send) -> Option<T> {
        (0..n).into_par_iter().map(score).max()
    }
}

#[cfg(feature = "parallel")]
pub use par::{count_range, first_violation, fold_max};

#[cfg(not(feature = "parallel"))]
pub use self::seq_default::{count_range, first_violation, fold_max};

#[cfg(not(feature = "parallel"))]
mod seq_default {
    /// Count indices `i` in `0..n` with `pred(i)` true.
    pub fn count_range(n: u64, pred: impl Fn(u64) -> bool + Sync + Send) -> u64 {
        super::count_range_seq(n, pred)
    }

    /// Minimal index in `0..n` where `pred` FAILS, if any.
    pub fn first_violation(n: u64, pred: impl Fn(u64) -> bool + Sync + Send) -> Option<u64> {
        super::first_violation_seq(n, pred)
    }

    /// Maximum of `score(i)` over `0..n`.
    pub fn fold_max<T: Ord + Send>(n: u64, score: impl Fn(u64) -> T + Sync + Send) -> Option<T> {
        super::fold_max_seq(n, score)
    }
}
