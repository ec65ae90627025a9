//! Exact arithmetic in rings of integers of nonarchimedean local fields at a
//! fixed truncation precision, together with constructions of sets avoiding
//! polynomial / smooth-variety / linear configurations, and independent
//! brute-force verifiers and dimension auditors.
//!
//! The crate is organised bottom-up:
//!
//! * [`field`] — field descriptions, truncated ring elements, valuations,
//!   Hensel lifting, balls and subdivision.
//! * [`height`] — digit heights, height profiles (arithmetic growth
//!   constants), enumeration of bounded-height elements, perturbation checks.
//! * [`poly`] — integer polynomials in several vector variables and the
//!   single-scale polynomial-configuration avoider with certificates.
//! * [`smooth`] — smooth-map configurations (zero boxes, slab locality,
//!   projection-selection) and the single-scale smooth avoider.
//! * [`engine`] — the iterated construction queue, compact region
//!   representation, certificate re-verification, dimension auditors, and
//!   deterministic serialization.
//! * [`linear`] — simultaneous linear-form avoidance via the two-branch
//!   refinement dichotomy and the doubling tree.
//! * [`qsum`] — exact sums of rational powers of q with exact comparison.
//! * [`exec`] — parallel/sequential execution helpers behind the `parallel`
//!   feature.

pub mod error;
pub mod exec;
pub mod field;
pub mod height;
pub mod poly;
pub mod qsum;
pub mod smooth;
pub mod engine;
pub mod linear;

pub use error::Error;
pub use field::{Ball, Element, Field, FieldSpec, Val};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
