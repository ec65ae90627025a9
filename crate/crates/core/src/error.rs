//! Error taxonomy for the toolkit.
//!
//! Variants separate *caller mistakes* (bad field descriptions, malformed
//! inputs), *mathematical infeasibility* (parameters that cannot satisfy the
//! requested construction), and *precision exhaustion* (the truncated model
//! cannot certify the requested fact; a higher precision might).

use thiserror::Error;

/// All errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// The claimed characteristic / residue characteristic is not prime.
    #[error("{0} is not prime")]
    NonPrime(u64),

    /// The residue polynomial is not irreducible over F_p.
    #[error("residue polynomial is reducible over F_{p}: {detail}")]
    ReduciblePoly { p: u64, detail: String },

    /// The residue polynomial must be primitive (its root must generate the
    /// multiplicative group of the residue field) so that the distinguished
    /// root admits a multiplicative (Teichmueller) lift.
    #[error("residue polynomial is irreducible but not primitive over F_{p}; \
             the canonical basis construction needs a primitive polynomial")]
    NotPrimitive { p: u64 },

    /// The ramification polynomial is not Eisenstein.
    #[error("ramification polynomial is not Eisenstein: {0}")]
    NotEisenstein(String),

    /// A field description is structurally invalid.
    #[error("invalid field description: {0}")]
    BadFieldSpec(String),

    /// Two elements from different fields (or precisions) were combined.
    #[error("elements belong to incompatible fields: {0}")]
    FieldMismatch(String),

    /// Division hypotheses violated (dividing by a non-unit, or removing a
    /// uniformizer power that is not present).
    #[error("division hypothesis violated: {0}")]
    NotDivisible(String),

    /// The Hensel hypothesis |f(x0)| < |f'(x0)|^2 could not be certified at
    /// the working precision.
    #[error("Hensel hypothesis not certified: {0}")]
    HenselHypothesis(String),

    /// A derivative lower bound could not be established because the
    /// derivative vanishes (or cannot be separated from zero) on the domain.
    #[error("derivative not bounded away from zero: {0}")]
    VanishingDerivative(String),

    /// Requested construction parameters are mathematically infeasible.
    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    /// The truncation precision is insufficient to decide the requested
    /// question; the result would depend on digits beyond the cutoff.
    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),

    /// An exact comparison or audit could not be decided (distinct from
    /// precision: the inputs themselves do not determine the answer).
    #[error("indeterminate: {0}")]
    Indeterminate(String),

    /// A request would enumerate more objects than the configured guard.
    #[error("refusing oversized enumeration: {0}")]
    TooLarge(String),

    /// Malformed textual input (field description files, polynomial files,
    /// serialized trees or certificates).
    #[error("parse error: {0}")]
    Parse(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: infeasibility and bad inputs are 2,
    /// precision exhaustion is 3, everything else that reaches the top is
    /// also an input-class failure (2). Verification *failures* are not
    /// errors — the verifiers report them as data and the CLI maps them to
    /// exit code 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::PrecisionExhausted(_) => 3,
            _ => 2,
        }
    }
}
