//! Evaluation metrics over generated uses and practitioner annotations.

pub mod agreement;
pub mod chisq;
pub mod classification;
pub mod coverage;
pub mod likert;
pub mod plan;
pub mod realism;

pub use agreement::{accuracy, cohens_kappa, fleiss_kappa, majority_label, Majority, RaterMatrix};
pub use chisq::{chi_squared_independence, chi_squared_sf, ChiSquared};
pub use coverage::{compute_coverage, Coverage, CoverageMatch, GroundTruthUse};
pub use likert::{likert_summary, LikertDistribution};
pub use realism::{quality_gate, realisticness_agreement, RealismAgreement};

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("shape error: {0}")]
    ShapeError(String),
    #[error("chance agreement is 1 but observed agreement is not")]
    DegenerateMarginals,
    #[error("distribution has no observations")]
    EmptyDistribution,
    #[error("no coverage decision for ground-truth use {0}")]
    MissingDecision(String),
    #[error("label {0:?} is not in the declared label set")]
    UnknownLabel(String),
    #[error("nothing to evaluate")]
    EmptyInput,
}

/// Half-away-from-zero rounding to one decimal.
pub fn one_decimal(x: f64) -> f64 {
    crate::risk::round_to(x, 1)
}
