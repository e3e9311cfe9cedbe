//! Pure, allocation-only core of the riskscope pipeline.
//!
//! Everything here is deterministic and free of IO: prompt rendering for the
//! use-generation and risk-labelling stages, structured-output parsing, the
//! overlooked-use similarity filter, and the evaluation metrics. The `riskscope`
//! crate layers transport, persistence and the CLI on top.
#![no_std]
#![deny(unused_must_use, rust_2018_idioms)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod artifact;
pub mod card;
pub mod catalog;
pub mod chat;
pub mod embed;
pub mod eval;
mod json_text;
pub mod model;
pub mod overlooked;
pub mod risk;
pub mod usesgen;

pub use artifact::{RunArtifact, RunConfig, TranscriptRef};
pub use card::{AnnotationCard, ClassificationAgreement, Cohort, ExpertClassification, LikertItem, LikertScore};
pub use catalog::{DomainCatalog, DomainEntry, DomainLookup, Provenance};
pub use chat::{ChatRequest, ResponseHint};
pub use model::{Realisticness, RealisticnessVerdict, RiskAssessment, RiskTier, TechnologyUse, UseConcepts, UseId};
