//! Coverage of literature-derived ground-truth uses by generated uses.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{one_decimal, EvalError};
use crate::model::UseId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthUse {
    pub gt_id: String,
    pub description: String,
    pub sources: Vec<String>,
}

/// A human matching decision for one ground-truth use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageMatch {
    pub gt_id: String,
    pub matched_use_ids: Vec<UseId>,
    pub rationale: String,
    /// Set for machine suggestions that no person has confirmed.
    #[serde(default)]
    pub advisory: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub percent: f64,
    pub matched: usize,
    pub total: usize,
    pub unmatched: Vec<GroundTruthUse>,
}

/// Share of ground-truth uses with at least one matched use.
/// Advisory records do not count as decisions.
pub fn compute_coverage(gt: &[GroundTruthUse], matches: &[CoverageMatch]) -> Result<Coverage, EvalError> {
    if gt.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut matched = 0;
    let mut unmatched = Vec::new();
    for g in gt {
        let m = matches
            .iter()
            .find(|m| m.gt_id == g.gt_id && !m.advisory)
            .ok_or_else(|| EvalError::MissingDecision(g.gt_id.clone()))?;
        if m.matched_use_ids.is_empty() {
            unmatched.push(g.clone());
        } else {
            matched += 1;
        }
    }
    Ok(Coverage { percent: one_decimal(matched as f64 * 100.0 / gt.len() as f64), matched, total: gt.len(), unmatched })
}

/// Match records citing use ids outside `known`.
pub fn dangling_matches<'m>(matches: &'m [CoverageMatch], known: &BTreeSet<UseId>) -> Vec<(&'m str, UseId)> {
    matches
        .iter()
        .flat_map(|m| m.matched_use_ids.iter().filter(|id| !known.contains(id)).map(move |id| (m.gt_id.as_str(), *id)))
        .collect()
}
