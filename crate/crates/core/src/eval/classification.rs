//! Expert ground truth for risk tiers and its comparison with the model.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::agreement::{accuracy, cohens_kappa, fleiss_kappa, majority_label, simple_quorum, Majority, RaterMatrix};
use super::EvalError;
use crate::card::{AnnotationCard, Cohort, ExpertClassification};
use crate::model::{RiskTier, UseId};

/// Effective expert labels per use, from compliance cards on classified uses.
pub fn expert_votes(cards: &[AnnotationCard], tiers: &BTreeMap<UseId, RiskTier>) -> BTreeMap<UseId, Vec<ExpertClassification>> {
    let mut out: BTreeMap<UseId, Vec<ExpertClassification>> = BTreeMap::new();
    for c in cards.iter().filter(|c| c.cohort() == Cohort::ComplianceExpert) {
        let Some(tier) = tiers.get(&c.use_id()) else { continue };
        if let Some(l) = c.expert_label(*tier) {
            out.entry(c.use_id()).or_default().push(l);
        }
    }
    out
}

/// Majority of expert labels per use with a strict-majority quorum.
pub fn expert_gold(votes: &BTreeMap<UseId, Vec<ExpertClassification>>) -> Vec<(UseId, Majority<ExpertClassification>)> {
    votes.iter().map(|(u, v)| (*u, majority_label(v, simple_quorum(v.len())))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationEval {
    pub items: usize,
    pub no_consensus: Vec<UseId>,
    pub accuracy: Option<f64>,
    pub cohen_kappa: Option<f64>,
    /// Fleiss' kappa over items with the most common rater count.
    pub fleiss_kappa: Option<f64>,
    pub fleiss_items: usize,
    pub fleiss_raters: usize,
}

/// Accuracy and Cohen's kappa of model tiers against expert majorities,
/// plus Fleiss' kappa among the experts.
pub fn evaluate_classification(
    votes: &BTreeMap<UseId, Vec<ExpertClassification>>,
    tiers: &BTreeMap<UseId, RiskTier>,
) -> ClassificationEval {
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    let mut no_consensus = Vec::new();
    for (u, m) in expert_gold(votes) {
        match m {
            Majority::Label(l) => {
                gold.push(l);
                pred.push(ExpertClassification::from(tiers[&u]));
            }
            Majority::NoConsensus => no_consensus.push(u),
        }
    }
    let (fleiss, fleiss_items, fleiss_raters) = expert_fleiss(votes);
    ClassificationEval {
        items: gold.len(),
        no_consensus,
        accuracy: accuracy(&gold, &pred).ok(),
        cohen_kappa: cohens_kappa(&gold, &pred).ok(),
        fleiss_kappa: fleiss,
        fleiss_items,
        fleiss_raters,
    }
}

fn expert_fleiss(votes: &BTreeMap<UseId, Vec<ExpertClassification>>) -> (Option<f64>, usize, usize) {
    let mut freq: BTreeMap<usize, usize> = BTreeMap::new();
    for v in votes.values() {
        *freq.entry(v.len()).or_insert(0) += 1;
    }
    // most common rater count; larger count wins a tie
    let Some((&n, _)) = freq.iter().filter(|(n, _)| **n >= 2).max_by_key(|(n, c)| (**c, **n)) else {
        return (None, 0, 0);
    };
    let rows: Vec<Vec<ExpertClassification>> = votes.values().filter(|v| v.len() == n).cloned().collect();
    let items = rows.len();
    let k = RaterMatrix::complete(ExpertClassification::ALL.to_vec(), rows).and_then(|m| fleiss_kappa(&m));
    (k.ok(), items, n)
}

/// Convenience for callers holding plain label lists.
pub fn gold_and_predicted(
    gold: &[Majority<ExpertClassification>],
    predicted: &[RiskTier],
) -> Result<(Vec<ExpertClassification>, Vec<ExpertClassification>, usize), EvalError> {
    if gold.len() != predicted.len() {
        return Err(EvalError::ShapeError(alloc::format!("{} gold vs {} predicted", gold.len(), predicted.len())));
    }
    let mut g = Vec::new();
    let mut p = Vec::new();
    let mut skipped = 0;
    for (m, t) in gold.iter().zip(predicted) {
        match m.label() {
            Some(l) => {
                g.push(l);
                p.push((*t).into());
            }
            None => skipped += 1,
        }
    }
    Ok((g, p, skipped))
}
