//! Realisticness agreement between the model and participants, and the
//! attention-check gate.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::agreement::{majority_label, simple_quorum, Majority};
use super::{one_decimal, EvalError};
use crate::card::AnnotationCard;
use crate::model::{Realisticness, UseId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealismAgreement {
    pub compared: usize,
    pub no_consensus: usize,
    /// Realistic-vs-unlikely agreement; `None` when nothing was compared.
    pub collapsed_percent: Option<f64>,
    /// Exact three-label agreement.
    pub full_percent: Option<f64>,
    /// confusion[model][participants], labels in [`Realisticness::ALL`] order.
    pub confusion: [[u64; 3]; 3],
}

fn idx(l: Realisticness) -> usize {
    Realisticness::ALL.iter().position(|x| *x == l).unwrap()
}

/// Per-use participant majority over realisticness votes.
pub fn participant_majorities(cards: &[AnnotationCard]) -> Vec<(UseId, Majority<Realisticness>)> {
    let mut votes: BTreeMap<UseId, Vec<Realisticness>> = BTreeMap::new();
    for c in cards {
        votes.entry(c.use_id()).or_default().push(c.realisticness_vote());
    }
    votes.into_iter().map(|(u, v)| (u, majority_label(&v, simple_quorum(v.len())))).collect()
}

/// Compares model labels with participant majorities on shared uses.
pub fn realisticness_agreement(
    model: &[(UseId, Realisticness)],
    participants: &[(UseId, Majority<Realisticness>)],
) -> RealismAgreement {
    let mut confusion = [[0u64; 3]; 3];
    let (mut compared, mut no_consensus, mut collapsed, mut full) = (0usize, 0usize, 0usize, 0usize);
    for (id, m) in model {
        let Some((_, vote)) = participants.iter().find(|(u, _)| u == id) else { continue };
        let Some(vote) = vote.label() else {
            no_consensus += 1;
            continue;
        };
        compared += 1;
        confusion[idx(*m)][idx(vote)] += 1;
        if m.is_realistic() == vote.is_realistic() {
            collapsed += 1;
        }
        if *m == vote {
            full += 1;
        }
    }
    let pct = |k: usize| (compared > 0).then(|| one_decimal(k as f64 * 100.0 / compared as f64));
    RealismAgreement { compared, no_consensus, collapsed_percent: pct(collapsed), full_percent: pct(full), confusion }
}

/// Passes a participant with at least two of three attention checks right.
pub fn quality_gate(outcomes: &[bool]) -> Result<bool, EvalError> {
    if outcomes.len() != 3 {
        return Err(EvalError::ShapeError(format!("expected 3 attention checks, got {}", outcomes.len())));
    }
    Ok(outcomes.iter().filter(|&&c| c).count() >= 2)
}
