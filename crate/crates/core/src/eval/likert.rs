//! Seven-bin distributions of Likert answers.

use alloc::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::one_decimal;
use crate::card::{AnnotationCard, Cohort, LikertItem};
use crate::model::UseId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikertDistribution {
    pub item: LikertItem,
    /// counts[k] holds answers with score k + 1.
    pub counts: [u64; 7],
    pub total: u64,
    /// Shares to one decimal; all zero for an empty selection.
    pub percent: [f64; 7],
}

impl LikertDistribution {
    pub fn from_counts(item: LikertItem, counts: [u64; 7]) -> Self {
        let total = counts.iter().sum();
        let mut percent = [0.0; 7];
        if total > 0 {
            for (p, c) in percent.iter_mut().zip(counts) {
                *p = one_decimal(c as f64 * 100.0 / total as f64);
            }
        }
        LikertDistribution { item, counts, total, percent }
    }

    pub fn share(&self, score: u8) -> f64 {
        self.percent[(score.clamp(1, 7) - 1) as usize]
    }
}

/// Distribution of `item` over cards matching the cohort and use filters.
pub fn likert_summary(
    cards: &[AnnotationCard],
    item: LikertItem,
    cohort: Option<Cohort>,
    uses: Option<&BTreeSet<UseId>>,
) -> LikertDistribution {
    let mut counts = [0u64; 7];
    for c in cards {
        if cohort.is_some_and(|k| k != c.cohort()) {
            continue;
        }
        if uses.is_some_and(|s| !s.contains(&c.use_id())) {
            continue;
        }
        counts[(c.score(item) - 1) as usize] += 1;
    }
    LikertDistribution::from_counts(item, counts)
}
