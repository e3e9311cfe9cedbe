//! Rater assignment plan and quota checks.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::card::{AnnotationCard, Cohort};
use crate::model::UseId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quota {
    pub cohort: Cohort,
    pub raters: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSession {
    pub name: String,
    pub use_ids: Vec<UseId>,
    pub quotas: Vec<Quota>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    pub sessions: Vec<PlanSession>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub use_id: UseId,
    pub cohort: Cohort,
    pub required: usize,
    pub received: usize,
}

impl AssignmentPlan {
    /// In-person review of the overlooked uses (3 developers, 4 compliance
    /// experts) plus online review of every use (3 + 3).
    pub fn standard(all: &[UseId], overlooked: &[UseId]) -> Self {
        AssignmentPlan {
            sessions: alloc::vec![
                PlanSession {
                    name: "in-person".into(),
                    use_ids: overlooked.to_vec(),
                    quotas: alloc::vec![Quota { cohort: Cohort::Developer, raters: 3 }, Quota { cohort: Cohort::ComplianceExpert, raters: 4 }],
                },
                PlanSession {
                    name: "online".into(),
                    use_ids: all.to_vec(),
                    quotas: alloc::vec![Quota { cohort: Cohort::Developer, raters: 3 }, Quota { cohort: Cohort::ComplianceExpert, raters: 3 }],
                },
            ],
        }
    }

    /// Required cards per (use, cohort), summed over sessions.
    pub fn requirements(&self) -> BTreeMap<(UseId, Cohort), usize> {
        let mut req = BTreeMap::new();
        for s in &self.sessions {
            for u in &s.use_ids {
                for q in &s.quotas {
                    *req.entry((*u, q.cohort)).or_insert(0) += q.raters;
                }
            }
        }
        req
    }

    pub fn total_cards(&self) -> usize {
        self.requirements().values().sum()
    }

    /// (use, cohort) pairs that received fewer cards than planned.
    pub fn shortfalls(&self, cards: &[AnnotationCard]) -> Vec<Shortfall> {
        let mut got: BTreeMap<(UseId, Cohort), usize> = BTreeMap::new();
        for c in cards {
            *got.entry((c.use_id(), c.cohort())).or_insert(0) += 1;
        }
        self.requirements()
            .into_iter()
            .filter_map(|((use_id, cohort), required)| {
                let received = got.get(&(use_id, cohort)).copied().unwrap_or(0);
                (received < required).then_some(Shortfall { use_id, cohort, required, received })
            })
            .collect()
    }
}
