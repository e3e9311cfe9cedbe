//! Run summaries shared by `report`, `evaluate` and `GET /runs/{id}/report`.
//!
//! The machine form is pretty JSON with a trailing newline; the CLI and the
//! HTTP API both emit [`Report::to_machine`] so their bytes agree.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use riskscope_core::artifact::RunArtifact;
use riskscope_core::eval::chisq::ChiSquared;
use riskscope_core::eval::classification::{evaluate_classification, expert_votes, ClassificationEval};
use riskscope_core::eval::coverage::dangling_matches;
use riskscope_core::eval::plan::{AssignmentPlan, Shortfall};
use riskscope_core::eval::realism::participant_majorities;
use riskscope_core::eval::{
    chi_squared_independence, compute_coverage, likert_summary, quality_gate, realisticness_agreement, Coverage,
    CoverageMatch, EvalError, GroundTruthUse, LikertDistribution, RealismAgreement,
};
use riskscope_core::overlooked::{PercentileBasis, ProbeRow, UseSupport, VenueCount};
use riskscope_core::risk::{risk_distribution, round_to, RiskDistribution};
use riskscope_core::usesgen::StageCounts;
use riskscope_core::{AnnotationCard, Cohort, LikertItem, RiskTier, UseId};

use crate::inputs::{parse_attention_checks, parse_ground_truth, parse_matches, AttentionRecord, InputError};
use crate::store::{Store, StoreError};

/// Evaluation inputs kept next to the artifact.
pub const GROUND_TRUTH_FILE: &str = "ground_truth.tsv";
pub const MATCHES_FILE: &str = "coverage_matches.tsv";
pub const ATTENTION_FILE: &str = "attention_checks.csv";

const TOP_N: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Input(#[from] InputError),
    #[error("{0}")]
    Eval(#[from] EvalError),
    #[error("attention checks for rater {rater}: {source}")]
    Gate { rater: String, source: EvalError },
    #[error("coverage match {gt_id} names unknown use {use_id}")]
    DanglingMatch { gt_id: String, use_id: UseId },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub run_id: String,
    pub technology: String,
    pub uses: UsesSummary,
    pub risk: RiskSummary,
    pub overlooked: Option<OverlookedSummary>,
    pub evaluation: Option<Evaluation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UsesSummary {
    pub total: usize,
    pub realistic: usize,
    pub unlikely: usize,
    pub unlikely_percent: Option<f64>,
    pub generation: StageCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskSummary {
    pub distribution: RiskDistribution,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlookedSummary {
    pub count: usize,
    pub use_ids: Vec<UseId>,
    pub percentile: f64,
    pub basis: PercentileBasis,
    pub threshold: f64,
    pub probes: Vec<ProbeRow>,
    pub top_venues: Vec<VenueCount>,
    pub top_uses: Vec<UseSupport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    /// Cards counted after the attention-check gate.
    pub cards: usize,
    pub raters: BTreeMap<&'static str, usize>,
    pub excluded_raters: Vec<String>,
    pub coverage: Option<Coverage>,
    pub realism_all: RealismAgreement,
    pub realism_overlooked: RealismAgreement,
    pub likert: Vec<LikertRow>,
    pub cohort_tests: Vec<CohortTest>,
    pub classification: ClassificationEval,
    pub shortfalls: Vec<Shortfall>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    All,
    Overlooked,
}

impl Scope {
    fn tag(self) -> &'static str {
        match self {
            Scope::All => "all",
            Scope::Overlooked => "overlooked",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LikertRow {
    pub scope: Scope,
    /// `None` pools both cohorts.
    pub cohort: Option<Cohort>,
    pub distribution: LikertDistribution,
}

/// Developer vs compliance-expert answers on one item.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortTest {
    pub scope: Scope,
    pub item: LikertItem,
    pub result: Option<ChiSquared>,
    pub note: Option<String>,
}

/// Optional evaluation files for a run.
#[derive(Debug, Clone, Default)]
pub struct EvaluationInputs {
    pub ground_truth: Option<Vec<GroundTruthUse>>,
    pub matches: Option<Vec<CoverageMatch>>,
    pub attention: Option<Vec<AttentionRecord>>,
}

impl EvaluationInputs {
    pub fn from_store(store: &Store, run_id: &str) -> Result<Self, ReportError> {
        let dir = store.run_dir(run_id);
        let read = |name: &str| -> Result<Option<String>, ReportError> {
            Ok(store.get_file(run_id, name)?.map(|b| String::from_utf8_lossy(&b).into_owned()))
        };
        let path = |name: &str| dir.join(name);
        Ok(EvaluationInputs {
            ground_truth: read(GROUND_TRUTH_FILE)?.map(|t| parse_ground_truth(&t, &path(GROUND_TRUTH_FILE))).transpose()?,
            matches: read(MATCHES_FILE)?.map(|t| parse_matches(&t, &path(MATCHES_FILE))).transpose()?,
            attention: read(ATTENTION_FILE)?.map(|t| parse_attention_checks(&t, &path(ATTENTION_FILE))).transpose()?,
        })
    }
}

fn percent(part: usize, whole: usize) -> Option<f64> {
    (whole > 0).then(|| part as f64 * 100.0 / whole as f64)
}

/// Raters failing the gate; raters without records are kept.
fn gate(attention: &[AttentionRecord]) -> Result<BTreeSet<String>, ReportError> {
    let mut out = BTreeSet::new();
    for r in attention {
        let pass = quality_gate(&r.outcomes).map_err(|source| ReportError::Gate { rater: r.rater_id.clone(), source })?;
        if !pass {
            out.insert(r.rater_id.clone());
        }
    }
    Ok(out)
}

pub fn build_report(artifact: &RunArtifact, inputs: &EvaluationInputs) -> Result<Report, ReportError> {
    let a = artifact;
    let unlikely = a.uses.iter().filter(|u| !u.label().is_realistic()).count();
    let uses = UsesSummary {
        total: a.uses.len(),
        realistic: a.uses.len() - unlikely,
        unlikely,
        unlikely_percent: percent(unlikely, a.uses.len()).map(|p| round_to(p, 1)),
        generation: a.generation.counts,
    };
    let risk = RiskSummary { distribution: risk_distribution(&a.risk), failures: a.risk_failures.len() };
    let overlooked_ids = a.overlooked_ids();
    let overlooked = a.calibration.as_ref().map(|c| {
        let lit = a.literature.clone().unwrap_or_else(|| riskscope_core::overlooked::LiteratureStats { venues: vec![], uses: vec![] });
        OverlookedSummary {
            count: overlooked_ids.len(),
            use_ids: overlooked_ids.iter().copied().collect(),
            percentile: c.percentile,
            basis: c.basis,
            threshold: c.threshold,
            probes: c.probes.clone(),
            top_venues: lit.venues.into_iter().take(TOP_N).collect(),
            top_uses: lit.uses.into_iter().take(TOP_N).collect(),
        }
    });

    let has_eval = !a.annotations.is_empty() || inputs.ground_truth.is_some();
    let evaluation = if has_eval { Some(evaluate(a, inputs, &overlooked_ids)?) } else { None };

    Ok(Report { run_id: a.run_id.clone(), technology: a.technology.clone(), uses, risk, overlooked, evaluation })
}

fn evaluate(a: &RunArtifact, inputs: &EvaluationInputs, overlooked: &BTreeSet<UseId>) -> Result<Evaluation, ReportError> {
    let excluded = match &inputs.attention {
        Some(att) => gate(att)?,
        None => BTreeSet::new(),
    };
    let cards: Vec<AnnotationCard> = a.annotations.iter().filter(|c| !excluded.contains(c.rater_id())).cloned().collect();

    let mut raters: BTreeMap<&'static str, BTreeSet<&str>> = BTreeMap::new();
    for c in &cards {
        raters.entry(c.cohort().tag()).or_default().insert(c.rater_id());
    }

    let coverage = match (&inputs.ground_truth, &inputs.matches) {
        (Some(gt), Some(m)) => {
            let known: BTreeSet<UseId> = a.uses.iter().map(|u| u.use_id).collect();
            if let Some((gt_id, use_id)) = dangling_matches(m, &known).first() {
                return Err(ReportError::DanglingMatch { gt_id: gt_id.to_string(), use_id: *use_id });
            }
            Some(compute_coverage(gt, m)?)
        }
        _ => None,
    };

    let model: Vec<(UseId, riskscope_core::Realisticness)> = a.uses.iter().map(|u| (u.use_id, u.label())).collect();
    let majorities = participant_majorities(&cards);
    let realism_all = realisticness_agreement(&model, &majorities);
    let model_overlooked: Vec<_> = model.iter().filter(|(u, _)| overlooked.contains(u)).copied().collect();
    let realism_overlooked = realisticness_agreement(&model_overlooked, &majorities);

    let mut likert = Vec::new();
    let mut cohort_tests = Vec::new();
    for scope in [Scope::All, Scope::Overlooked] {
        let filter = (scope == Scope::Overlooked).then_some(overlooked);
        for item in LikertItem::ALL {
            for cohort in [None, Some(Cohort::Developer), Some(Cohort::ComplianceExpert)] {
                likert.push(LikertRow { scope, cohort, distribution: likert_summary(&cards, item, cohort, filter) });
            }
            let dev = likert_summary(&cards, item, Some(Cohort::Developer), filter);
            let ce = likert_summary(&cards, item, Some(Cohort::ComplianceExpert), filter);
            let (result, note) = match chi_squared_independence(&dev.counts, &ce.counts) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            cohort_tests.push(CohortTest { scope, item, result, note });
        }
    }

    let tiers: BTreeMap<UseId, RiskTier> = a.risk.iter().map(|r| (r.use_id, r.classification)).collect();
    let classification = evaluate_classification(&expert_votes(&cards, &tiers), &tiers);

    let all_ids: Vec<UseId> = a.uses.iter().map(|u| u.use_id).collect();
    let overlooked_ids: Vec<UseId> = overlooked.iter().copied().collect();
    let shortfalls = AssignmentPlan::standard(&all_ids, &overlooked_ids).shortfalls(&cards);

    Ok(Evaluation {
        cards: cards.len(),
        raters: raters.into_iter().map(|(k, v)| (k, v.len())).collect(),
        excluded_raters: excluded.into_iter().collect(),
        coverage,
        realism_all,
        realism_overlooked,
        likert,
        cohort_tests,
        classification,
        shortfalls,
    })
}

/// Loads the run, annotations and evaluation files, then builds the report.
pub fn report_for(store: &Store, run_id: &str) -> Result<Report, ReportError> {
    let artifact = store.load_run(run_id)?;
    let inputs = EvaluationInputs::from_store(store, run_id)?;
    build_report(&artifact, &inputs)
}

impl Report {
    pub fn to_machine(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn render_text(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "Run {} ({})", self.run_id, self.technology);
        let u = &self.uses;
        let _ = writeln!(
            o,
            "Uses: {} total, {} realistic, {} unlikely ({})",
            u.total,
            u.realistic,
            u.unlikely,
            pct(u.unlikely_percent.map(|p| p.round()), 0)
        );
        let g = &u.generation;
        let _ = writeln!(o, "Generation: {} parsed, {} skipped, {} after dedup", g.raw_parsed, g.skipped, g.after_dedup);

        let _ = writeln!(o, "\n{:<22}{:>6}{:>8}", "Risk tier", "Uses", "Share");
        for t in &self.risk.distribution.tiers {
            let share = t.percent_rounded.map_or("-".to_string(), |p| format!("{p}%"));
            let _ = writeln!(o, "{:<22}{:>6}{:>8}", t.tier.surface(), t.count, share);
        }
        let _ = writeln!(o, "{:<22}{:>6}", "total", self.risk.distribution.total);
        if self.risk.failures > 0 {
            let _ = writeln!(o, "Unclassified uses: {}", self.risk.failures);
        }

        match &self.overlooked {
            Some(ov) => {
                let basis = match ov.basis {
                    PercentileBasis::PerPaper => "per paper",
                    PercentileBasis::PerPair => "per pair",
                };
                let _ = writeln!(
                    o,
                    "\nOverlooked uses: {} of {} (threshold {:.4} at percentile {}, {basis})",
                    ov.count, u.total, ov.threshold, ov.percentile
                );
                if !ov.use_ids.is_empty() {
                    let ids: Vec<String> = ov.use_ids.iter().map(|i| i.to_string()).collect();
                    let _ = writeln!(o, "  ids: {}", ids.join(", "));
                }
                for p in &ov.probes {
                    let _ = writeln!(o, "  p{:<6} threshold {:.4}  papers {}", p.percentile, p.threshold, p.papers_at_or_above);
                }
                if !ov.top_venues.is_empty() {
                    let _ = writeln!(o, "  top venues:");
                    for v in &ov.top_venues {
                        let _ = writeln!(o, "    {:<40}{:>5}", v.venue, v.papers);
                    }
                }
            }
            None => {
                let _ = writeln!(o, "\nOverlooked uses: not computed");
            }
        }

        if let Some(e) = &self.evaluation {
            render_evaluation(&mut o, e);
        }
        o
    }
}

fn pct(p: Option<f64>, digits: usize) -> String {
    p.map_or("n/a".to_string(), |v| format!("{v:.digits$}%"))
}

fn render_evaluation(o: &mut String, e: &Evaluation) {
    let raters: Vec<String> = e.raters.iter().map(|(k, v)| format!("{v} {k}")).collect();
    let _ = writeln!(o, "\nAnnotations: {} cards from {}", e.cards, if raters.is_empty() { "no raters".into() } else { raters.join(", ") });
    if !e.excluded_raters.is_empty() {
        let _ = writeln!(o, "  excluded by attention checks: {}", e.excluded_raters.join(", "));
    }
    if let Some(c) = &e.coverage {
        let _ = writeln!(o, "Coverage: {:.1}% ({} of {} ground-truth uses)", c.percent, c.matched, c.total);
        for g in &c.unmatched {
            let _ = writeln!(o, "  unmatched {}: {}", g.gt_id, g.description);
        }
    }
    for (name, r) in [("all uses", &e.realism_all), ("overlooked", &e.realism_overlooked)] {
        let _ = writeln!(
            o,
            "Realisticness agreement ({name}): {} collapsed, {} exact over {} uses ({} without majority)",
            pct(r.collapsed_percent, 1),
            pct(r.full_percent, 1),
            r.compared,
            r.no_consensus
        );
    }
    let c = &e.classification;
    let _ = writeln!(
        o,
        "Classification vs experts: accuracy {} over {} uses ({} without majority), Cohen kappa {}, Fleiss kappa {}",
        pct(c.accuracy, 1),
        c.items,
        c.no_consensus.len(),
        c.cohen_kappa.map_or("n/a".into(), |k| format!("{k:.3}")),
        c.fleiss_kappa.map_or("n/a".into(), |k| format!("{k:.3}"))
    );

    let _ = writeln!(o, "\n{:<12}{:<18}{:<18}Score shares 1..7 (%)", "Scope", "Item", "Cohort");
    for r in &e.likert {
        if r.distribution.total == 0 {
            continue;
        }
        let cohort = r.cohort.map_or("both", |c| c.tag());
        let shares: Vec<String> = r.distribution.percent.iter().map(|p| format!("{p:.1}")).collect();
        let _ = writeln!(o, "{:<12}{:<18}{:<18}{}", r.scope.tag(), r.distribution.item.key(), cohort, shares.join(" "));
    }
    for t in &e.cohort_tests {
        if let Some(r) = &t.result {
            let _ = writeln!(
                o,
                "chi-squared {} {}: statistic {:.3}, df {}, p {:.4}",
                t.scope.tag(),
                t.item.key(),
                r.statistic,
                r.df,
                r.p_value
            );
        }
    }
    if !e.shortfalls.is_empty() {
        let _ = writeln!(o, "Rater quota shortfalls: {}", e.shortfalls.len());
    }
}

/// Validates and stores evaluation inputs beside the run.
pub fn store_inputs(store: &Store, run_id: &str, name: &'static str, text: &str, path: &Path) -> Result<(), ReportError> {
    match name {
        GROUND_TRUTH_FILE => {
            parse_ground_truth(text, path)?;
        }
        MATCHES_FILE => {
            parse_matches(text, path)?;
        }
        ATTENTION_FILE => {
            for r in parse_attention_checks(text, path)? {
                quality_gate(&r.outcomes).map_err(|source| ReportError::Gate { rater: r.rater_id.clone(), source })?;
            }
        }
        _ => unreachable!("unknown evaluation file {name}"),
    }
    store.put_file(run_id, name, text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use riskscope_core::artifact::RunConfig;
    use riskscope_core::card::CardFields;
    use riskscope_core::model::ActCitation;
    use riskscope_core::{LikertScore, Realisticness, RealisticnessVerdict, RiskAssessment, TechnologyUse, UseConcepts};

    fn artifact() -> RunArtifact {
        let cfg = RunConfig {
            model_name: "m".into(),
            generation_temperature: 0.7,
            classification_temperature: 0.0,
            uses_per_domain: 3,
            percentile: 99.9,
            percentile_basis: PercentileBasis::PerPaper,
            embedding_provider: None,
        };
        let mut a = RunArtifact::new("R", "Tech", cfg, "2024-01-01T00:00:00Z");
        for (i, label, tier) in [
            (1, Realisticness::AlreadyExistent, RiskTier::Prohibited),
            (2, Realisticness::Upcoming, RiskTier::HighRisk),
            (3, Realisticness::Unlikely, RiskTier::LimitedOrLowRisk),
        ] {
            let c = UseConcepts::new("Dom", format!("purpose {i}"), "cap", "user", "subject").unwrap();
            a.uses.push(TechnologyUse::new(UseId(i), c, RealisticnessVerdict::new(label, "why").unwrap(), None));
            let cite = tier.requires_citation().then(|| ActCitation::new("Article 5(1)(a) of the Act"));
            a.risk.push(RiskAssessment::new(UseId(i), "desc", tier, cite, "reason").unwrap());
        }
        a
    }

    fn dev_card(use_id: u32, rater: &str, familiarity: u8) -> AnnotationCard {
        AnnotationCard::new(CardFields {
            use_id: UseId(use_id),
            rater_id: rater.into(),
            cohort: Cohort::Developer,
            realisticness_vote: Realisticness::Upcoming,
            scores: LikertItem::ALL
                .iter()
                .map(|i| LikertScore::new(*i, if *i == LikertItem::Familiarity { familiarity } else { 4 }).unwrap())
                .collect(),
            classification_agreement: None,
            corrected_classification: None,
            reasoning_correction: None,
            usefulness_notes: None,
        })
        .unwrap()
    }

    #[test]
    fn shares_and_text() {
        let r = build_report(&artifact(), &EvaluationInputs::default()).unwrap();
        assert_eq!(r.uses.unlikely, 1);
        assert_eq!(r.risk.distribution.count(RiskTier::HighRisk), 1);
        assert!(r.evaluation.is_none());
        let text = r.render_text();
        assert!(text.contains("prohibited"), "{text}");
        assert!(text.contains("33%"), "{text}");
        assert!(r.to_machine().ends_with("}\n"));
    }

    #[test]
    fn gate_drops_failed_raters() {
        let mut a = artifact();
        a.annotations = vec![dev_card(1, "d1", 1), dev_card(1, "d2", 7)];
        let inputs = EvaluationInputs {
            attention: Some(vec![
                AttentionRecord { rater_id: "d1".into(), outcomes: vec![true, false, true] },
                AttentionRecord { rater_id: "d2".into(), outcomes: vec![false, false, true] },
            ]),
            ..Default::default()
        };
        let e = build_report(&a, &inputs).unwrap().evaluation.unwrap();
        assert_eq!(e.cards, 1);
        assert_eq!(e.excluded_raters, vec!["d2".to_string()]);
        let fam = e
            .likert
            .iter()
            .find(|r| r.scope == Scope::All && r.cohort.is_none() && r.distribution.item == LikertItem::Familiarity)
            .unwrap();
        assert_eq!(fam.distribution.counts[0], 1);
        assert_eq!(fam.distribution.total, 1);
    }

    #[test]
    fn dangling_match_is_rejected() {
        let inputs = EvaluationInputs {
            ground_truth: Some(vec![GroundTruthUse { gt_id: "1".into(), description: "d".into(), sources: vec![] }]),
            matches: Some(vec![CoverageMatch { gt_id: "1".into(), matched_use_ids: vec![UseId(99)], rationale: String::new(), advisory: false }]),
            attention: None,
        };
        assert!(matches!(build_report(&artifact(), &inputs), Err(ReportError::DanglingMatch { .. })));
    }
}
