//! Assessment cards: one rater's judgments on one use.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{normalize_label, Realisticness, RiskTier, UseId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cohort {
    Developer,
    ComplianceExpert,
}

impl Cohort {
    pub fn tag(self) -> &'static str {
        match self {
            Cohort::Developer => "developer",
            Cohort::ComplianceExpert => "compliance_expert",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        match normalize_label(s).as_str() {
            "developer" | "ai developer" => Some(Cohort::Developer),
            "compliance expert" | "compliance" => Some(Cohort::ComplianceExpert),
            _ => None,
        }
    }
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// The five 7-point items on every card.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikertItem {
    Familiarity,
    Adoption,
    Transformation,
    RiskSociety,
    RiskEnvironment,
}

impl LikertItem {
    pub const ALL: [LikertItem; 5] =
        [LikertItem::Familiarity, LikertItem::Adoption, LikertItem::Transformation, LikertItem::RiskSociety, LikertItem::RiskEnvironment];

    pub fn key(self) -> &'static str {
        match self {
            LikertItem::Familiarity => "familiarity",
            LikertItem::Adoption => "adoption",
            LikertItem::Transformation => "transformation",
            LikertItem::RiskSociety => "risk_society",
            LikertItem::RiskEnvironment => "risk_environment",
        }
    }

    pub fn from_key(s: &str) -> Option<Self> {
        LikertItem::ALL.into_iter().find(|i| i.key() == s)
    }

    /// Labels of the 1 and 7 anchors.
    pub fn anchors(self) -> (&'static str, &'static str) {
        match self {
            LikertItem::Familiarity => ("rarely", "always"),
            LikertItem::Adoption | LikertItem::Transformation => ("very unlikely", "very likely"),
            LikertItem::RiskSociety | LikertItem::RiskEnvironment => ("not risky at all", "unacceptably risky"),
        }
    }

    pub fn question(self) -> &'static str {
        match self {
            LikertItem::Familiarity => "How often do you come across references to this use in your work or reading?",
            LikertItem::Adoption => "How likely is this use to be adopted in practice?",
            LikertItem::Transformation => "How likely is this use to transform its domain?",
            LikertItem::RiskSociety => "How risky is this use for society?",
            LikertItem::RiskEnvironment => "How risky is this use for the environment?",
        }
    }
}

impl fmt::Display for LikertItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawScore")]
pub struct LikertScore {
    pub item: LikertItem,
    value: u8,
}

#[derive(Deserialize)]
struct RawScore {
    item: LikertItem,
    value: i64,
}

impl TryFrom<RawScore> for LikertScore {
    type Error = CardError;
    fn try_from(r: RawScore) -> Result<Self, Self::Error> {
        let v = u8::try_from(r.value).map_err(|_| CardError::ScoreOutOfRange { item: r.item, value: r.value })?;
        LikertScore::new(r.item, v)
    }
}

impl LikertScore {
    pub fn new(item: LikertItem, value: u8) -> Result<Self, CardError> {
        if !(1..=7).contains(&value) {
            return Err(CardError::ScoreOutOfRange { item, value: value as i64 });
        }
        Ok(LikertScore { item, value })
    }

    pub fn value(self) -> u8 {
        self.value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassificationAgreement {
    Agree,
    Disagree,
}

impl ClassificationAgreement {
    pub fn from_surface(s: &str) -> Option<Self> {
        match normalize_label(s).as_str() {
            "agree" | "yes" => Some(ClassificationAgreement::Agree),
            "disagree" | "no" => Some(ClassificationAgreement::Disagree),
            _ => None,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            ClassificationAgreement::Agree => "agree",
            ClassificationAgreement::Disagree => "disagree",
        }
    }
}

/// Label set an expert may assign; one wider than [`RiskTier`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertClassification {
    Prohibited,
    HighRisk,
    LimitedOrLowRisk,
    InsufficientInformation,
}

impl ExpertClassification {
    pub const ALL: [ExpertClassification; 4] = [
        ExpertClassification::Prohibited,
        ExpertClassification::HighRisk,
        ExpertClassification::LimitedOrLowRisk,
        ExpertClassification::InsufficientInformation,
    ];

    pub fn from_surface(s: &str) -> Option<Self> {
        if let Some(t) = RiskTier::from_surface(s) {
            return Some(t.into());
        }
        match normalize_label(s).as_str() {
            "insufficient information" | "insufficient information to assess the use" => {
                Some(ExpertClassification::InsufficientInformation)
            }
            _ => None,
        }
    }

    pub fn surface(self) -> &'static str {
        match self {
            ExpertClassification::Prohibited => "prohibited",
            ExpertClassification::HighRisk => "high risk",
            ExpertClassification::LimitedOrLowRisk => "limited or low risk",
            ExpertClassification::InsufficientInformation => "insufficient information",
        }
    }
}

impl From<RiskTier> for ExpertClassification {
    fn from(t: RiskTier) -> Self {
        match t {
            RiskTier::Prohibited => ExpertClassification::Prohibited,
            RiskTier::HighRisk => ExpertClassification::HighRisk,
            RiskTier::LimitedOrLowRisk => ExpertClassification::LimitedOrLowRisk,
        }
    }
}

impl fmt::Display for ExpertClassification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.surface())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CardError {
    #[error("rater id is empty")]
    EmptyRater,
    #[error("{item} score {value} outside 1..=7")]
    ScoreOutOfRange { item: LikertItem, value: i64 },
    #[error("missing {0} score")]
    MissingItem(LikertItem),
    #[error("{0} scored twice")]
    DuplicateItem(LikertItem),
    #[error("compliance experts must state classification agreement")]
    AgreementRequired,
    #[error("developer cards carry no classification agreement")]
    AgreementNotAllowed,
    #[error("a disagreement needs a corrected classification")]
    CorrectionRequired,
    #[error("a corrected classification is only allowed with a disagreement")]
    CorrectionNotAllowed,
}

impl CardError {
    /// Field the error is about, for per-field validation messages.
    pub fn field(&self) -> &'static str {
        match self {
            CardError::EmptyRater => "rater_id",
            CardError::ScoreOutOfRange { item, .. } | CardError::MissingItem(item) | CardError::DuplicateItem(item) => item.key(),
            CardError::AgreementRequired | CardError::AgreementNotAllowed => "classification_agreement",
            CardError::CorrectionRequired | CardError::CorrectionNotAllowed => "corrected_classification",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CardFields")]
pub struct AnnotationCard {
    use_id: UseId,
    rater_id: String,
    cohort: Cohort,
    realisticness_vote: Realisticness,
    scores: Vec<LikertScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    classification_agreement: Option<ClassificationAgreement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    corrected_classification: Option<ExpertClassification>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reasoning_correction: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    usefulness_notes: Option<String>,
}

/// Unvalidated card contents, as submitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardFields {
    pub use_id: UseId,
    pub rater_id: String,
    pub cohort: Cohort,
    pub realisticness_vote: Realisticness,
    pub scores: Vec<LikertScore>,
    #[serde(default)]
    pub classification_agreement: Option<ClassificationAgreement>,
    #[serde(default)]
    pub corrected_classification: Option<ExpertClassification>,
    #[serde(default)]
    pub reasoning_correction: Option<String>,
    #[serde(default)]
    pub usefulness_notes: Option<String>,
}

impl TryFrom<CardFields> for AnnotationCard {
    type Error = CardError;
    fn try_from(f: CardFields) -> Result<Self, Self::Error> {
        AnnotationCard::new(f)
    }
}

fn blank_to_none(s: Option<String>) -> Option<String> {
    s.map(|s| s.trim().to_string()).filter(|s| !s.is_empty())
}

impl AnnotationCard {
    pub fn new(f: CardFields) -> Result<Self, CardError> {
        let rater_id = f.rater_id.trim().to_string();
        if rater_id.is_empty() {
            return Err(CardError::EmptyRater);
        }
        let mut scores = f.scores;
        scores.sort();
        for w in scores.windows(2) {
            if w[0].item == w[1].item {
                return Err(CardError::DuplicateItem(w[0].item));
            }
        }
        for item in LikertItem::ALL {
            if !scores.iter().any(|s| s.item == item) {
                return Err(CardError::MissingItem(item));
            }
        }
        match (f.cohort, f.classification_agreement, f.corrected_classification) {
            (Cohort::Developer, Some(_), _) => return Err(CardError::AgreementNotAllowed),
            (Cohort::Developer, None, Some(_)) => return Err(CardError::CorrectionNotAllowed),
            (Cohort::ComplianceExpert, None, _) => return Err(CardError::AgreementRequired),
            (Cohort::ComplianceExpert, Some(ClassificationAgreement::Disagree), None) => {
                return Err(CardError::CorrectionRequired)
            }
            (Cohort::ComplianceExpert, Some(ClassificationAgreement::Agree), Some(_)) => {
                return Err(CardError::CorrectionNotAllowed)
            }
            _ => {}
        }
        Ok(AnnotationCard {
            use_id: f.use_id,
            rater_id,
            cohort: f.cohort,
            realisticness_vote: f.realisticness_vote,
            scores,
            classification_agreement: f.classification_agreement,
            corrected_classification: f.corrected_classification,
            reasoning_correction: blank_to_none(f.reasoning_correction),
            usefulness_notes: blank_to_none(f.usefulness_notes),
        })
    }

    pub fn use_id(&self) -> UseId {
        self.use_id
    }
    pub fn rater_id(&self) -> &str {
        &self.rater_id
    }
    pub fn cohort(&self) -> Cohort {
        self.cohort
    }
    pub fn realisticness_vote(&self) -> Realisticness {
        self.realisticness_vote
    }
    pub fn scores(&self) -> &[LikertScore] {
        &self.scores
    }
    pub fn classification_agreement(&self) -> Option<ClassificationAgreement> {
        self.classification_agreement
    }
    pub fn corrected_classification(&self) -> Option<ExpertClassification> {
        self.corrected_classification
    }
    pub fn reasoning_correction(&self) -> Option<&str> {
        self.reasoning_correction.as_deref()
    }
    pub fn usefulness_notes(&self) -> Option<&str> {
        self.usefulness_notes.as_deref()
    }

    pub fn score(&self, item: LikertItem) -> u8 {
        self.scores.iter().find(|s| s.item == item).map(|s| s.value()).expect("validated card has every item")
    }

    /// The classification this expert endorses, given the LLM's tier.
    pub fn expert_label(&self, llm_tier: RiskTier) -> Option<ExpertClassification> {
        match self.classification_agreement? {
            ClassificationAgreement::Agree => Some(llm_tier.into()),
            ClassificationAgreement::Disagree => self.corrected_classification,
        }
    }

    pub fn fields(&self) -> CardFields {
        CardFields {
            use_id: self.use_id,
            rater_id: self.rater_id.clone(),
            cohort: self.cohort,
            realisticness_vote: self.realisticness_vote,
            scores: self.scores.clone(),
            classification_agreement: self.classification_agreement,
            corrected_classification: self.corrected_classification,
            reasoning_correction: self.reasoning_correction.clone(),
            usefulness_notes: self.usefulness_notes.clone(),
        }
    }
}
