//! Shared value types: generated uses, realisticness verdicts and risk assessments.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::catalog::{DomainCatalog, DomainLookup};
use crate::risk::act_locations;

/// Run-scoped use number, rendered as decimal text ("use #N").
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UseId(pub u32);

impl UseId {
    pub fn new(n: u32) -> Self {
        UseId(n)
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for UseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid use id {0:?}")]
pub struct InvalidUseId(pub String);

impl FromStr for UseId {
    type Err = InvalidUseId;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().trim_start_matches('#');
        t.parse::<u32>().map(UseId).map_err(|_| InvalidUseId(s.to_string()))
    }
}

impl Serialize for UseId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for UseId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Realisticness {
    AlreadyExistent,
    Upcoming,
    Unlikely,
}

impl Realisticness {
    pub const ALL: [Realisticness; 3] = [Realisticness::AlreadyExistent, Realisticness::Upcoming, Realisticness::Unlikely];

    /// Accepts the surface forms a model or rater is likely to produce.
    pub fn from_surface(s: &str) -> Option<Self> {
        match normalize_label(s).as_str() {
            "already existent" | "already existing" | "existent" | "existing" | "already exists" => {
                Some(Realisticness::AlreadyExistent)
            }
            "upcoming" => Some(Realisticness::Upcoming),
            "unlikely" => Some(Realisticness::Unlikely),
            _ => None,
        }
    }

    pub fn surface(self) -> &'static str {
        match self {
            Realisticness::AlreadyExistent => "already existent",
            Realisticness::Upcoming => "upcoming",
            Realisticness::Unlikely => "unlikely",
        }
    }

    /// Already existent and upcoming uses both count as realistic.
    pub fn is_realistic(self) -> bool {
        !matches!(self, Realisticness::Unlikely)
    }
}

impl fmt::Display for Realisticness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.surface())
    }
}

/// Lowercases, maps `_`/`-` to spaces and collapses whitespace.
pub(crate) fn normalize_label(s: &str) -> String {
    let lowered: String = s.trim().to_lowercase().chars().map(|c| if c == '_' || c == '-' { ' ' } else { c }).collect();
    collapse_whitespace(&lowered)
}

pub(crate) fn collapse_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ConceptField {
    #[error("domain")]
    Domain,
    #[error("purpose")]
    Purpose,
    #[error("capability")]
    Capability,
    #[error("ai_user")]
    AiUser,
    #[error("ai_subject")]
    AiSubject,
}

impl ConceptField {
    pub const ALL: [ConceptField; 5] =
        [ConceptField::Domain, ConceptField::Purpose, ConceptField::Capability, ConceptField::AiUser, ConceptField::AiSubject];

    pub fn key(self) -> &'static str {
        match self {
            ConceptField::Domain => "domain",
            ConceptField::Purpose => "purpose",
            ConceptField::Capability => "capability",
            ConceptField::AiUser => "ai_user",
            ConceptField::AiSubject => "ai_subject",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("concept field `{0}` is empty")]
    EmptyConcept(ConceptField),
    #[error("realisticness justification is empty")]
    EmptyJustification,
    #[error("use summary is empty")]
    EmptySummary,
    #[error("risk assessment for use {0} has an empty description")]
    EmptyDescription(UseId),
    #[error("risk assessment for use {0} has no reasoning")]
    MissingReasoning(UseId),
    #[error("use {use_id} is classified {tier} without citing an Act location")]
    UncitedHighSeverity { use_id: UseId, tier: RiskTier },
}

/// The five risk concepts describing one use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawConcepts")]
pub struct UseConcepts {
    domain: String,
    purpose: String,
    capability: String,
    ai_user: String,
    ai_subject: String,
    /// Set when the domain did not resolve against the run's catalog.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    off_catalog: bool,
}

#[derive(Deserialize)]
struct RawConcepts {
    domain: String,
    purpose: String,
    capability: String,
    ai_user: String,
    ai_subject: String,
    #[serde(default)]
    off_catalog: bool,
}

impl TryFrom<RawConcepts> for UseConcepts {
    type Error = ModelError;
    fn try_from(r: RawConcepts) -> Result<Self, Self::Error> {
        let mut c = UseConcepts::new(r.domain, r.purpose, r.capability, r.ai_user, r.ai_subject)?;
        c.off_catalog = r.off_catalog;
        Ok(c)
    }
}

impl UseConcepts {
    pub fn new(
        domain: impl Into<String>,
        purpose: impl Into<String>,
        capability: impl Into<String>,
        ai_user: impl Into<String>,
        ai_subject: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let fields = [domain.into(), purpose.into(), capability.into(), ai_user.into(), ai_subject.into()];
        for (value, field) in fields.iter().zip(ConceptField::ALL) {
            if value.trim().is_empty() {
                return Err(ModelError::EmptyConcept(field));
            }
        }
        let [domain, purpose, capability, ai_user, ai_subject] = fields.map(|s| s.trim().to_string());
        Ok(UseConcepts { domain, purpose, capability, ai_user, ai_subject, off_catalog: false })
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }
    pub fn purpose(&self) -> &str {
        &self.purpose
    }
    pub fn capability(&self) -> &str {
        &self.capability
    }
    pub fn ai_user(&self) -> &str {
        &self.ai_user
    }
    pub fn ai_subject(&self) -> &str {
        &self.ai_subject
    }
    pub fn is_off_catalog(&self) -> bool {
        self.off_catalog
    }

    pub fn field(&self, f: ConceptField) -> &str {
        match f {
            ConceptField::Domain => &self.domain,
            ConceptField::Purpose => &self.purpose,
            ConceptField::Capability => &self.capability,
            ConceptField::AiUser => &self.ai_user,
            ConceptField::AiSubject => &self.ai_subject,
        }
    }

    /// Canonicalizes the domain spelling against `catalog`, or marks it off-catalog.
    pub fn resolve_domain(&mut self, catalog: &DomainCatalog) {
        match catalog.lookup(&self.domain) {
            DomainLookup::Entry(e) => {
                self.domain = e.name.clone();
                self.off_catalog = false;
            }
            DomainLookup::OffCatalog => self.off_catalog = true,
        }
    }

    /// Text embedded for corpus matching: `"purpose. capability. domain."`.
    pub fn description(&self) -> String {
        let parts = [&self.purpose, &self.capability, &self.domain];
        let mut out = String::new();
        for p in parts {
            let p = p.trim().trim_end_matches('.');
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(p);
            out.push('.');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawVerdict")]
pub struct RealisticnessVerdict {
    pub label: Realisticness,
    justification: String,
}

#[derive(Deserialize)]
struct RawVerdict {
    label: Realisticness,
    justification: String,
}

impl TryFrom<RawVerdict> for RealisticnessVerdict {
    type Error = ModelError;
    fn try_from(r: RawVerdict) -> Result<Self, Self::Error> {
        RealisticnessVerdict::new(r.label, r.justification)
    }
}

impl RealisticnessVerdict {
    pub fn new(label: Realisticness, justification: impl Into<String>) -> Result<Self, ModelError> {
        let justification = justification.into().trim().to_string();
        if justification.is_empty() {
            return Err(ModelError::EmptyJustification);
        }
        Ok(RealisticnessVerdict { label, justification })
    }

    pub fn justification(&self) -> &str {
        &self.justification
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TechnologyUse {
    pub use_id: UseId,
    pub concepts: UseConcepts,
    pub realisticness: RealisticnessVerdict,
    pub summary: String,
}

impl TechnologyUse {
    /// Builds a use; an absent or blank summary falls back to the purpose.
    pub fn new(use_id: UseId, concepts: UseConcepts, realisticness: RealisticnessVerdict, summary: Option<String>) -> Self {
        let summary = match summary {
            Some(s) if !s.trim().is_empty() => s.trim().to_string(),
            _ => concepts.purpose().to_string(),
        };
        TechnologyUse { use_id, concepts, realisticness, summary }
    }

    pub fn label(&self) -> Realisticness {
        self.realisticness.label
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskTier {
    Prohibited,
    HighRisk,
    LimitedOrLowRisk,
}

impl RiskTier {
    pub const ALL: [RiskTier; 3] = [RiskTier::Prohibited, RiskTier::HighRisk, RiskTier::LimitedOrLowRisk];

    /// Case-insensitive match on "prohibited", "high risk", "limited or low risk";
    /// hyphens and underscores count as spaces.
    pub fn from_surface(s: &str) -> Option<Self> {
        match normalize_label(s).as_str() {
            "prohibited" => Some(RiskTier::Prohibited),
            "high risk" => Some(RiskTier::HighRisk),
            "limited or low risk" => Some(RiskTier::LimitedOrLowRisk),
            _ => None,
        }
    }

    pub fn surface(self) -> &'static str {
        match self {
            RiskTier::Prohibited => "prohibited",
            RiskTier::HighRisk => "high risk",
            RiskTier::LimitedOrLowRisk => "limited or low risk",
        }
    }

    pub fn requires_citation(self) -> bool {
        !matches!(self, RiskTier::LimitedOrLowRisk)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for RiskTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.surface())
    }
}

impl FromStr for RiskTier {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RiskTier::from_surface(s).ok_or_else(|| format!("unknown risk tier {s:?}"))
    }
}

/// Quoted Act text with the locations detected in it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActCitation {
    pub text: String,
    pub locations: Vec<String>,
}

impl ActCitation {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into().trim().to_string();
        let locations = act_locations(&text);
        ActCitation { text, locations }
    }

    pub fn is_located(&self) -> bool {
        !self.locations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAssessment")]
pub struct RiskAssessment {
    pub use_id: UseId,
    pub description: String,
    pub classification: RiskTier,
    pub relevant_text: Option<ActCitation>,
    pub reasoning: String,
}

#[derive(Deserialize)]
struct RawAssessment {
    use_id: UseId,
    description: String,
    classification: RiskTier,
    relevant_text: Option<ActCitation>,
    reasoning: String,
}

impl TryFrom<RawAssessment> for RiskAssessment {
    type Error = ModelError;
    fn try_from(r: RawAssessment) -> Result<Self, Self::Error> {
        RiskAssessment::new(r.use_id, r.description, r.classification, r.relevant_text, r.reasoning)
    }
}

impl RiskAssessment {
    pub fn new(
        use_id: UseId,
        description: impl Into<String>,
        classification: RiskTier,
        relevant_text: Option<ActCitation>,
        reasoning: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let description = description.into().trim().to_string();
        let reasoning = reasoning.into().trim().to_string();
        if description.is_empty() {
            return Err(ModelError::EmptyDescription(use_id));
        }
        if reasoning.is_empty() {
            return Err(ModelError::MissingReasoning(use_id));
        }
        let relevant_text = relevant_text.filter(|c| !c.text.is_empty());
        if classification.requires_citation() && !relevant_text.as_ref().is_some_and(ActCitation::is_located) {
            return Err(ModelError::UncitedHighSeverity { use_id, tier: classification });
        }
        Ok(RiskAssessment { use_id, description, classification, relevant_text, reasoning })
    }
}
