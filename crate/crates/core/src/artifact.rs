//! The self-contained record of one pipeline run.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::card::AnnotationCard;
use crate::model::{RiskAssessment, TechnologyUse, UseId};
use crate::overlooked::{Calibration, LiteratureStats, OverlookedVerdict, PercentileBasis};
use crate::usesgen::{StageCounts, UsesParseError};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model_name: String,
    pub generation_temperature: f64,
    pub classification_temperature: f64,
    pub uses_per_domain: u8,
    pub percentile: f64,
    #[serde(default)]
    pub percentile_basis: PercentileBasis,
    #[serde(default)]
    pub embedding_provider: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generate,
    Classify,
    Overlooked,
}

impl Stage {
    pub fn tag(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Classify => "classify",
            Stage::Overlooked => "overlooked",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRef {
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_id: Option<UseId>,
    pub digest: String,
}

/// A use whose classification failed; kept inline instead of aborting the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskFailure {
    pub use_id: UseId,
    pub stage: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GenerationReport {
    pub counts: StageCounts,
    pub skipped: Vec<UsesParseError>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArtifactError {
    #[error("unsupported schema version {0:?}")]
    SchemaVersion(String),
    #[error("run id is empty")]
    EmptyRunId,
    #[error("use id {0} appears twice")]
    DuplicateUse(UseId),
    #[error("{kind} record references unknown use {use_id}")]
    UnknownUse { kind: &'static str, use_id: UseId },
    #[error("rater {rater_id} has two cards for use {use_id}")]
    DuplicateCard { use_id: UseId, rater_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawArtifact")]
pub struct RunArtifact {
    pub schema_version: String,
    pub run_id: String,
    pub technology: String,
    pub config: RunConfig,
    pub uses: Vec<TechnologyUse>,
    pub risk: Vec<RiskAssessment>,
    #[serde(default)]
    pub risk_failures: Vec<RiskFailure>,
    pub overlooked: Vec<OverlookedVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub literature: Option<LiteratureStats>,
    pub annotations: Vec<AnnotationCard>,
    pub transcripts: Vec<TranscriptRef>,
    #[serde(default)]
    pub generation: GenerationReport,
    pub created_at: String,
}

#[derive(Deserialize)]
struct RawArtifact {
    schema_version: String,
    run_id: String,
    technology: String,
    config: RunConfig,
    uses: Vec<TechnologyUse>,
    risk: Vec<RiskAssessment>,
    #[serde(default)]
    risk_failures: Vec<RiskFailure>,
    overlooked: Vec<OverlookedVerdict>,
    #[serde(default)]
    calibration: Option<Calibration>,
    #[serde(default)]
    literature: Option<LiteratureStats>,
    annotations: Vec<AnnotationCard>,
    transcripts: Vec<TranscriptRef>,
    #[serde(default)]
    generation: GenerationReport,
    created_at: String,
}

impl TryFrom<RawArtifact> for RunArtifact {
    type Error = ArtifactError;
    fn try_from(r: RawArtifact) -> Result<Self, Self::Error> {
        let a = RunArtifact {
            schema_version: r.schema_version,
            run_id: r.run_id,
            technology: r.technology,
            config: r.config,
            uses: r.uses,
            risk: r.risk,
            risk_failures: r.risk_failures,
            overlooked: r.overlooked,
            calibration: r.calibration,
            literature: r.literature,
            annotations: r.annotations,
            transcripts: r.transcripts,
            generation: r.generation,
            created_at: r.created_at,
        };
        a.validate()?;
        Ok(a)
    }
}

impl RunArtifact {
    pub fn new(run_id: impl Into<String>, technology: impl Into<String>, config: RunConfig, created_at: impl Into<String>) -> Self {
        RunArtifact {
            schema_version: SCHEMA_VERSION.into(),
            run_id: run_id.into(),
            technology: technology.into(),
            config,
            uses: Vec::new(),
            risk: Vec::new(),
            risk_failures: Vec::new(),
            overlooked: Vec::new(),
            calibration: None,
            literature: None,
            annotations: Vec::new(),
            transcripts: Vec::new(),
            generation: GenerationReport::default(),
            created_at: created_at.into(),
        }
    }

    pub fn validate(&self) -> Result<(), ArtifactError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ArtifactError::SchemaVersion(self.schema_version.clone()));
        }
        if self.run_id.trim().is_empty() {
            return Err(ArtifactError::EmptyRunId);
        }
        let mut ids = BTreeSet::new();
        for u in &self.uses {
            if !ids.insert(u.use_id) {
                return Err(ArtifactError::DuplicateUse(u.use_id));
            }
        }
        let check = |kind: &'static str, id: UseId| {
            if ids.contains(&id) {
                Ok(())
            } else {
                Err(ArtifactError::UnknownUse { kind, use_id: id })
            }
        };
        for r in &self.risk {
            check("risk", r.use_id)?;
        }
        for r in &self.risk_failures {
            check("risk failure", r.use_id)?;
        }
        for v in &self.overlooked {
            check("overlooked", v.use_id)?;
        }
        let mut pairs = BTreeSet::new();
        for c in &self.annotations {
            check("annotation", c.use_id())?;
            if !pairs.insert((c.use_id(), c.rater_id())) {
                return Err(ArtifactError::DuplicateCard { use_id: c.use_id(), rater_id: c.rater_id().into() });
            }
        }
        Ok(())
    }

    pub fn find_use(&self, id: UseId) -> Option<&TechnologyUse> {
        self.uses.iter().find(|u| u.use_id == id)
    }

    pub fn risk_for(&self, id: UseId) -> Option<&RiskAssessment> {
        self.risk.iter().find(|r| r.use_id == id)
    }

    pub fn overlooked_for(&self, id: UseId) -> Option<&OverlookedVerdict> {
        self.overlooked.iter().find(|v| v.use_id == id)
    }

    pub fn overlooked_ids(&self) -> BTreeSet<UseId> {
        self.overlooked.iter().filter(|v| v.overlooked()).map(|v| v.use_id).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Realisticness, RealisticnessVerdict, RiskTier, UseConcepts};
    use alloc::vec;

    fn config() -> RunConfig {
        RunConfig {
            model_name: "gpt-4".into(),
            generation_temperature: 0.7,
            classification_temperature: 0.0,
            uses_per_domain: 3,
            percentile: 99.9,
            percentile_basis: PercentileBasis::PerPaper,
            embedding_provider: None,
        }
    }

    fn one_use(id: u32) -> TechnologyUse {
        let c = UseConcepts::new("Health", "p", "c", "u", "s").unwrap();
        TechnologyUse::new(UseId(id), c, RealisticnessVerdict::new(Realisticness::Upcoming, "j").unwrap(), None)
    }

    #[test]
    fn references_must_resolve() {
        let mut a = RunArtifact::new("R1", "FRA", config(), "2024-01-01T00:00:00Z");
        a.uses = vec![one_use(1), one_use(2)];
        assert!(a.validate().is_ok());
        a.risk.push(RiskAssessment::new(UseId(3), "d", RiskTier::LimitedOrLowRisk, None, "r").unwrap());
        assert_eq!(a.validate(), Err(ArtifactError::UnknownUse { kind: "risk", use_id: UseId(3) }));
        a.risk.clear();
        a.uses.push(one_use(2));
        assert_eq!(a.validate(), Err(ArtifactError::DuplicateUse(UseId(2))));
    }

    #[test]
    fn json_round_trip() {
        let mut a = RunArtifact::new("R1", "FRA", config(), "2024-01-01T00:00:00Z");
        a.uses = vec![one_use(1)];
        let s = serde_json::to_string(&a).unwrap();
        let b: RunArtifact = serde_json::from_str(&s).unwrap();
        assert_eq!(a, b);
        let bad = s.replace("\"schema_version\":\"1\"", "\"schema_version\":\"2\"");
        assert!(serde_json::from_str::<RunArtifact>(&bad).is_err());
    }
}
