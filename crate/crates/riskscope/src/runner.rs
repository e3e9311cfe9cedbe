//! Pipeline stages applied to stored runs, with status bookkeeping.

use std::path::PathBuf;
use std::sync::Arc;

use riskscope_core::artifact::{RunConfig, Stage};
use riskscope_core::embed::Embedder;
use riskscope_core::overlooked::{CorpusIndex, PaperRecord, PercentileBasis};
use riskscope_core::risk::{ActCorpus, RiskSettings};
use riskscope_core::usesgen::UsesGenTemplate;
use riskscope_core::RunArtifact;

use crate::gateway::{ChatBackend, Gateway, Mode, RetryPolicy, TranscriptStore};
use crate::pipeline::{classify_uses, generate_uses, run_overlooked, GenerateOptions, PipelineError};
use crate::store::{RunState, RunStatus, Store, StoreError};

pub const DEFAULT_PERCENTILE: f64 = 99.9;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Input(String),
}

impl RunError {
    /// Process exit status for this error class.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Input(_) => 1,
            RunError::Pipeline(p) if p.is_network() => 4,
            RunError::Pipeline(_) => 2,
            RunError::Store(_) => 3,
        }
    }
}

/// How to build each run's gateway.
#[derive(Clone, Default)]
pub struct GatewaySetup {
    pub mode: Mode,
    pub backend: Option<Arc<dyn ChatBackend>>,
    /// Read-only transcript directories searched in Replay mode.
    pub sources: Vec<PathBuf>,
    pub retry: RetryPolicy,
}

impl GatewaySetup {
    pub fn for_run(&self, store: &Store, run_id: &str) -> Gateway {
        let mut g = Gateway::new(self.mode, store.transcripts(run_id)).with_retry(self.retry);
        if let Some(b) = &self.backend {
            g = g.with_backend(b.clone());
        }
        for s in &self.sources {
            g = g.with_source(TranscriptStore::new(s));
        }
        g
    }
}

pub fn new_run_id() -> String {
    format!("run-{}", chrono::Utc::now().format("%Y%m%dT%H%M%S%3f"))
}

fn status(store: &Store, id: &str, state: RunState, progress: f64) -> Result<(), StoreError> {
    store.set_status(&RunStatus::new(id, state, progress, None))
}

/// Marks the run failed, keeping the first error.
fn failed<T>(store: &Store, id: &str, r: Result<T, RunError>) -> Result<T, RunError> {
    if let Err(e) = &r {
        let _ = store.set_status(&RunStatus::new(id, RunState::Failed, 0.0, Some(e.to_string())));
    }
    r
}

#[derive(Debug, Clone)]
pub struct GenerateJob {
    pub run_id: String,
    pub technology: String,
    pub template: UsesGenTemplate,
    pub options: GenerateOptions,
}

/// Generates uses into a reserved run and writes its first artifact.
pub fn stage_generate(store: &Store, setup: &GatewaySetup, job: &GenerateJob) -> Result<RunArtifact, RunError> {
    let id = job.run_id.as_str();
    status(store, id, RunState::Generating, 0.0)?;
    let r = (|| {
        let g = generate_uses(&setup.for_run(store, id), &job.technology, &job.template, &job.options)?;
        let config = RunConfig {
            model_name: job.options.settings.model_name.clone(),
            generation_temperature: job.options.settings.temperature,
            classification_temperature: riskscope_core::risk::DEFAULT_RISK_TEMPERATURE,
            uses_per_domain: job.template.uses_per_domain(),
            percentile: DEFAULT_PERCENTILE,
            percentile_basis: PercentileBasis::default(),
            embedding_provider: None,
        };
        let mut a = RunArtifact::new(id, job.technology.clone(), config, crate::gateway::now());
        a.uses = g.uses;
        a.generation = g.report;
        a.transcripts = g.transcripts;
        store.replace_artifact(&a)?;
        status(store, id, RunState::Ready, 1.0 / 3.0)?;
        Ok(a)
    })();
    failed(store, id, r)
}

#[derive(Debug, Clone)]
pub struct ClassifyJob {
    pub run_id: String,
    pub corpus: ActCorpus,
    pub settings: RiskSettings,
    pub concurrency: usize,
}

pub fn stage_classify(store: &Store, setup: &GatewaySetup, job: &ClassifyJob) -> Result<RunArtifact, RunError> {
    let id = job.run_id.as_str();
    let mut a = store.load_stored(id)?;
    status(store, id, RunState::Classifying, 1.0 / 3.0)?;
    let r = (|| {
        let c = classify_uses(&setup.for_run(store, id), &a.technology, &a.uses, &job.corpus, &job.settings, job.concurrency)?;
        a.risk = c.assessments;
        a.risk_failures = c.failures;
        a.transcripts.retain(|t| t.stage != Stage::Classify);
        a.transcripts.extend(c.transcripts);
        a.config.classification_temperature = job.settings.temperature;
        store.replace_artifact(&a)?;
        status(store, id, RunState::Ready, 2.0 / 3.0)?;
        Ok(a)
    })();
    failed(store, id, r)
}

pub struct OverlookedJob<'a> {
    pub run_id: String,
    pub papers: &'a [PaperRecord],
    pub index: &'a CorpusIndex,
    pub embedder: &'a dyn Embedder,
    pub percentile: f64,
    pub basis: PercentileBasis,
}

pub fn stage_overlooked(store: &Store, job: &OverlookedJob<'_>) -> Result<RunArtifact, RunError> {
    let id = job.run_id.as_str();
    let mut a = store.load_stored(id)?;
    status(store, id, RunState::Filtering, 2.0 / 3.0)?;
    let r = (|| {
        let f = run_overlooked(&a.uses, job.papers, job.index, job.embedder, job.percentile, job.basis)?;
        a.overlooked = f.verdicts;
        a.calibration = Some(f.calibration);
        a.literature = Some(f.literature);
        a.config.percentile = job.percentile;
        a.config.percentile_basis = job.basis;
        a.config.embedding_provider = Some(job.index.provider().to_string());
        store.replace_artifact(&a)?;
        status(store, id, RunState::Ready, 1.0)?;
        Ok(a)
    })();
    failed(store, id, r)
}
