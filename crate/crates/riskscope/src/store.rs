//! Flat-file run store.
//!
//! ```text
//! <root>/runs/<run_id>/artifact.json     replaced atomically
//! <root>/runs/<run_id>/status.json       replaced atomically
//! <root>/runs/<run_id>/annotations.log   append-only, one card per line
//! <root>/runs/<run_id>/transcripts/      one file per request digest
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fs::{self, OpenOptions};
use std::io::{self, Seek, SeekFrom, Write as _};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use riskscope_core::artifact::ArtifactError;
use riskscope_core::card::CardError;
use riskscope_core::{AnnotationCard, RunArtifact, UseId};
use serde::{Deserialize, Serialize};

use crate::gateway::{atomic_write, now, TranscriptStore};

pub const ARTIFACT_FILE: &str = "artifact.json";
pub const STATUS_FILE: &str = "status.json";
pub const ANNOTATION_LOG: &str = "annotations.log";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("run {0} already exists")]
    RunExists(String),
    #[error("unknown run {0}")]
    UnknownRun(String),
    #[error("run {0} has no artifact yet")]
    NotReady(String),
    #[error("run {run_id} has no use {use_id}")]
    UnknownUse { run_id: String, use_id: UseId },
    #[error("rater {rater_id} already annotated use {use_id}")]
    DuplicateCard { use_id: UseId, rater_id: String },
    #[error("invalid run id {0:?} (letters, digits, '.', '_' and '-' only)")]
    InvalidRunId(String),
    #[error("invalid card: {0}")]
    Card(#[from] CardError),
    #[error("invalid artifact: {0}")]
    Artifact(#[from] ArtifactError),
    #[error("{path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("store io: {0}")]
    Io(#[from] io::Error),
}

impl StoreError {
    pub fn kind(&self) -> &'static str {
        match self {
            StoreError::RunExists(_) => "run_exists",
            StoreError::UnknownRun(_) => "unknown_run",
            StoreError::NotReady(_) => "not_ready",
            StoreError::UnknownUse { .. } => "unknown_use",
            StoreError::DuplicateCard { .. } => "duplicate_card",
            StoreError::InvalidRunId(_) => "invalid_run_id",
            StoreError::Card(_) => "invalid_card",
            StoreError::Artifact(_) => "invalid_artifact",
            StoreError::Corrupt { .. } => "corrupt",
            StoreError::Io(_) => "io",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Pending,
    Generating,
    Classifying,
    Filtering,
    Ready,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub run_id: String,
    pub state: RunState,
    /// Fraction of pipeline stages finished, 0 to 1.
    pub progress: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub updated_at: String,
}

impl RunStatus {
    pub fn new(run_id: impl Into<String>, state: RunState, progress: f64, message: Option<String>) -> Self {
        RunStatus { run_id: run_id.into(), state, progress, message, updated_at: now() }
    }
}

pub fn validate_run_id(id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidRunId(id.into()))
    }
}

/// Reads and writes are safe from many threads; writes to one run are
/// serialized through a per-run lock.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("runs"))?;
        Ok(Store { root, locks: Mutex::new(HashMap::new()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, id: &str) -> PathBuf {
        self.root.join("runs").join(id)
    }

    pub fn transcripts(&self, id: &str) -> TranscriptStore {
        TranscriptStore::new(self.run_dir(id).join("transcripts"))
    }

    fn lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.locks.lock().unwrap_or_else(|e| e.into_inner()).entry(id.to_string()).or_default().clone()
    }

    fn existing_dir(&self, id: &str) -> Result<PathBuf, StoreError> {
        validate_run_id(id)?;
        let d = self.run_dir(id);
        if d.is_dir() {
            Ok(d)
        } else {
            Err(StoreError::UnknownRun(id.into()))
        }
    }

    pub fn exists(&self, id: &str) -> bool {
        validate_run_id(id).is_ok() && self.run_dir(id).is_dir()
    }

    /// Claims a fresh run directory with a `pending` status.
    pub fn reserve_run(&self, id: &str) -> Result<(), StoreError> {
        validate_run_id(id)?;
        let lock = self.lock(id);
        let _g = lock.lock().unwrap_or_else(|e| e.into_inner());
        match fs::create_dir(self.run_dir(id)) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => return Err(StoreError::RunExists(id.into())),
            Err(e) => return Err(e.into()),
        }
        self.write_status_locked(&RunStatus::new(id, RunState::Pending, 0.0, None))
    }

    /// Stores a new run; fails with `RunExists` when the id is taken.
    pub fn save_run(&self, artifact: &RunArtifact) -> Result<String, StoreError> {
        artifact.validate()?;
        self.reserve_run(&artifact.run_id)?;
        self.replace_artifact(artifact)?;
        self.set_status(&RunStatus::new(&artifact.run_id, RunState::Ready, 1.0, None))?;
        Ok(artifact.run_id.clone())
    }

    /// Atomically replaces the artifact of an existing run.
    pub fn replace_artifact(&self, artifact: &RunArtifact) -> Result<(), StoreError> {
        artifact.validate()?;
        let dir = self.existing_dir(&artifact.run_id)?;
        let lock = self.lock(&artifact.run_id);
        let _g = lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut text = serde_json::to_string_pretty(artifact).map_err(io::Error::other)?;
        text.push('\n');
        atomic_write(&dir.join(ARTIFACT_FILE), text.as_bytes())?;
        Ok(())
    }

    /// The artifact as last written, without the annotation log.
    pub fn load_stored(&self, id: &str) -> Result<RunArtifact, StoreError> {
        let path = self.existing_dir(id)?.join(ARTIFACT_FILE);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::NotReady(id.into())),
            Err(e) => return Err(e.into()),
        };
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt { path, reason: e.to_string() })
    }

    /// The artifact with every logged annotation appended.
    pub fn load_run(&self, id: &str) -> Result<RunArtifact, StoreError> {
        let mut a = self.load_stored(id)?;
        a.annotations.extend(self.logged_annotations(id)?);
        a.validate()?;
        Ok(a)
    }

    pub fn status(&self, id: &str) -> Result<RunStatus, StoreError> {
        let path = self.existing_dir(id)?.join(STATUS_FILE);
        match fs::read(&path) {
            Ok(b) => serde_json::from_slice(&b).map_err(|e| StoreError::Corrupt { path, reason: e.to_string() }),
            // runs copied in by hand have an artifact but no status
            Err(e) if e.kind() == io::ErrorKind::NotFound && self.run_dir(id).join(ARTIFACT_FILE).is_file() => {
                Ok(RunStatus { run_id: id.into(), state: RunState::Ready, progress: 1.0, message: None, updated_at: String::new() })
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn set_status(&self, status: &RunStatus) -> Result<(), StoreError> {
        self.existing_dir(&status.run_id)?;
        let lock = self.lock(&status.run_id);
        let _g = lock.lock().unwrap_or_else(|e| e.into_inner());
        self.write_status_locked(status)
    }

    fn write_status_locked(&self, status: &RunStatus) -> Result<(), StoreError> {
        let text = serde_json::to_string_pretty(status).map_err(io::Error::other)?;
        atomic_write(&self.run_dir(&status.run_id).join(STATUS_FILE), text.as_bytes())?;
        Ok(())
    }

    /// Run ids in name order.
    pub fn list_runs(&self) -> Result<Vec<String>, StoreError> {
        let mut out = Vec::new();
        for e in fs::read_dir(self.root.join("runs"))? {
            let e = e?;
            if e.file_type()?.is_dir() {
                let name = e.file_name().to_string_lossy().into_owned();
                if validate_run_id(&name).is_ok() {
                    out.push(name);
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Cards in the log. A final line without its newline is a torn append
    /// and is ignored; any other unreadable line is corruption.
    pub fn logged_annotations(&self, id: &str) -> Result<Vec<AnnotationCard>, StoreError> {
        let path = self.existing_dir(id)?.join(ANNOTATION_LOG);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let complete = match text.rfind('\n') {
            Some(i) => &text[..=i],
            None => "",
        };
        let mut out = Vec::new();
        for (n, line) in complete.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let card = serde_json::from_str(line)
                .map_err(|e| StoreError::Corrupt { path: path.clone(), reason: format!("line {}: {e}", n + 1) })?;
            out.push(card);
        }
        Ok(out)
    }

    /// Validates against the run and appends durably. Re-submitting an
    /// identical card is accepted without writing.
    pub fn append_annotation(&self, id: &str, card: &AnnotationCard) -> Result<bool, StoreError> {
        let dir = self.existing_dir(id)?;
        let lock = self.lock(id);
        let _g = lock.lock().unwrap_or_else(|e| e.into_inner());
        let stored = self.load_stored(id)?;
        if stored.find_use(card.use_id()).is_none() {
            return Err(StoreError::UnknownUse { run_id: id.into(), use_id: card.use_id() });
        }
        let logged = self.logged_annotations(id)?;
        if let Some(prev) = stored.annotations.iter().chain(&logged).find(|c| c.use_id() == card.use_id() && c.rater_id() == card.rater_id()) {
            if prev == card {
                return Ok(false);
            }
            return Err(StoreError::DuplicateCard { use_id: card.use_id(), rater_id: card.rater_id().into() });
        }
        let mut line = serde_json::to_string(card).map_err(io::Error::other)?;
        line.push('\n');
        let path = dir.join(ANNOTATION_LOG);
        let mut f = OpenOptions::new().create(true).read(true).append(true).open(&path)?;
        drop_torn_tail(&mut f)?;
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
        Ok(true)
    }

    /// Appends many cards, stopping at the first rejection.
    pub fn import_annotations(&self, id: &str, cards: &[AnnotationCard]) -> Result<usize, StoreError> {
        let mut seen = BTreeSet::new();
        for c in cards {
            if !seen.insert((c.use_id(), c.rater_id().to_string())) {
                return Err(StoreError::DuplicateCard { use_id: c.use_id(), rater_id: c.rater_id().into() });
            }
        }
        let mut added = 0;
        for c in cards {
            if self.append_annotation(id, c)? {
                added += 1;
            }
        }
        Ok(added)
    }

    /// Copies an evaluation input into the run directory.
    pub fn put_file(&self, id: &str, name: &str, bytes: &[u8]) -> Result<(), StoreError> {
        let dir = self.existing_dir(id)?;
        atomic_write(&dir.join(name), bytes)?;
        Ok(())
    }

    pub fn get_file(&self, id: &str, name: &str) -> Result<Option<Vec<u8>>, StoreError> {
        match fs::read(self.existing_dir(id)?.join(name)) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

/// Truncates a partial last line left by an interrupted append.
fn drop_torn_tail(f: &mut fs::File) -> io::Result<()> {
    let len = f.metadata()?.len();
    if len == 0 {
        return Ok(());
    }
    let text = {
        use std::io::Read as _;
        f.seek(SeekFrom::Start(0))?;
        let mut s = Vec::with_capacity(len as usize);
        f.read_to_end(&mut s)?;
        s
    };
    if text.last() == Some(&b'\n') {
        return Ok(());
    }
    let keep = text.iter().rposition(|b| *b == b'\n').map(|i| i + 1).unwrap_or(0);
    f.set_len(keep as u64)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use riskscope_core::artifact::RunConfig;
    use riskscope_core::card::CardFields;
    use riskscope_core::overlooked::PercentileBasis;
    use riskscope_core::{Cohort, LikertItem, LikertScore, Realisticness, RealisticnessVerdict, TechnologyUse, UseConcepts};

    pub(crate) fn artifact(id: &str) -> RunArtifact {
        let config = RunConfig {
            model_name: "gpt-4".into(),
            generation_temperature: 0.7,
            classification_temperature: 0.0,
            uses_per_domain: 3,
            percentile: 99.9,
            percentile_basis: PercentileBasis::PerPaper,
            embedding_provider: None,
        };
        let mut a = RunArtifact::new(id, "Facial Recognition", config, "2024-01-01T00:00:00Z");
        for i in 1..=3 {
            let c = UseConcepts::new("Health and Healthcare", format!("purpose {i}"), "cap", "user", "subject").unwrap();
            a.uses.push(TechnologyUse::new(UseId(i), c, RealisticnessVerdict::new(Realisticness::Upcoming, "j").unwrap(), None));
        }
        a
    }

    fn dev_card(use_id: u32, rater: &str, familiarity: u8) -> AnnotationCard {
        AnnotationCard::new(CardFields {
            use_id: UseId(use_id),
            rater_id: rater.into(),
            cohort: Cohort::Developer,
            realisticness_vote: Realisticness::Upcoming,
            scores: LikertItem::ALL.iter().map(|i| LikertScore::new(*i, if *i == LikertItem::Familiarity { familiarity } else { 4 }).unwrap()).collect(),
            classification_agreement: None,
            corrected_classification: None,
            reasoning_correction: None,
            usefulness_notes: None,
        })
        .unwrap()
    }

    #[test]
    fn save_load_round_trip_and_collision() {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::open(dir.path()).unwrap();
        let a = artifact("R1");
        assert_eq!(s.save_run(&a).unwrap(), "R1");
        assert_eq!(s.load_run("R1").unwrap(), a);
        assert!(matches!(s.save_run(&a), Err(StoreError::RunExists(_))));
        assert!(matches!(s.load_run("nope"), Err(StoreError::UnknownRun(_))));
        assert!(matches!(s.load_run("../etc"), Err(StoreError::InvalidRunId(_))));
        assert_eq!(s.status("R1").unwrap().state, RunState::Ready);
        assert_eq!(s.list_runs().unwrap(), vec!["R1"]);
    }

    #[test]
    fn annotations_append_and_reject_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::open(dir.path()).unwrap();
        s.save_run(&artifact("R1")).unwrap();
        assert!(s.append_annotation("R1", &dev_card(1, "dev-1", 6)).unwrap());
        assert!(!s.append_annotation("R1", &dev_card(1, "dev-1", 6)).unwrap());
        assert!(matches!(s.append_annotation("R1", &dev_card(1, "dev-1", 2)), Err(StoreError::DuplicateCard { .. })));
        assert!(matches!(s.append_annotation("R1", &dev_card(9, "dev-1", 2)), Err(StoreError::UnknownUse { .. })));
        assert!(matches!(s.append_annotation("R2", &dev_card(1, "dev-1", 2)), Err(StoreError::UnknownRun(_))));
        assert_eq!(s.load_run("R1").unwrap().annotations.len(), 1);
    }

    #[test]
    fn torn_log_tail_is_ignored_and_repaired() {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::open(dir.path()).unwrap();
        s.save_run(&artifact("R1")).unwrap();
        s.append_annotation("R1", &dev_card(1, "dev-1", 6)).unwrap();
        let log = s.run_dir("R1").join(ANNOTATION_LOG);
        let mut f = OpenOptions::new().append(true).open(&log).unwrap();
        f.write_all(b"{\"use_id\":2,\"rater").unwrap();
        drop(f);
        assert_eq!(s.logged_annotations("R1").unwrap().len(), 1);
        s.append_annotation("R1", &dev_card(2, "dev-1", 5)).unwrap();
        assert_eq!(s.logged_annotations("R1").unwrap().len(), 2);
        // a broken line in the middle is corruption, not a torn tail
        fs::write(&log, "garbage\n").unwrap();
        assert!(matches!(s.logged_annotations("R1"), Err(StoreError::Corrupt { .. })));
    }

    #[test]
    fn leftover_temp_file_does_not_shadow_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::open(dir.path()).unwrap();
        let a = artifact("R1");
        s.save_run(&a).unwrap();
        fs::write(s.run_dir("R1").join(".tmp-partial"), b"{\"schema_version\": \"1\", \"run_").unwrap();
        assert_eq!(s.load_run("R1").unwrap(), a);
    }

    #[test]
    fn run_ids_are_restricted() {
        for bad in ["", ".hidden", "a/b", "a b", "ü"] {
            assert!(validate_run_id(bad).is_err(), "{bad}");
        }
        validate_run_id("R1-2024.10_a").unwrap();
    }

    #[test]
    fn concurrent_appends_from_many_threads() {
        let dir = tempfile::tempdir().unwrap();
        let s = Arc::new(Store::open(dir.path()).unwrap());
        s.save_run(&artifact("R1")).unwrap();
        let handles: Vec<_> = (0..8)
            .map(|t| {
                let s = s.clone();
                std::thread::spawn(move || {
                    for u in 1..=3 {
                        s.append_annotation("R1", &dev_card(u, &format!("dev-{t}"), 3)).unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(s.load_run("R1").unwrap().annotations.len(), 24);
    }
}
