//! Embedding providers that need IO, parallel index build and index files.

use std::fs;
use std::io::{self, Read as _, Write as _};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Duration;

use rayon::prelude::*;
use riskscope_core::embed::{EmbedError, Embedder, EmbeddingVector, HashedBagOfWords};
use riskscope_core::overlooked::{CorpusIndex, IndexError, PaperRecord};
use serde::{Deserialize, Serialize};

use crate::gateway::atomic_write;

/// OpenAI-compatible `POST {endpoint}` with `{model, input}`, reading
/// `data[0].embedding`.
pub struct RemoteEmbedder {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    dimension: usize,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>, dimension: usize, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        RemoteEmbedder { endpoint: endpoint.into(), model: model.into(), api_key, dimension, agent }
    }
}

fn parse_vector(v: &serde_json::Value) -> Result<Vec<f64>, EmbedError> {
    let arr = v.as_array().ok_or_else(|| EmbedError::Provider("embedding is not an array".into()))?;
    arr.iter().map(|x| x.as_f64().ok_or_else(|| EmbedError::Provider("non-numeric embedding entry".into()))).collect()
}

fn checked(values: Vec<f64>, dimension: usize) -> Result<EmbeddingVector, EmbedError> {
    if values.len() != dimension {
        return Err(EmbedError::DimensionMismatch { expected: dimension, got: values.len() });
    }
    EmbeddingVector::normalized(values)
}

impl Embedder for RemoteEmbedder {
    fn tag(&self) -> String {
        format!("remote:{}:{}", self.model, self.dimension)
    }
    fn dimension(&self) -> usize {
        self.dimension
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let body = serde_json::json!({"model": self.model, "input": text}).to_string();
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = req.send(body.as_bytes()).map_err(|e| EmbedError::Provider(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| EmbedError::Provider(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(EmbedError::Provider(format!("status {status}")));
        }
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| EmbedError::Provider(e.to_string()))?;
        let emb = v.pointer("/data/0/embedding").ok_or_else(|| EmbedError::Provider("missing data[0].embedding".into()))?;
        checked(parse_vector(emb)?, self.dimension)
    }
}

/// Runs a local model program once per text: the text goes to stdin, a
/// JSON array of numbers is expected on stdout.
pub struct CommandEmbedder {
    program: String,
    args: Vec<String>,
    dimension: usize,
}

impl CommandEmbedder {
    pub fn new(program: impl Into<String>, args: Vec<String>, dimension: usize) -> Self {
        CommandEmbedder { program: program.into(), args, dimension }
    }
}

impl Embedder for CommandEmbedder {
    fn tag(&self) -> String {
        let mut t = format!("command:{}", self.program);
        for a in &self.args {
            t.push(' ');
            t.push_str(a);
        }
        format!("{t}:{}", self.dimension)
    }
    fn dimension(&self) -> usize {
        self.dimension
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let provider = |e: io::Error| EmbedError::Provider(format!("{}: {e}", self.program));
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(provider)?;
        child.stdin.take().expect("piped stdin").write_all(text.as_bytes()).map_err(provider)?;
        let mut out = String::new();
        child.stdout.take().expect("piped stdout").read_to_string(&mut out).map_err(provider)?;
        let status = child.wait().map_err(provider)?;
        if !status.success() {
            return Err(EmbedError::Provider(format!("{} exited with {status}", self.program)));
        }
        let v: serde_json::Value = serde_json::from_str(out.trim()).map_err(|e| EmbedError::Provider(e.to_string()))?;
        checked(parse_vector(&v)?, self.dimension)
    }
}

/// Provider selection as it appears in configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    Hashed {
        #[serde(default = "default_dim")]
        dimension: usize,
    },
    Remote {
        endpoint: String,
        model: String,
        dimension: usize,
    },
    Command {
        program: String,
        #[serde(default)]
        args: Vec<String>,
        dimension: usize,
    },
}

fn default_dim() -> usize {
    HashedBagOfWords::DEFAULT_DIMENSION
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::Hashed { dimension: default_dim() }
    }
}

impl EmbedderSpec {
    pub fn build(&self, api_key: Option<String>, timeout: Duration) -> Box<dyn Embedder + Send + Sync> {
        match self {
            EmbedderSpec::Hashed { dimension } => Box::new(HashedBagOfWords::new(*dimension)),
            EmbedderSpec::Remote { endpoint, model, dimension } => {
                Box::new(RemoteEmbedder::new(endpoint.clone(), model.clone(), api_key, *dimension, timeout))
            }
            EmbedderSpec::Command { program, args, dimension } => Box::new(CommandEmbedder::new(program.clone(), args.clone(), *dimension)),
        }
    }
}

/// Embeds papers on the rayon pool; row order follows `papers`.
pub fn build_index_parallel<E: Embedder + Sync + ?Sized>(embedder: &E, papers: &[PaperRecord]) -> Result<CorpusIndex, IndexError> {
    let rows: Result<Vec<(String, EmbeddingVector)>, IndexError> = papers
        .par_iter()
        .map(|p| {
            embedder
                .embed(&p.embedding_text())
                .map(|v| (p.paper_id.clone(), v))
                .map_err(|source| IndexError::Embed { id: p.paper_id.clone(), source })
        })
        .collect();
    CorpusIndex::from_vectors(embedder.tag(), embedder.dimension(), rows?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub dimension: usize,
    pub count: usize,
    pub provider: String,
}

#[derive(Debug, thiserror::Error)]
pub enum IndexFileError {
    #[error("index io: {0}")]
    Io(#[from] io::Error),
    #[error("index.meta: {0}")]
    Meta(String),
    #[error("index.vec has {bytes} bytes, expected {expected}")]
    VectorSize { bytes: usize, expected: usize },
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Writes `index.meta`, `index.vec` (little-endian f32, row-major) and `index.ids`.
pub fn write_index(dir: &Path, index: &CorpusIndex) -> Result<(), IndexFileError> {
    fs::create_dir_all(dir)?;
    let meta = IndexMeta { dimension: index.dimension(), count: index.len(), provider: index.provider().to_string() };
    let meta = toml::to_string(&meta).map_err(|e| IndexFileError::Meta(e.to_string()))?;
    let mut vec = Vec::with_capacity(index.data().len() * 4);
    for x in index.data() {
        vec.extend_from_slice(&x.to_le_bytes());
    }
    let mut ids = String::new();
    for id in index.ids() {
        ids.push_str(id);
        ids.push('\n');
    }
    // meta goes last so a partial write never looks complete
    atomic_write(&dir.join("index.vec"), &vec)?;
    atomic_write(&dir.join("index.ids"), ids.as_bytes())?;
    atomic_write(&dir.join("index.meta"), meta.as_bytes())?;
    Ok(())
}

pub fn read_index(dir: &Path) -> Result<CorpusIndex, IndexFileError> {
    let meta: IndexMeta = toml::from_str(&fs::read_to_string(dir.join("index.meta"))?).map_err(|e| IndexFileError::Meta(e.to_string()))?;
    let bytes = fs::read(dir.join("index.vec"))?;
    let expected = meta.count * meta.dimension * 4;
    if bytes.len() != expected {
        return Err(IndexFileError::VectorSize { bytes: bytes.len(), expected });
    }
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    let ids: Vec<String> = fs::read_to_string(dir.join("index.ids"))?.lines().map(str::to_string).collect();
    if ids.len() != meta.count {
        return Err(IndexError::IdCount { ids: ids.len(), rows: meta.count }.into());
    }
    Ok(CorpusIndex::from_parts(meta.provider, meta.dimension, ids, data)?)
}

/// Reuses the index in `dir` when it was built by the same provider over the
/// same papers; otherwise builds and writes a fresh one.
pub fn load_or_build<E: Embedder + Sync + ?Sized>(dir: &Path, embedder: &E, papers: &[PaperRecord]) -> Result<CorpusIndex, IndexFileError> {
    if let Ok(existing) = read_index(dir) {
        let same_ids = existing.len() == papers.len() && existing.ids().iter().zip(papers).all(|(a, p)| *a == p.paper_id);
        if existing.provider() == embedder.tag() && existing.dimension() == embedder.dimension() && same_ids {
            return Ok(existing);
        }
    }
    let index = build_index_parallel(embedder, papers)?;
    write_index(dir, &index)?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn papers(n: usize) -> Vec<PaperRecord> {
        (0..n)
            .map(|i| PaperRecord {
                paper_id: format!("P{i:04}"),
                title: format!("Face matching study {i}"),
                abstract_text: format!("We evaluate recognition number {i} across cameras."),
                venue: Some("Venue".into()),
                language: Some("en".into()),
            })
            .collect()
    }

    #[test]
    fn parallel_build_matches_sequential() {
        let e = HashedBagOfWords::default();
        let p = papers(300);
        assert_eq!(build_index_parallel(&e, &p).unwrap(), CorpusIndex::build(&e, &p).unwrap());
    }

    #[test]
    fn index_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e = HashedBagOfWords::new(64);
        let idx = build_index_parallel(&e, &papers(20)).unwrap();
        write_index(dir.path(), &idx).unwrap();
        assert_eq!(read_index(dir.path()).unwrap(), idx);
        assert_eq!(fs::metadata(dir.path().join("index.vec")).unwrap().len(), 20 * 64 * 4);
        let meta = fs::read_to_string(dir.path().join("index.meta")).unwrap();
        assert!(meta.contains("dimension = 64") && meta.contains("count = 20"));
    }

    #[test]
    fn rebuilds_when_provider_changes() {
        let dir = tempfile::tempdir().unwrap();
        let p = papers(5);
        let a = load_or_build(dir.path(), &HashedBagOfWords::new(32), &p).unwrap();
        let b = load_or_build(dir.path(), &HashedBagOfWords::new(16), &p).unwrap();
        assert_eq!(a.dimension(), 32);
        assert_eq!(b.dimension(), 16);
        assert_eq!(read_index(dir.path()).unwrap().dimension(), 16);
    }

    #[test]
    fn truncated_vectors_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let idx = build_index_parallel(&HashedBagOfWords::new(8), &papers(3)).unwrap();
        write_index(dir.path(), &idx).unwrap();
        fs::write(dir.path().join("index.vec"), [0u8; 10]).unwrap();
        assert!(matches!(read_index(dir.path()), Err(IndexFileError::VectorSize { .. })));
    }

    #[cfg(unix)]
    #[test]
    fn command_embedder_reads_stdout() {
        let e = CommandEmbedder::new("sh", vec!["-c".into(), "cat >/dev/null; echo '[3, 4]'".into()], 2);
        let v = e.embed("anything").unwrap();
        assert!((v.values()[0] - 0.6).abs() < 1e-6);
        let bad = CommandEmbedder::new("sh", vec!["-c".into(), "cat >/dev/null; echo '[1]'".into()], 2);
        assert!(matches!(bad.embed("x"), Err(EmbedError::DimensionMismatch { .. })));
    }
}
