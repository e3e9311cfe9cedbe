//! Chat-completion client with deterministic record/replay.
//!
//! Every request is keyed by its content digest. Replay never touches the
//! network; RecordLive stores one transcript file per digest.

use std::fmt;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use riskscope_core::ChatRequest;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Live,
    #[default]
    Replay,
    #[serde(rename = "record")]
    RecordLive,
}

impl Mode {
    pub fn tag(self) -> &'static str {
        match self {
            Mode::Live => "live",
            Mode::Replay => "replay",
            Mode::RecordLive => "record",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(Mode::Live),
            "replay" => Ok(Mode::Replay),
            "record" | "record_live" | "record-live" => Ok(Mode::RecordLive),
            other => Err(format!("unknown mode {other:?} (expected live, replay or record)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub request_digest: String,
    pub request: ChatRequest,
    pub response_text: String,
    pub recorded_at: String,
}

impl Transcript {
    pub fn new(request: ChatRequest, response_text: impl Into<String>, recorded_at: impl Into<String>) -> Self {
        Transcript { request_digest: request.digest(), request, response_text: response_text.into(), recorded_at: recorded_at.into() }
    }

    /// Stored digest agrees with the digest recomputed from the request.
    pub fn verify(&self) -> bool {
        self.request.digest() == self.request_digest
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("no transcript recorded for request {digest}")]
    TranscriptMiss { digest: String },
    #[error("transcript {digest} is unreadable: {reason}")]
    CorruptTranscript { digest: String, reason: String },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    TransportError { attempts: u32, message: String },
    #[error("provider answered with status {status}: {body}")]
    ProviderError { status: u16, body: String },
    #[error("provider response has no message content: {0}")]
    BadResponse(String),
    #[error("mode {0} needs a configured endpoint")]
    NoBackend(Mode),
    #[error("transcript store: {0}")]
    Store(#[from] io::Error),
}

impl GatewayError {
    /// Failures caused by the provider or the network rather than local state.
    pub fn is_network(&self) -> bool {
        matches!(self, GatewayError::TransportError { .. } | GatewayError::ProviderError { .. } | GatewayError::BadResponse(_))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            GatewayError::TranscriptMiss { .. } => "transcript_miss",
            GatewayError::CorruptTranscript { .. } => "corrupt_transcript",
            GatewayError::TransportError { .. } => "transport_error",
            GatewayError::ProviderError { .. } => "provider_error",
            GatewayError::BadResponse(_) => "bad_response",
            GatewayError::NoBackend(_) => "no_backend",
            GatewayError::Store(_) => "store",
        }
    }
}

/// Writes `bytes` to `path` through a sibling temp file and a rename, so
/// readers see either the old file or the complete new one.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::Builder::new().prefix(".tmp-").tempfile_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    // make the rename itself durable
    if let Ok(d) = fs::File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

/// Directory holding one `<digest>.json` file per transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptStore {
    dir: PathBuf,
}

impl TranscriptStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        TranscriptStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    pub fn load(&self, digest: &str) -> Result<Option<Transcript>, GatewayError> {
        let bytes = match fs::read(self.path(digest)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let corrupt = |reason: String| GatewayError::CorruptTranscript { digest: digest.to_string(), reason };
        let t: Transcript = serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))?;
        if t.request_digest != digest || !t.verify() {
            return Err(corrupt("digest does not match the stored request".into()));
        }
        Ok(Some(t))
    }

    pub fn save(&self, t: &Transcript) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(t).map_err(io::Error::other)?;
        text.push('\n');
        atomic_write(&self.path(&t.request_digest), text.as_bytes())
    }

    /// Sorted digests of every transcript file present.
    pub fn digests(&self) -> io::Result<Vec<String>> {
        let mut out = Vec::new();
        let entries = match fs::read_dir(&self.dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(e),
        };
        for entry in entries {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(d) = name.strip_suffix(".json") {
                if !d.starts_with('.') {
                    out.push(d.to_string());
                }
            }
        }
        out.sort();
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendError {
    Transport(String),
    Status { status: u16, body: String },
    BadResponse(String),
}

/// Something that can answer a chat request.
pub trait ChatBackend: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

/// OpenAI-compatible `POST {endpoint}` with model, messages and temperature.
pub struct HttpBackend {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        HttpBackend { endpoint: endpoint.into(), api_key, agent }
    }

    pub fn request_body(request: &ChatRequest) -> serde_json::Value {
        serde_json::json!({
            "model": request.model_name(),
            "messages": [
                {"role": "system", "content": request.system_text()},
                {"role": "user", "content": request.user_text()},
            ],
            "temperature": request.temperature(),
        })
    }
}

impl ChatBackend for HttpBackend {
    fn send(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let body = Self::request_body(request).to_string();
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = req.send(body.as_bytes()).map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Status { status, body: text });
        }
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| BackendError::BadResponse(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| BackendError::BadResponse(truncate(&text, 200)))
    }
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << retry.min(16))
    }
}

/// Shareable across threads; transcript writes are atomic per digest.
#[derive(Clone)]
pub struct Gateway {
    mode: Mode,
    backend: Option<Arc<dyn ChatBackend>>,
    store: TranscriptStore,
    sources: Vec<TranscriptStore>,
    retry: RetryPolicy,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode)
            .field("store", &self.store)
            .field("sources", &self.sources)
            .field("retry", &self.retry)
            .field("backend", &self.backend.is_some())
            .finish()
    }
}

impl Gateway {
    /// `store` receives recorded transcripts and copies of replayed ones.
    pub fn new(mode: Mode, store: TranscriptStore) -> Self {
        Gateway { mode, backend: None, store, sources: Vec::new(), retry: RetryPolicy::default() }
    }

    pub fn with_backend(mut self, backend: Arc<dyn ChatBackend>) -> Self {
        self.backend = Some(backend);
        self
    }

    /// Extra read-only transcript directory consulted in Replay mode.
    pub fn with_source(mut self, source: TranscriptStore) -> Self {
        self.sources.push(source);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn store(&self) -> &TranscriptStore {
        &self.store
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        match self.mode {
            Mode::Replay => self.replay(request),
            Mode::Live => self.call(request),
            Mode::RecordLive => {
                let text = self.call(request)?;
                self.store.save(&Transcript::new(request.clone(), text.clone(), now()))?;
                Ok(text)
            }
        }
    }

    fn replay(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let digest = request.digest();
        if let Some(t) = self.store.load(&digest)? {
            return Ok(t.response_text);
        }
        for s in &self.sources {
            if let Some(t) = s.load(&digest)? {
                self.store.save(&t)?;
                return Ok(t.response_text);
            }
        }
        Err(GatewayError::TranscriptMiss { digest })
    }

    fn call(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let backend = self.backend.as_ref().ok_or(GatewayError::NoBackend(self.mode))?;
        let mut attempt = 0u32;
        loop {
            let retryable = match backend.send(request) {
                Ok(text) => return Ok(text),
                Err(BackendError::BadResponse(m)) => return Err(GatewayError::BadResponse(m)),
                Err(BackendError::Status { status, body }) if status < 500 => {
                    return Err(GatewayError::ProviderError { status, body: truncate(&body, 500) })
                }
                Err(e) => e,
            };
            if attempt >= self.retry.max_retries {
                return Err(match retryable {
                    BackendError::Status { status, body } => GatewayError::ProviderError { status, body: truncate(&body, 500) },
                    BackendError::Transport(message) => GatewayError::TransportError { attempts: attempt + 1, message },
                    BackendError::BadResponse(m) => GatewayError::BadResponse(m),
                });
            }
            std::thread::sleep(self.retry.delay(attempt));
            attempt += 1;
        }
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use riskscope_core::ResponseHint;
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Mutex;

    fn req() -> ChatRequest {
        ChatRequest::new("sys", "user", 0.0, "gpt-4", ResponseHint::FreeText).unwrap()
    }

    struct Scripted {
        replies: Mutex<Vec<Result<String, BackendError>>>,
        calls: AtomicU32,
    }

    impl Scripted {
        fn new(mut replies: Vec<Result<String, BackendError>>) -> Arc<Self> {
            replies.reverse();
            Arc::new(Scripted { replies: Mutex::new(replies), calls: AtomicU32::new(0) })
        }
    }

    impl ChatBackend for Scripted {
        fn send(&self, _: &ChatRequest) -> Result<String, BackendError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.replies.lock().unwrap().pop().unwrap_or(Err(BackendError::Transport("script exhausted".into())))
        }
    }

    fn fast() -> RetryPolicy {
        RetryPolicy { max_retries: 3, base_delay: Duration::from_millis(1) }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("record".parse::<Mode>(), Ok(Mode::RecordLive));
        assert_eq!("Replay".parse::<Mode>(), Ok(Mode::Replay));
        assert!("offline".parse::<Mode>().is_err());
    }

    #[test]
    fn replay_miss_names_digest() {
        let dir = tempfile::tempdir().unwrap();
        let g = Gateway::new(Mode::Replay, TranscriptStore::new(dir.path()));
        match g.complete(&req()) {
            Err(GatewayError::TranscriptMiss { digest }) => assert_eq!(digest, req().digest()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn record_then_replay_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::new(dir.path());
        let text = "  {\"a\": 1}\n\u{e9}  ";
        let g = Gateway::new(Mode::RecordLive, store.clone()).with_backend(Scripted::new(vec![Ok(text.into())]));
        assert_eq!(g.complete(&req()).unwrap(), text);
        let t = store.load(&req().digest()).unwrap().unwrap();
        assert!(t.verify());
        let r = Gateway::new(Mode::Replay, store.clone());
        for _ in 0..3 {
            assert_eq!(r.complete(&req()).unwrap(), text);
        }
        assert_eq!(store.digests().unwrap(), vec![req().digest()]);
    }

    #[test]
    fn replay_copies_source_hits_into_run_store() {
        let src = tempfile::tempdir().unwrap();
        let run = tempfile::tempdir().unwrap();
        TranscriptStore::new(src.path()).save(&Transcript::new(req(), "x", "2024-01-01T00:00:00Z")).unwrap();
        let g = Gateway::new(Mode::Replay, TranscriptStore::new(run.path())).with_source(TranscriptStore::new(src.path()));
        assert_eq!(g.complete(&req()).unwrap(), "x");
        assert!(TranscriptStore::new(run.path()).load(&req().digest()).unwrap().is_some());
    }

    #[test]
    fn tampered_transcript_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::new(dir.path());
        let mut t = Transcript::new(req(), "x", "t");
        t.request = req().with_temperature(0.5).unwrap();
        fs::write(store.path(&t.request_digest), serde_json::to_string(&t).unwrap()).unwrap();
        assert!(matches!(store.load(&t.request_digest), Err(GatewayError::CorruptTranscript { .. })));
        fs::write(store.path("abc"), "{not json").unwrap();
        assert!(matches!(store.load("abc"), Err(GatewayError::CorruptTranscript { .. })));
    }

    #[test]
    fn retries_transport_and_5xx_then_succeeds() {
        let dir = tempfile::tempdir().unwrap();
        let b = Scripted::new(vec![
            Err(BackendError::Transport("reset".into())),
            Err(BackendError::Status { status: 503, body: "busy".into() }),
            Ok("fine".into()),
        ]);
        let g = Gateway::new(Mode::Live, TranscriptStore::new(dir.path())).with_backend(b.clone()).with_retry(fast());
        assert_eq!(g.complete(&req()).unwrap(), "fine");
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn gives_up_after_n_retries() {
        let dir = tempfile::tempdir().unwrap();
        let b = Scripted::new(vec![]);
        let g = Gateway::new(Mode::Live, TranscriptStore::new(dir.path())).with_backend(b.clone()).with_retry(fast());
        match g.complete(&req()) {
            Err(GatewayError::TransportError { attempts, .. }) => assert_eq!(attempts, 4),
            other => panic!("{other:?}"),
        }
        assert_eq!(b.calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let dir = tempfile::tempdir().unwrap();
        let b = Scripted::new(vec![Err(BackendError::Status { status: 401, body: "no key".into() })]);
        let g = Gateway::new(Mode::Live, TranscriptStore::new(dir.path())).with_backend(b.clone()).with_retry(fast());
        assert!(matches!(g.complete(&req()), Err(GatewayError::ProviderError { status: 401, .. })));
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn live_without_backend() {
        let dir = tempfile::tempdir().unwrap();
        let g = Gateway::new(Mode::Live, TranscriptStore::new(dir.path()));
        assert!(matches!(g.complete(&req()), Err(GatewayError::NoBackend(Mode::Live))));
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy { max_retries: 3, base_delay: Duration::from_millis(10) };
        assert_eq!([p.delay(0), p.delay(1), p.delay(2)], [10, 20, 40].map(Duration::from_millis));
    }
}
