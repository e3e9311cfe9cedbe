//! Shared setup for the integration tests: fixture paths, an in-process CLI
//! driver and a fully replayed fixture run.

#![allow(dead_code)]

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use riskscope::api::{ApiState, JobContext};
use riskscope::inputs::reference_template;
use riskscope::runner::GatewaySetup;
use riskscope::store::Store;

pub const TECHNOLOGY: &str = "Facial Recognition and Analysis";
pub const RUN: &str = "fixture-run";
/// The fixture corpus is calibrated at this percentile.
pub const FIXTURE_PERCENTILE: &str = "95";
/// Nothing listens here; any attempt to go live fails fast.
pub const DEAD_ENDPOINT: &str = "http://127.0.0.1:9/v1/chat/completions";

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture_run() -> PathBuf {
    fixtures().join("fixture_run")
}

pub struct CliOutput {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the CLI in-process with an empty environment.
pub fn cli(args: &[&str]) -> CliOutput {
    let argv: Vec<OsString> = std::iter::once("riskscope").chain(args.iter().copied()).map(OsString::from).collect();
    let env = |_: &str| None::<String>;
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = riskscope::cli::run(argv, &env, &mut out, &mut err);
    CliOutput { code, stdout: String::from_utf8_lossy(&out).into_owned(), stderr: String::from_utf8_lossy(&err).into_owned() }
}

fn p(path: &Path) -> String {
    path.to_str().expect("utf-8 path").to_string()
}

/// Replays generate, classify and overlooked into `store`; with `evaluate`
/// the shipped annotations and evaluation inputs are imported too.
pub fn replay_fixture_run(store: &Path, run: &str, evaluate: bool) {
    let f = fixture_run();
    let store = p(store);
    let transcripts = p(&f.join("transcripts"));
    let base = ["--store", store.as_str(), "--endpoint", DEAD_ENDPOINT, "--mode", "replay", "--transcripts", transcripts.as_str()];
    let stage = |rest: &[&str]| {
        let args: Vec<&str> = base.iter().copied().chain(rest.iter().copied()).collect();
        let o = cli(&args);
        assert_eq!(o.code, 0, "{rest:?} failed: {}{}", o.stdout, o.stderr);
        o
    };
    stage(&["generate", "--technology", TECHNOLOGY, "--run", run]);
    stage(&["classify", "--run", run]);
    let corpus = p(&f.join("corpus.jsonl"));
    stage(&["overlooked", "--run", run, "--corpus", corpus.as_str(), "--percentile", FIXTURE_PERCENTILE]);
    if evaluate {
        let ann = p(&f.join("annotations.csv"));
        let gt = p(&f.join("ground_truth.tsv"));
        let m = p(&f.join("coverage_matches.tsv"));
        let att = p(&f.join("attention_checks.csv"));
        stage(&[
            "evaluate",
            "--run",
            run,
            "--annotations",
            ann.as_str(),
            "--gt",
            gt.as_str(),
            "--matches",
            m.as_str(),
            "--attention",
            att.as_str(),
        ]);
    }
}

/// API state over `store` for read and annotation endpoints.
pub fn api_state(store: Store) -> ApiState {
    let jobs = JobContext {
        setup: GatewaySetup::default(),
        template: reference_template(),
        model: "gpt-4".into(),
        generation_temperature: None,
        corpus: None,
        literature: None,
        concurrency: 1,
    };
    ApiState { store: Arc::new(store), jobs: Arc::new(jobs) }
}

/// A running API server on an ephemeral port. Dropping it stops the runtime.
pub struct Server {
    pub base: String,
    _rt: tokio::runtime::Runtime,
}

pub fn serve(state: ApiState) -> Server {
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().expect("runtime");
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).expect("bind");
    let addr = listener.local_addr().expect("addr");
    rt.spawn(async move {
        let _ = riskscope::api::serve(listener, state).await;
    });
    Server { base: format!("http://{addr}"), _rt: rt }
}

pub fn http() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

/// GET returning status and body text.
pub fn get(agent: &ureq::Agent, url: &str) -> (u16, String) {
    let mut r = agent.get(url).call().expect("request");
    let status = r.status().as_u16();
    (status, r.body_mut().read_to_string().expect("body"))
}

pub fn post_json(agent: &ureq::Agent, url: &str, body: &serde_json::Value) -> (u16, String) {
    let mut r = agent.post(url).header("Content-Type", "application/json").send(body.to_string().as_bytes()).expect("request");
    let status = r.status().as_u16();
    (status, r.body_mut().read_to_string().expect("body"))
}
