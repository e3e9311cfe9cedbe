//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 usage or input, 2 pipeline, 3 store, 4 network.
//! Only `generate`, `classify`, `overlooked`, `evaluate` and `serve` (through
//! its API) write to the store.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use riskscope_core::embed::Embedder;
use riskscope_core::overlooked::{PercentileBasis, UntaggedPolicy};
use riskscope_core::risk::{risk_distribution, ActCorpus, RiskSettings};
use riskscope_core::usesgen::{GenerationSettings, ParseMode};
use riskscope_core::UseId;

use crate::api::{ApiState, JobContext, Literature};
use crate::config::{CliConfig, ConfigError, ConfigFlags};
use crate::embedders::{build_index_parallel, load_or_build, EmbedderSpec};
use crate::gateway::{ChatBackend, HttpBackend, Mode};
use crate::inputs::{load_act_corpus, load_template, read_corpus, reference_template};
use crate::pipeline::GenerateOptions;
use crate::report::{report_for, store_inputs, ReportError, ATTENTION_FILE, GROUND_TRUTH_FILE, MATCHES_FILE};
use crate::runner::{self, ClassifyJob, GatewaySetup, GenerateJob, OverlookedJob, RunError};
use crate::store::{Store, StoreError};

#[derive(Debug, Parser)]
#[command(name = "riskscope", version, about = "Generate technology uses, label their EU AI Act risk, find overlooked uses and evaluate annotations")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Store directory [env: RISKSCOPE_STORE]
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Config file [env: RISKSCOPE_CONFIG]
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Chat completion endpoint [env: RISKSCOPE_ENDPOINT]
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Model name [env: RISKSCOPE_MODEL]
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Gateway mode [env: RISKSCOPE_MODE]
    #[arg(long, value_enum, global = true)]
    pub mode: Option<ModeArg>,
    /// Retries on transport errors and 5xx [env: RISKSCOPE_RETRIES]
    #[arg(long, global = true)]
    pub retries: Option<u32>,
    /// Request timeout in seconds [env: RISKSCOPE_TIMEOUT]
    #[arg(long, global = true)]
    pub timeout: Option<u64>,
    /// Read-only transcript directory searched in replay mode; repeatable
    #[arg(long = "transcripts", global = true)]
    pub transcripts: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Machine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Live,
    Replay,
    Record,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Live => Mode::Live,
            ModeArg::Replay => Mode::Replay,
            ModeArg::Record => Mode::RecordLive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BasisArg {
    PerPaper,
    PerPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UntaggedArg {
    Keep,
    Drop,
    Heuristic,
}

#[derive(Debug, Args)]
pub struct LiteratureArgs {
    /// Paper dump, one JSON record per line
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = runner::DEFAULT_PERCENTILE)]
    pub percentile: f64,
    #[arg(long, value_enum, default_value_t = BasisArg::PerPaper)]
    pub basis: BasisArg,
    /// Handling of records without a language tag
    #[arg(long, value_enum, default_value_t = UntaggedArg::Keep)]
    pub untagged: UntaggedArg,
    /// TOML file selecting the embedding provider (default: hashed bag of words)
    #[arg(long)]
    pub embedder: Option<PathBuf>,
    /// Directory caching the paper index between runs
    #[arg(long)]
    pub index_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate uses into a new run (writes)
    Generate {
        #[arg(long)]
        technology: String,
        /// Run id; generated from the clock when absent
        #[arg(long)]
        run: Option<String>,
        /// Prompt template TOML (default: built-in reference template)
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        uses_per_domain: Option<u8>,
        /// Domains per request
        #[arg(long)]
        chunk_size: Option<usize>,
        /// Fail on the first malformed record instead of skipping it
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        temperature: Option<f64>,
    },
    /// Label the risk tier of every use in a run (writes)
    Classify {
        #[arg(long)]
        run: String,
        /// Act excerpts: a file or a directory of .txt files (default: built-in excerpts)
        #[arg(long)]
        act: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        concurrency: usize,
        #[arg(long)]
        temperature: Option<f64>,
    },
    /// Flag uses without supporting papers (writes)
    Overlooked {
        #[arg(long)]
        run: String,
        #[command(flatten)]
        literature: LiteratureArgs,
    },
    /// Import annotations and evaluation inputs, then print the evaluation (writes)
    Evaluate {
        #[arg(long)]
        run: String,
        /// Annotation cards CSV
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Ground-truth uses TSV
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Coverage decisions TSV
        #[arg(long)]
        matches: Option<PathBuf>,
        /// Attention-check outcomes CSV
        #[arg(long)]
        attention: Option<PathBuf>,
    },
    /// Print the run report
    Report {
        #[arg(long)]
        run: String,
    },
    /// Write the annotations of a run as CSV
    Export {
        #[arg(long)]
        run: String,
        /// Output file (default: standard output)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List runs and their states
    List,
    /// Serve the HTTP API
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        act: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        concurrency: usize,
        #[command(flatten)]
        literature: LiteratureArgs,
    },
    /// Rewrites a run's artifact and appends cards in a loop (crash testing)
    #[command(hide = true)]
    DebugRewrite {
        #[arg(long)]
        run: String,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn input(message: impl std::fmt::Display) -> Self {
        CliError { code: 1, message: message.to_string() }
    }
    fn pipeline(message: impl std::fmt::Display) -> Self {
        CliError { code: 2, message: message.to_string() }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        CliError { code: e.exit_code(), message: e.to_string() }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError { code: 3, message: e.to_string() }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::input(e)
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Store(s) => s.into(),
            other => CliError::input(other),
        }
    }
}

/// Parses `argv`, runs the command and returns the exit status.
pub fn run<I, T>(argv: I, env: &dyn Fn(&str) -> Option<String>, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    return 0;
                }
                _ => 1,
            };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    match execute(cli, env, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn resolve_config(g: &Global, env: &dyn Fn(&str) -> Option<String>) -> Result<CliConfig, CliError> {
    let flags = ConfigFlags {
        config: g.config.clone(),
        endpoint: g.endpoint.clone(),
        model: g.model.clone(),
        temperature: None,
        store: g.store.clone(),
        mode: g.mode.map(Mode::from),
        retries: g.retries,
        timeout_secs: g.timeout,
        transcript_sources: g.transcripts.clone(),
    };
    Ok(CliConfig::resolve(&flags, env)?)
}

fn gateway_setup(cfg: &CliConfig) -> GatewaySetup {
    let backend: Option<Arc<dyn ChatBackend>> = match cfg.mode {
        Mode::Replay => None,
        Mode::Live | Mode::RecordLive => Some(Arc::new(HttpBackend::new(cfg.endpoint.clone(), cfg.api_key.clone(), cfg.timeout))),
    };
    GatewaySetup { mode: cfg.mode, backend, sources: cfg.transcript_sources.clone(), retry: cfg.retry }
}

fn emit(out: &mut dyn Write, format: Format, text: &str, machine: &impl Serialize) -> Result<(), CliError> {
    let r = match format {
        Format::Text => out.write_all(text.as_bytes()),
        Format::Machine => {
            let mut s = serde_json::to_string_pretty(machine).expect("output serializes");
            s.push('\n');
            out.write_all(s.as_bytes())
        }
    };
    r.map_err(|e| CliError::input(format!("writing output: {e}")))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn act_corpus(path: Option<&Path>) -> Result<ActCorpus, CliError> {
    match path {
        Some(p) => load_act_corpus(p).map_err(CliError::input),
        None => Ok(ActCorpus::reference()),
    }
}

fn embedder_spec(path: Option<&Path>) -> Result<EmbedderSpec, CliError> {
    match path {
        None => Ok(EmbedderSpec::default()),
        Some(p) => toml::from_str(&read_text(p)?).map_err(|e| CliError::input(format!("{}: {e}", p.display()))),
    }
}

fn load_literature(cfg: &CliConfig, args: &LiteratureArgs, corpus: &Path) -> Result<Literature, CliError> {
    let untagged = match args.untagged {
        UntaggedArg::Keep => UntaggedPolicy::Keep,
        UntaggedArg::Drop => UntaggedPolicy::Drop,
        UntaggedArg::Heuristic => UntaggedPolicy::Heuristic,
    };
    let (papers, _) = read_corpus(corpus, untagged).map_err(CliError::input)?;
    let embedder = embedder_spec(args.embedder.as_deref())?.build(cfg.api_key.clone(), cfg.timeout);
    let index = match &args.index_dir {
        Some(dir) => load_or_build(dir, embedder.as_ref(), &papers).map_err(CliError::pipeline)?,
        None => build_index_parallel(embedder.as_ref(), &papers).map_err(CliError::pipeline)?,
    };
    Ok(Literature { papers, index, embedder })
}

fn basis(b: BasisArg) -> PercentileBasis {
    match b {
        BasisArg::PerPaper => PercentileBasis::PerPaper,
        BasisArg::PerPair => PercentileBasis::PerPair,
    }
}

fn check_percentile(p: f64) -> Result<(), CliError> {
    if p > 0.0 && p <= 100.0 {
        Ok(())
    } else {
        Err(CliError::input(format!("percentile {p} outside (0, 100]")))
    }
}

#[derive(Serialize)]
struct GenerateOut {
    run_id: String,
    uses: usize,
    unlikely: usize,
    counts: riskscope_core::usesgen::StageCounts,
    skipped: usize,
}

#[derive(Serialize)]
struct ClassifyOut {
    run_id: String,
    classified: usize,
    failures: Vec<riskscope_core::artifact::RiskFailure>,
    distribution: riskscope_core::risk::RiskDistribution,
}

#[derive(Serialize)]
struct OverlookedOut {
    run_id: String,
    overlooked: Vec<UseId>,
    threshold: f64,
    papers: usize,
}

fn execute(cli: Cli, env: &dyn Fn(&str) -> Option<String>, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = resolve_config(&cli.global, env)?;
    let format = cli.global.format;
    let store = || Store::open(&cfg.store).map_err(CliError::from);
    match cli.command {
        Command::Generate { technology, run, template, uses_per_domain, chunk_size, strict, temperature } => {
            if technology.trim().is_empty() {
                return Err(CliError::input("technology is empty"));
            }
            let mut tpl = match &template {
                Some(p) => load_template(p).map_err(CliError::input)?,
                None => reference_template(),
            };
            if let Some(n) = uses_per_domain {
                tpl = tpl.with_uses_per_domain(n).map_err(CliError::input)?;
            }
            if chunk_size == Some(0) {
                return Err(CliError::input("chunk size must be positive"));
            }
            let mut settings = GenerationSettings::new(cfg.model.clone());
            if let Some(t) = temperature.or(cfg.temperature) {
                settings.temperature = t;
            }
            let store = store()?;
            let run_id = run.unwrap_or_else(runner::new_run_id);
            store.reserve_run(&run_id)?;
            let job = GenerateJob {
                run_id: run_id.clone(),
                technology: technology.trim().into(),
                template: tpl,
                options: GenerateOptions { settings, chunk_size, parse_mode: if strict { ParseMode::Strict } else { ParseMode::Lenient } },
            };
            let a = runner::stage_generate(&store, &gateway_setup(&cfg), &job)?;
            let unlikely = a.uses.iter().filter(|u| !u.label().is_realistic()).count();
            let text = format!(
                "run {run_id}: {} uses ({} unlikely), {} records skipped\n",
                a.uses.len(),
                unlikely,
                a.generation.skipped.len()
            );
            let m = GenerateOut { run_id, uses: a.uses.len(), unlikely, counts: a.generation.counts, skipped: a.generation.skipped.len() };
            emit(out, format, &text, &m)
        }
        Command::Classify { run, act, concurrency, temperature } => {
            let store = store()?;
            // an unknown run is reported before any input is read
            store.load_stored(&run)?;
            let corpus = act_corpus(act.as_deref())?;
            let mut settings = RiskSettings::new(cfg.model.clone());
            if let Some(t) = temperature {
                settings.temperature = t;
            }
            let job = ClassifyJob { run_id: run.clone(), corpus, settings, concurrency: concurrency.max(1) };
            let a = runner::stage_classify(&store, &gateway_setup(&cfg), &job)?;
            let dist = risk_distribution(&a.risk);
            let mut text = format!("run {run}: {} uses classified, {} failed\n", a.risk.len(), a.risk_failures.len());
            for t in &dist.tiers {
                text.push_str(&format!("  {:<22}{:>5}\n", t.tier.surface(), t.count));
            }
            for f in &a.risk_failures {
                text.push_str(&format!("  use {} failed ({}): {}\n", f.use_id, f.kind, f.message));
            }
            let m = ClassifyOut { run_id: run, classified: a.risk.len(), failures: a.risk_failures.clone(), distribution: dist };
            emit(out, format, &text, &m)
        }
        Command::Overlooked { run, literature } => {
            let store = store()?;
            store.load_stored(&run)?;
            check_percentile(literature.percentile)?;
            let Some(corpus) = literature.corpus.as_deref() else {
                return Err(CliError::input("--corpus is required"));
            };
            let lit = load_literature(&cfg, &literature, corpus)?;
            let job = OverlookedJob {
                run_id: run.clone(),
                papers: &lit.papers,
                index: &lit.index,
                embedder: lit.embedder.as_ref() as &dyn Embedder,
                percentile: literature.percentile,
                basis: basis(literature.basis),
            };
            let a = runner::stage_overlooked(&store, &job)?;
            let ids: Vec<UseId> = a.overlooked_ids().into_iter().collect();
            let threshold = a.calibration.as_ref().map_or(0.0, |c| c.threshold);
            let text = format!(
                "run {run}: {} of {} uses overlooked (threshold {threshold:.4}, {} papers)\n",
                ids.len(),
                a.uses.len(),
                lit.papers.len()
            );
            emit(out, format, &text, &OverlookedOut { run_id: run, overlooked: ids, threshold, papers: lit.papers.len() })
        }
        Command::Evaluate { run, annotations, gt, matches, attention } => {
            let store = store()?;
            store.load_stored(&run)?;
            let mut imported = 0;
            if let Some(p) = &annotations {
                let cards = crate::csv_io::import_annotations(&read_text(p)?).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
                imported = store.import_annotations(&run, &cards)?;
            }
            for (path, name) in [(&gt, GROUND_TRUTH_FILE), (&matches, MATCHES_FILE), (&attention, ATTENTION_FILE)] {
                if let Some(p) = path {
                    store_inputs(&store, &run, name, &read_text(p)?, p)?;
                }
            }
            let r = report_for(&store, &run)?;
            let text = format!("{imported} new cards imported\n{}", r.render_text());
            emit(out, format, &text, &r.evaluation)
        }
        Command::Report { run } => {
            let store = store()?;
            let r = report_for(&store, &run)?;
            match format {
                Format::Text => emit(out, format, &r.render_text(), &()),
                Format::Machine => out.write_all(r.to_machine().as_bytes()).map_err(|e| CliError::input(format!("writing output: {e}"))),
            }
        }
        Command::Export { run, out: path } => {
            let store = store()?;
            let a = store.load_run(&run)?;
            let csv = crate::csv_io::export_annotations(&a.annotations);
            match path {
                Some(p) => std::fs::write(&p, csv).map_err(|e| CliError::input(format!("{}: {e}", p.display()))),
                None => out.write_all(csv.as_bytes()).map_err(|e| CliError::input(format!("writing output: {e}"))),
            }
        }
        Command::List => {
            let store = store()?;
            let mut rows = Vec::new();
            for id in store.list_runs()? {
                rows.push(store.status(&id)?);
            }
            let text: String = rows.iter().map(|s| format!("{:<32}{:<12}{:>5.0}%\n", s.run_id, format!("{:?}", s.state).to_lowercase(), s.progress * 100.0)).collect();
            emit(out, format, &text, &rows)
        }
        Command::Serve { port, host, template, act, concurrency, literature } => {
            check_percentile(literature.percentile)?;
            let store = Arc::new(store()?);
            let tpl = match &template {
                Some(p) => load_template(p).map_err(CliError::input)?,
                None => reference_template(),
            };
            let lit = match literature.corpus.as_deref() {
                Some(c) => Some(load_literature(&cfg, &literature, c)?),
                None => None,
            };
            let jobs = JobContext {
                setup: gateway_setup(&cfg),
                template: tpl,
                model: cfg.model.clone(),
                generation_temperature: cfg.temperature,
                corpus: Some(act_corpus(act.as_deref())?),
                literature: lit,
                concurrency: concurrency.max(1),
            };
            let state = ApiState { store, jobs: Arc::new(jobs) };
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::input(format!("starting runtime: {e}")))?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                    .await
                    .map_err(|e| CliError::input(format!("binding {host}:{port}: {e}")))?;
                let addr = listener.local_addr().map_err(|e| CliError::input(e.to_string()))?;
                let _ = writeln!(out, "listening on http://{addr}");
                let _ = out.flush();
                crate::api::serve(listener, state).await.map_err(|e| CliError { code: 4, message: format!("server: {e}") })
            })
        }
        Command::DebugRewrite { run, iterations } => {
            let store = store()?;
            let base = store.load_stored(&run)?;
            let template = base.uses.first().map(|u| u.use_id).ok_or_else(|| CliError::input("run has no uses"))?;
            for i in 0..iterations {
                let mut a = base.clone();
                if i % 2 == 1 {
                    a.created_at = DEBUG_ALT_CREATED_AT.into();
                }
                store.replace_artifact(&a)?;
                store.append_annotation(&run, &debug_card(template, i))?;
                std::thread::sleep(Duration::from_micros(50));
            }
            Ok(())
        }
    }
}

/// `created_at` written by odd `debug-rewrite` iterations.
pub const DEBUG_ALT_CREATED_AT: &str = "1999-12-31T23:59:59Z";

/// Card appended by `debug-rewrite` iteration `i`.
pub fn debug_card(use_id: UseId, i: usize) -> riskscope_core::AnnotationCard {
    use riskscope_core::card::CardFields;
    use riskscope_core::{Cohort, LikertItem, LikertScore, Realisticness};
    riskscope_core::AnnotationCard::new(CardFields {
        use_id,
        rater_id: format!("crash-{i:06}"),
        cohort: Cohort::Developer,
        realisticness_vote: Realisticness::Upcoming,
        scores: LikertItem::ALL.iter().map(|it| LikertScore::new(*it, (i % 7 + 1) as u8).expect("1..=7")).collect(),
        classification_agreement: None,
        corrected_classification: None,
        reasoning_correction: None,
        usefulness_notes: Some("x".repeat(i % 300)),
    })
    .expect("valid developer card")
}
