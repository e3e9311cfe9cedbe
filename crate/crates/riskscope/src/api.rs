//! HTTP API over the run store.
//!
//! Reads have no side effects. `POST /runs` reserves a run, answers 202 with
//! the pending status and runs the stages on a background thread; clients
//! poll `GET /runs/{id}`. Errors are `{"error", "reason", "field"}` objects.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use riskscope_core::card::CardFields;
use riskscope_core::embed::Embedder;
use riskscope_core::overlooked::{CorpusIndex, OverlookedVerdict, PaperRecord, PercentileBasis};
use riskscope_core::risk::{ActCorpus, RiskSettings};
use riskscope_core::usesgen::{GenerationSettings, ParseMode, UsesGenTemplate};
use riskscope_core::{
    AnnotationCard, ClassificationAgreement, Cohort, DomainEntry, ExpertClassification, LikertItem, LikertScore,
    Realisticness, RiskAssessment, RiskTier, RunArtifact, TechnologyUse, UseId,
};

use crate::csv_io::export_annotations;
use crate::gateway::Mode;
use crate::pipeline::GenerateOptions;
use crate::report::{report_for, ReportError};
use crate::runner::{self, ClassifyJob, GatewaySetup, GenerateJob, OverlookedJob, RunError};
use crate::store::{RunStatus, Store, StoreError};

/// Literature inputs for the overlooked stage of API-triggered runs.
pub struct Literature {
    pub papers: Vec<PaperRecord>,
    pub index: CorpusIndex,
    pub embedder: Box<dyn Embedder + Send + Sync>,
}

/// What a `POST /runs` job runs with. Stages whose inputs are absent are skipped.
pub struct JobContext {
    pub setup: GatewaySetup,
    pub template: UsesGenTemplate,
    pub model: String,
    pub generation_temperature: Option<f64>,
    pub corpus: Option<ActCorpus>,
    pub literature: Option<Literature>,
    pub concurrency: usize,
}

#[derive(Clone)]
pub struct ApiState {
    pub store: Arc<Store>,
    pub jobs: Arc<JobContext>,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: &'static str,
    reason: String,
    field: Option<&'static str>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn bad(error: &'static str, reason: impl Into<String>, field: Option<&'static str>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, body: ErrorBody { error, reason: reason.into(), field } }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::UnknownRun(_) | StoreError::UnknownUse { .. } => StatusCode::NOT_FOUND,
            StoreError::RunExists(_) | StoreError::DuplicateCard { .. } | StoreError::NotReady(_) => StatusCode::CONFLICT,
            StoreError::InvalidRunId(_) | StoreError::Card(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let field = match &e {
            StoreError::Card(c) => Some(c.field()),
            _ => None,
        };
        ApiError { status, body: ErrorBody { error: e.kind(), reason: e.to_string(), field } }
    }
}

impl From<ReportError> for ApiError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Store(s) => s.into(),
            other => ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: ErrorBody { error: "evaluation_input", reason: other.to_string(), field: None },
            },
        }
    }
}

pub fn router(state: ApiState) -> Router {
    Router::new()
        .route("/runs", post(create_run).get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/uses", get(list_uses))
        .route("/runs/{id}/uses/{uid}", get(get_use))
        .route("/runs/{id}/uses/{uid}/annotations", post(post_annotation))
        .route("/runs/{id}/report", get(get_report))
        .route("/runs/{id}/export.csv", get(export_csv))
        .route("/catalog/domains", get(domains))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: ApiState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

fn known_run(store: &Store, id: &str) -> Result<(), ApiError> {
    crate::store::validate_run_id(id).map_err(|_| ApiError::from(StoreError::UnknownRun(id.into())))?;
    if store.exists(id) {
        Ok(())
    } else {
        Err(StoreError::UnknownRun(id.into()).into())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRun {
    pub technology: String,
    pub run_id: Option<String>,
    pub uses_per_domain: Option<u8>,
    pub percentile: Option<f64>,
    pub percentile_basis: Option<PercentileBasis>,
    pub mode: Option<Mode>,
    pub model: Option<String>,
}

async fn create_run(State(st): State<ApiState>, body: Result<Json<CreateRun>, axum::extract::rejection::JsonRejection>) -> Result<Response, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::bad("invalid_body", e.body_text(), None))?;
    if req.technology.trim().is_empty() {
        return Err(ApiError::bad("invalid_body", "technology is empty", Some("technology")));
    }
    let percentile = req.percentile.unwrap_or(runner::DEFAULT_PERCENTILE);
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(ApiError::bad("invalid_body", format!("percentile {percentile} outside (0, 100]"), Some("percentile")));
    }
    let template = match req.uses_per_domain {
        Some(n) => st.jobs.template.with_uses_per_domain(n).map_err(|e| ApiError::bad("invalid_body", e.to_string(), Some("uses_per_domain")))?,
        None => st.jobs.template.clone(),
    };
    let id = req.run_id.clone().unwrap_or_else(runner::new_run_id);
    st.store.reserve_run(&id)?;
    let status = st.store.status(&id)?;

    let mut setup = st.jobs.setup.clone();
    if let Some(m) = req.mode {
        setup.mode = m;
    }
    let mut settings = GenerationSettings::new(req.model.clone().unwrap_or_else(|| st.jobs.model.clone()));
    if let Some(t) = st.jobs.generation_temperature {
        settings.temperature = t;
    }
    let job = GenerateJob {
        run_id: id.clone(),
        technology: req.technology.trim().to_string(),
        template,
        options: GenerateOptions { settings, chunk_size: None, parse_mode: ParseMode::Lenient },
    };
    let basis = req.percentile_basis.unwrap_or_default();
    let (store, jobs) = (st.store.clone(), st.jobs.clone());
    std::thread::spawn(move || {
        let _ = run_job(&store, &jobs, &setup, job, percentile, basis);
    });
    Ok((StatusCode::ACCEPTED, Json(status)).into_response())
}

/// Runs every stage whose inputs are configured. Failures land in the run status.
pub fn run_job(store: &Store, jobs: &JobContext, setup: &GatewaySetup, job: GenerateJob, percentile: f64, basis: PercentileBasis) -> Result<(), RunError> {
    let id = job.run_id.clone();
    let model = job.options.settings.model_name.clone();
    runner::stage_generate(store, setup, &job)?;
    if let Some(corpus) = &jobs.corpus {
        let cj = ClassifyJob { run_id: id.clone(), corpus: corpus.clone(), settings: RiskSettings::new(model), concurrency: jobs.concurrency };
        runner::stage_classify(store, setup, &cj)?;
    }
    if let Some(lit) = &jobs.literature {
        let oj = OverlookedJob { run_id: id, papers: &lit.papers, index: &lit.index, embedder: lit.embedder.as_ref(), percentile, basis };
        runner::stage_overlooked(store, &oj)?;
    }
    Ok(())
}

async fn list_runs(State(st): State<ApiState>) -> Result<Json<Vec<RunStatus>>, ApiError> {
    let mut out = Vec::new();
    for id in st.store.list_runs()? {
        out.push(st.store.status(&id)?);
    }
    Ok(Json(out))
}

#[derive(Debug, Serialize)]
struct RunView {
    status: RunStatus,
    artifact: Option<RunArtifact>,
}

async fn get_run(State(st): State<ApiState>, Path(id): Path<String>) -> Result<Json<RunView>, ApiError> {
    known_run(&st.store, &id)?;
    let status = st.store.status(&id)?;
    let artifact = match st.store.load_run(&id) {
        Ok(a) => Some(a),
        Err(StoreError::NotReady(_)) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(Json(RunView { status, artifact }))
}

/// One use with its stage outputs.
#[derive(Debug, Clone, Serialize)]
pub struct UseView {
    #[serde(rename = "use")]
    pub record: TechnologyUse,
    pub risk: Option<RiskAssessment>,
    pub overlooked: Option<bool>,
}

fn use_view(a: &RunArtifact, u: &TechnologyUse) -> UseView {
    UseView { record: u.clone(), risk: a.risk_for(u.use_id).cloned(), overlooked: a.overlooked_for(u.use_id).map(OverlookedVerdict::overlooked) }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UseFilter {
    pub domain: Option<String>,
    pub risk: Option<String>,
    pub overlooked: Option<String>,
    pub realisticness: Option<String>,
}

struct ParsedFilter {
    domain: Option<String>,
    risk: Option<RiskTier>,
    overlooked: Option<bool>,
    realisticness: Option<Realisticness>,
}

impl UseFilter {
    fn parse(&self) -> Result<ParsedFilter, ApiError> {
        let blank = |s: &Option<String>| s.as_deref().map(str::trim).filter(|s| !s.is_empty()).map(str::to_string);
        let risk = match blank(&self.risk) {
            None => None,
            Some(s) => Some(
                s.parse::<RiskTier>()
                    .ok()
                    .or_else(|| RiskTier::from_surface(&s))
                    .ok_or_else(|| ApiError::bad("invalid_filter", format!("unknown risk tier {s:?}"), Some("risk")))?,
            ),
        };
        let overlooked = match blank(&self.overlooked).map(|s| s.to_ascii_lowercase()) {
            None => None,
            Some(s) if s == "true" || s == "1" => Some(true),
            Some(s) if s == "false" || s == "0" => Some(false),
            Some(s) => return Err(ApiError::bad("invalid_filter", format!("overlooked must be true or false, got {s:?}"), Some("overlooked"))),
        };
        let realisticness = match blank(&self.realisticness) {
            None => None,
            Some(s) => Some(
                Realisticness::from_surface(&s)
                    .ok_or_else(|| ApiError::bad("invalid_filter", format!("unknown realisticness {s:?}"), Some("realisticness")))?,
            ),
        };
        Ok(ParsedFilter { domain: blank(&self.domain), risk, overlooked, realisticness })
    }
}

async fn list_uses(
    State(st): State<ApiState>,
    Path(id): Path<String>,
    q: Result<Query<UseFilter>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<Vec<UseView>>, ApiError> {
    let Query(q) = q.map_err(|e| ApiError::bad("invalid_filter", e.body_text(), None))?;
    let f = q.parse()?;
    known_run(&st.store, &id)?;
    let a = st.store.load_run(&id)?;
    let out = a
        .uses
        .iter()
        .map(|u| use_view(&a, u))
        .filter(|v| f.domain.as_deref().is_none_or(|d| v.record.concepts.domain().eq_ignore_ascii_case(d)))
        .filter(|v| f.risk.is_none_or(|t| v.risk.as_ref().is_some_and(|r| r.classification == t)))
        .filter(|v| f.overlooked.is_none_or(|o| v.overlooked == Some(o)))
        .filter(|v| f.realisticness.is_none_or(|r| v.record.label() == r))
        .collect();
    Ok(Json(out))
}

#[derive(Debug, Serialize)]
struct UseDetail {
    #[serde(flatten)]
    view: UseView,
    verdict: Option<OverlookedVerdict>,
    failure: Option<riskscope_core::artifact::RiskFailure>,
    annotations: Vec<AnnotationCard>,
}

fn parse_uid(uid: &str) -> Result<UseId, ApiError> {
    uid.parse().map_err(|_| ApiError::bad("invalid_use_id", format!("{uid:?} is not a use id"), Some("use_id")))
}

async fn get_use(State(st): State<ApiState>, Path((id, uid)): Path<(String, String)>) -> Result<Json<UseDetail>, ApiError> {
    let uid = parse_uid(&uid)?;
    known_run(&st.store, &id)?;
    let a = st.store.load_run(&id)?;
    let u = a.find_use(uid).ok_or(StoreError::UnknownUse { run_id: id.clone(), use_id: uid })?;
    Ok(Json(UseDetail {
        view: use_view(&a, u),
        verdict: a.overlooked_for(uid).cloned(),
        failure: a.risk_failures.iter().find(|f| f.use_id == uid).cloned(),
        annotations: a.annotations.iter().filter(|c| c.use_id() == uid).cloned().collect(),
    }))
}

/// Card fields as submitted by a client; `scores` maps item keys to 1..=7.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CardBody {
    pub rater_id: String,
    pub cohort: String,
    pub realisticness_vote: String,
    pub scores: BTreeMap<String, i64>,
    pub classification_agreement: Option<String>,
    pub corrected_classification: Option<String>,
    pub reasoning_correction: Option<String>,
    pub usefulness_notes: Option<String>,
}

impl CardBody {
    pub fn into_card(self, use_id: UseId) -> Result<AnnotationCard, ApiError> {
        let invalid = |field: &'static str, reason: String| ApiError::bad("invalid_card", reason, Some(field));
        let cohort = Cohort::from_tag(self.cohort.trim()).ok_or_else(|| invalid("cohort", format!("unknown cohort {:?}", self.cohort)))?;
        let realisticness_vote = Realisticness::from_surface(&self.realisticness_vote)
            .ok_or_else(|| invalid("realisticness_vote", format!("unknown label {:?}", self.realisticness_vote)))?;
        let mut scores = Vec::new();
        for (k, v) in &self.scores {
            let item = LikertItem::from_key(k).ok_or_else(|| invalid("scores", format!("unknown item {k:?}")))?;
            let value = u8::try_from(*v).map_err(|_| invalid(item.key(), format!("{item} score {v} outside 1..=7")))?;
            scores.push(LikertScore::new(item, value).map_err(|e| invalid(e.field(), e.to_string()))?);
        }
        let nonblank = |s: Option<String>| s.map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
        let classification_agreement = match nonblank(self.classification_agreement) {
            None => None,
            Some(s) => Some(ClassificationAgreement::from_surface(&s).ok_or_else(|| invalid("classification_agreement", format!("unknown value {s:?}")))?),
        };
        let corrected_classification = match nonblank(self.corrected_classification) {
            None => None,
            Some(s) => Some(ExpertClassification::from_surface(&s).ok_or_else(|| invalid("corrected_classification", format!("unknown value {s:?}")))?),
        };
        AnnotationCard::new(CardFields {
            use_id,
            rater_id: self.rater_id.trim().to_string(),
            cohort,
            realisticness_vote,
            scores,
            classification_agreement,
            corrected_classification,
            reasoning_correction: nonblank(self.reasoning_correction),
            usefulness_notes: nonblank(self.usefulness_notes),
        })
        .map_err(|e| invalid(e.field(), e.to_string()))
    }
}

#[derive(Debug, Serialize)]
struct Ack {
    run_id: String,
    use_id: UseId,
    rater_id: String,
}

async fn post_annotation(
    State(st): State<ApiState>,
    Path((id, uid)): Path<(String, String)>,
    body: Result<Json<CardBody>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ApiError> {
    let uid = parse_uid(&uid)?;
    known_run(&st.store, &id)?;
    let Json(body) = body.map_err(|e| ApiError::bad("invalid_body", e.body_text(), None))?;
    let card = body.into_card(uid)?;
    // A resubmission is a duplicate even when identical.
    if !st.store.append_annotation(&id, &card)? {
        return Err(StoreError::DuplicateCard { use_id: uid, rater_id: card.rater_id().to_string() }.into());
    }
    let ack = Ack { run_id: id, use_id: uid, rater_id: card.rater_id().to_string() };
    Ok((StatusCode::CREATED, Json(ack)).into_response())
}

#[derive(Debug, Default, Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

async fn get_report(State(st): State<ApiState>, Path(id): Path<String>, Query(q): Query<ReportQuery>) -> Result<Response, ApiError> {
    known_run(&st.store, &id)?;
    let r = report_for(&st.store, &id)?;
    match q.format.as_deref() {
        None | Some("machine") => Ok(([(header::CONTENT_TYPE, "application/json")], r.to_machine()).into_response()),
        Some("text") => Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], r.render_text()).into_response()),
        Some(other) => Err(ApiError::bad("invalid_format", format!("unknown format {other:?}"), Some("format"))),
    }
}

async fn export_csv(State(st): State<ApiState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    known_run(&st.store, &id)?;
    let a = st.store.load_run(&id)?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], export_annotations(&a.annotations)).into_response())
}

async fn domains(State(st): State<ApiState>) -> Json<Vec<DomainEntry>> {
    Json(st.jobs.template.domains().entries().to_vec())
}
