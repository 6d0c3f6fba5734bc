use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hygieia_core::domain::{validate_case, GeneFinding};
use hygieia_core::{Orchestrator, PatientCase, PipelineConfig, PipelineFailure, TaskKind, TaskOutput, TaskRequest};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use crate::error::ApiError;
use crate::jobs::{JobState, Jobs, ResultRef};
use crate::store::{OutcomeResult, Store};

/// Shared handler state.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    orchestrator: Arc<Orchestrator>,
    pipeline: PipelineConfig,
    store: Mutex<Store>,
    jobs: Jobs,
    token: Option<String>,
}

impl AppState {
    /// `token` of `None` disables authentication.
    pub fn new(orchestrator: Arc<Orchestrator>, pipeline: PipelineConfig, store: Store, token: Option<String>) -> Self {
        Self {
            inner: Arc::new(Inner {
                orchestrator,
                pipeline,
                store: Mutex::new(store),
                jobs: Jobs::default(),
                token,
            }),
        }
    }

    fn store(&self) -> MutexGuard<'_, Store> {
        self.inner.store.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Flushes the journals; called on shutdown.
    pub fn sync(&self) -> Result<(), crate::store::StoreError> {
        self.store().sync()
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_json(e.to_string()))
}

fn parse_optional_body<T: DeserializeOwned + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        Ok(T::default())
    } else {
        parse_body(body)
    }
}

fn trace_ref(case_id: &str, index: usize) -> String {
    format!("/cases/{case_id}/trace/{index}")
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateCase {
    id: Option<String>,
    #[serde(default)]
    phenotypes: Vec<String>,
    genes: Option<Vec<GeneFinding>>,
    record_text: Option<String>,
    source_tag: Option<String>,
}

async fn create_case(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateCase = parse_body(&body)?;
    let mut store = state.store();
    let id = match req.id {
        Some(id) => id,
        None => store.allocate_id(),
    };
    let case = validate_case(PatientCase {
        id,
        phenotypes: req.phenotypes,
        genes: req.genes,
        record_text: req.record_text,
        source_tag: req.source_tag,
    })?;
    let stored = store.create(case)?;
    let location = format!("/cases/{}", stored.case.id);
    let body = Json(json!({ "id": stored.case.id, "created_at": stored.created_at }));
    let mut resp = (StatusCode::CREATED, body).into_response();
    if let Ok(v) = HeaderValue::from_str(&location) {
        resp.headers_mut().insert(header::LOCATION, v);
    }
    Ok(resp)
}

#[derive(Serialize)]
struct CaseSummary<'a> {
    id: &'a str,
    created_at: chrono::DateTime<chrono::Utc>,
    outcome_count: usize,
}

async fn list_cases(State(state): State<AppState>) -> Json<Value> {
    let store = state.store();
    let list: Vec<CaseSummary> = store
        .iter()
        .map(|c| CaseSummary {
            id: &c.case.id,
            created_at: c.created_at,
            outcome_count: c.outcomes.len(),
        })
        .collect();
    Json(json!(list))
}

async fn get_case(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let store = state.store();
    let stored = store.get(&id).ok_or_else(|| ApiError::not_found(format!("case {id} not found")))?;
    Ok(Json(stored).into_response())
}

async fn get_trace(State(state): State<AppState>, Path((id, index)): Path<(String, usize)>) -> Result<Response, ApiError> {
    let store = state.store();
    let stored = store.get(&id).ok_or_else(|| ApiError::not_found(format!("case {id} not found")))?;
    let entry = stored
        .outcomes
        .get(index)
        .ok_or_else(|| ApiError::not_found(format!("case {id} has no outcome {index}")))?;
    Ok(Json(entry.result.trace()).into_response())
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunBody {
    config: Option<PipelineConfig>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyBody {
    #[serde(default)]
    proposed_diagnosis: String,
    config: Option<PipelineConfig>,
}

#[derive(Default, Deserialize)]
struct RunParams {
    #[serde(default, rename = "async")]
    run_async: bool,
}

/// Success payload: the task output with its trace replaced by a reference.
fn success_body(case_id: &str, index: usize, output: &TaskOutput) -> Value {
    let mut v = match output {
        TaskOutput::Outcome(o) => serde_json::to_value(o),
        TaskOutput::Verification(r) => {
            let mut v = serde_json::to_value(&r.verdict).expect("verdict serializes");
            v["proposed_diagnosis"] = json!(r.proposed_diagnosis);
            Ok(v)
        }
    }
    .expect("outcome serializes");
    if let Some(map) = v.as_object_mut() {
        map.remove("trace");
        map.insert("case_id".into(), json!(case_id));
        map.insert("outcome_index".into(), json!(index));
        map.insert("trace_ref".into(), json!(trace_ref(case_id, index)));
    }
    v
}

enum Finished {
    Ok { index: usize, output: TaskOutput },
    Failed { index: usize, error: ApiError },
}

/// Runs the pipeline and appends its outcome or failure to the case history.
async fn execute(state: &AppState, request: TaskRequest) -> Result<Finished, ApiError> {
    let result = state.inner.orchestrator.run(&request).await;
    let case_id = request.case.id.clone();
    let mut store = state.store();
    Ok(match result {
        Ok(output) => {
            let stored = match &output {
                TaskOutput::Outcome(o) => OutcomeResult::Diagnosis { outcome: o.clone() },
                TaskOutput::Verification(r) => OutcomeResult::Verification { run: r.clone() },
            };
            let index = store.append_outcome(&case_id, request.kind, stored)?;
            Finished::Ok { index, output }
        }
        Err(PipelineFailure { error, trace }) => {
            let mut api = ApiError::from(&error);
            let index = store.append_outcome(
                &case_id,
                request.kind,
                OutcomeResult::Failed {
                    error: error.to_string(),
                    raw: api.raw.clone(),
                    trace,
                },
            )?;
            api.outcome_index = Some(index);
            Finished::Failed { index, error: api }
        }
    })
}

fn load_case(state: &AppState, id: &str) -> Result<PatientCase, ApiError> {
    state
        .store()
        .get(id)
        .map(|c| c.case.clone())
        .ok_or_else(|| ApiError::not_found(format!("case {id} not found")))
}

async fn dispatch(state: AppState, request: TaskRequest, run_async: bool) -> Result<Response, ApiError> {
    request.validate().map_err(|e| ApiError::from(&e))?;
    let case_id = request.case.id.clone();
    if !run_async {
        return match execute(&state, request).await? {
            Finished::Ok { index, output } => Ok(Json(success_body(&case_id, index, &output)).into_response()),
            Finished::Failed { error, .. } => Err(error),
        };
    }
    let job = state.inner.jobs.submit(&case_id, request.kind);
    let job_id = job.job_id.clone();
    let worker = state.clone();
    tokio::spawn(async move {
        let jobs = &worker.inner.jobs;
        jobs.advance(&job_id, JobState::Running, None, None);
        let reference = |index| ResultRef {
            case_id: case_id.clone(),
            outcome_index: index,
            trace_ref: trace_ref(&case_id, index),
        };
        match execute(&worker, request).await {
            Ok(Finished::Ok { index, .. }) => jobs.advance(&job_id, JobState::Done, Some(reference(index)), None),
            Ok(Finished::Failed { index, error }) => {
                jobs.advance(&job_id, JobState::Failed, Some(reference(index)), Some(error.message))
            }
            Err(e) => jobs.advance(&job_id, JobState::Failed, None, Some(e.message)),
        };
    });
    let location = format!("/jobs/{}", job.job_id);
    let mut resp = (StatusCode::ACCEPTED, Json(job)).into_response();
    if let Ok(v) = HeaderValue::from_str(&location) {
        resp.headers_mut().insert(header::LOCATION, v);
    }
    Ok(resp)
}

async fn run_task(
    state: AppState,
    id: String,
    params: RunParams,
    body: Bytes,
    kind: TaskKind,
) -> Result<Response, ApiError> {
    let body: RunBody = parse_optional_body(&body)?;
    let case = load_case(&state, &id)?;
    let config = body.config.unwrap_or_else(|| state.inner.pipeline.clone());
    let request = match kind {
        TaskKind::PrioritizeGenes => TaskRequest::prioritize_genes(case, config),
        _ => TaskRequest::diagnose(case, config),
    };
    dispatch(state, request, params.run_async).await
}

async fn diagnose(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<RunParams>,
    body: Bytes,
) -> Result<Response, ApiError> {
    run_task(state, id, params, body, TaskKind::Diagnose).await
}

async fn prioritize_genes(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<RunParams>,
    body: Bytes,
) -> Result<Response, ApiError> {
    run_task(state, id, params, body, TaskKind::PrioritizeGenes).await
}

async fn verify(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<RunParams>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let body: VerifyBody = parse_body(&body)?;
    let case = load_case(&state, &id)?;
    let proposed = body.proposed_diagnosis.trim().to_string();
    if proposed.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "EmptyProposal", "proposed_diagnosis must not be empty")
            .field("proposed_diagnosis", "must not be empty"));
    }
    let config = body.config.unwrap_or_else(|| state.inner.pipeline.clone());
    dispatch(state, TaskRequest::verify(case, proposed, config), params.run_async).await
}

async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let job = state
        .inner
        .jobs
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("job {id} not found")))?;
    Ok(Json(job).into_response())
}

async fn usage(State(state): State<AppState>) -> Response {
    usage_body(&state).into_response()
}

fn usage_body(state: &AppState) -> Json<Value> {
    let report = state.inner.orchestrator.gateway().usage_report();
    let total = report.total();
    Json(json!({ "roles": report.roles, "total": total }))
}

async fn reset_usage(State(state): State<AppState>) -> Response {
    state.inner.orchestrator.gateway().reset_usage();
    usage_body(&state).into_response()
}

fn tokens_match(given: &[u8], expected: &[u8]) -> bool {
    given.len() == expected.len() && given.iter().zip(expected).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
}

async fn require_token(State(state): State<AppState>, request: Request, next: Next) -> Response {
    let Some(expected) = state.inner.token.as_deref() else {
        return next.run(request).await;
    };
    if request.uri().path() == "/health" || request.method() == Method::OPTIONS {
        return next.run(request).await;
    }
    let given = request
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .unwrap_or("");
    if tokens_match(given.as_bytes(), expected.as_bytes()) {
        next.run(request).await
    } else {
        ApiError::unauthorized().into_response()
    }
}

/// The full route table. `cors_origin` enables CORS for that one origin.
pub fn router(state: AppState, cors_origin: Option<&str>) -> Router {
    let mut app = Router::new()
        .route("/health", get(health))
        .route("/cases", post(create_case).get(list_cases))
        .route("/cases/{id}", get(get_case))
        .route("/cases/{id}/diagnose", post(diagnose))
        .route("/cases/{id}/prioritize-genes", post(prioritize_genes))
        .route("/cases/{id}/verify", post(verify))
        .route("/cases/{id}/trace/{index}", get(get_trace))
        .route("/jobs/{id}", get(get_job))
        .route("/usage", get(usage))
        .route("/usage/reset", post(reset_usage))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state);
    if let Some(origin) = cors_origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        app = app.layer(
            CorsLayer::new()
                .allow_origin(origin)
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([header::AUTHORIZATION, header::CONTENT_TYPE]),
        );
    }
    app
}
