//! Job-oriented HTTP API over one corpus and its index.
//!
//! Clients upload a query CSV, submit a job referencing it and poll the job
//! until it is done. Finished jobs are written to the run store and reloaded
//! when the service starts again.

mod jobs;

pub use jobs::{now_ms, Job, JobState};

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;

use tablelift_core::lakeindex::JoinIndex;
use tablelift_core::mlkit::DiffFilter;
use tablelift_core::pipeline::{run_observed, RunConfig, RunResult, RunStore};
use tablelift_core::tablecore::{load_query_table, parse_csv, Corpus, TableError, TaskKind};

pub const DEFAULT_CONCURRENCY: usize = 2;
pub const DEFAULT_QUEUE_CAPACITY: usize = 32;
pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 50 * 1024 * 1024;
const PREVIEW_ROWS: usize = 20;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Jobs executing at once.
    pub concurrency: usize,
    /// Jobs queued or running before submissions are refused.
    pub queue_capacity: usize,
    pub max_upload_bytes: usize,
    /// Static assets served under `/ui`.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            concurrency: DEFAULT_CONCURRENCY,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
            ui_dir: None,
        }
    }
}

struct Upload {
    bytes: Vec<u8>,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

pub struct AppState {
    corpus: Arc<Corpus>,
    index: Arc<JoinIndex>,
    config: ServiceConfig,
    store: Option<RunStore>,
    uploads: RwLock<HashMap<String, Arc<Upload>>>,
    jobs: RwLock<HashMap<String, Arc<RwLock<Job>>>>,
    runners: Arc<Semaphore>,
    pending: AtomicUsize,
}

impl AppState {
    /// Jobs already in `store` are loaded as finished jobs. A job persisted
    /// mid-run cannot resume and is marked failed.
    pub fn new(
        corpus: Corpus,
        index: JoinIndex,
        config: ServiceConfig,
        store: Option<RunStore>,
    ) -> anyhow::Result<Self> {
        let mut jobs = HashMap::new();
        if let Some(store) = &store {
            for id in store.list()? {
                match load_job(store, &id) {
                    Some(mut job) => {
                        if !job.state.is_terminal() {
                            job.finish(Err("interrupted by a service restart".into()));
                        }
                        jobs.insert(id, Arc::new(RwLock::new(job)));
                    }
                    None => log::warn!("skipping unreadable run record {id}"),
                }
            }
        }
        let runners = Arc::new(Semaphore::new(config.concurrency.max(1)));
        Ok(Self {
            corpus: Arc::new(corpus),
            index: Arc::new(index),
            config,
            store,
            uploads: RwLock::default(),
            jobs: RwLock::new(jobs),
            runners,
            pending: AtomicUsize::new(0),
        })
    }

    fn job(&self, id: &str) -> Result<Arc<RwLock<Job>>, ApiError> {
        self.jobs
            .read()
            .expect("jobs lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("UnknownJob", format!("no job '{id}'")))
    }

    /// Runs `f` on a finished job's result; 409 while the job is still going.
    fn with_result<R>(
        &self,
        id: &str,
        f: impl FnOnce(&Job, &RunResult) -> R,
    ) -> Result<R, ApiError> {
        let handle = self.job(id)?;
        let job = handle.read().expect("job lock");
        match (&job.state, &job.result) {
            (JobState::Done, Some(result)) => Ok(f(&job, result)),
            (JobState::Failed, _) => Err(ApiError::conflict(
                "JobFailed",
                job.error.clone().unwrap_or_else(|| "job failed".into()),
            )),
            (state, _) => Err(ApiError::conflict(
                "JobNotFinished",
                format!("job is {}", serde_json::to_value(state).unwrap_or_default()),
            )),
        }
    }

    fn persist(&self, job: &Job) {
        if let Some(store) = &self.store {
            if let Err(e) = store.save(&job.id, job) {
                log::error!("could not persist job {}: {e}", job.id);
            }
        }
    }
}

fn load_job(store: &RunStore, id: &str) -> Option<Job> {
    if let Ok(Some(job)) = store.load::<Job>(id) {
        return Some(job);
    }
    store
        .load_run(id)
        .ok()
        .flatten()
        .map(|r| Job::from_run(id.to_string(), r))
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
        }
    }

    fn bad_request(kind: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, kind, message)
    }

    fn not_found(kind: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, kind, message)
    }

    fn conflict(kind: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, kind, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.kind, "message": self.message })),
        )
            .into_response()
    }
}

fn table_error(e: TableError) -> ApiError {
    let kind = match e {
        TableError::UnknownColumn(_) => "UnknownColumn",
        TableError::KeyEqualsTask => "KeyEqualsTask",
        TableError::MalformedCsv(_) => "MalformedCsv",
        _ => "InvalidTable",
    };
    ApiError::bad_request(kind, e.to_string())
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.max_upload_bytes;
    let ui = match &state.config.ui_dir {
        Some(dir) => Router::new().fallback_service(ServeDir::new(dir)),
        None => Router::new().fallback(|| async {
            ApiError::not_found("NoUi", "service started without a ui directory")
        }),
    };
    Router::new()
        .route("/api/health", get(health))
        .route("/api/tables", post(upload_table))
        .route("/api/tables/{token}", get(table_preview))
        .route("/api/jobs", post(submit_job).get(list_jobs))
        .route("/api/jobs/{id}", get(job_status))
        .route("/api/jobs/{id}/provenance", get(provenance))
        .route("/api/jobs/{id}/results", get(results))
        .route("/api/jobs/{id}/enriched.csv", get(enriched_csv))
        .route("/api/jobs/{id}/diffs", get(diffs))
        .nest("/ui", ui)
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

async fn health(State(s): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "tables": s.corpus.len(),
        "indexed_cells": s.index.doc_count(),
        "concurrency": s.config.concurrency,
    }))
}

async fn upload_table(
    State(s): State<Arc<AppState>>,
    mut form: Multipart,
) -> Result<Response, ApiError> {
    let field_err = |e: axum::extract::multipart::MultipartError| {
        ApiError::new(e.status(), "BadUpload", e.body_text())
    };
    let mut bytes = None;
    while let Some(field) = form.next_field().await.map_err(field_err)? {
        if field.file_name().is_some() || field.name() == Some("file") {
            bytes = Some(field.bytes().await.map_err(field_err)?);
            break;
        }
    }
    let bytes = bytes
        .ok_or_else(|| ApiError::bad_request("BadUpload", "multipart body has no file field"))?;
    let (columns, rows) = parse_csv(&bytes).map_err(table_error)?;
    let token = uuid::Uuid::new_v4().simple().to_string();
    let body = json!({ "table_token": token, "columns": columns, "row_count": rows.len() });
    s.uploads.write().expect("uploads lock").insert(
        token,
        Arc::new(Upload {
            bytes: bytes.to_vec(),
            columns,
            rows,
        }),
    );
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn table_preview(
    State(s): State<Arc<AppState>>,
    Path(token): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let upload = s
        .uploads
        .read()
        .expect("uploads lock")
        .get(&token)
        .cloned()
        .ok_or_else(|| {
            ApiError::not_found("UnknownTable", format!("no uploaded table '{token}'"))
        })?;
    Ok(Json(json!({
        "table_token": token,
        "columns": upload.columns,
        "row_count": upload.rows.len(),
        "preview": &upload.rows[..upload.rows.len().min(PREVIEW_ROWS)],
    })))
}

#[derive(Debug, Deserialize)]
struct JobRequest {
    table_token: String,
    key: String,
    task: String,
    #[serde(default = "default_task_kind")]
    task_kind: TaskKind,
    #[serde(default)]
    config: RunConfig,
}

fn default_task_kind() -> TaskKind {
    TaskKind::Regression
}

async fn submit_job(State(s): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: JobRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request("InvalidRequest", e.to_string()))?;
    let upload = s
        .uploads
        .read()
        .expect("uploads lock")
        .get(&req.table_token)
        .cloned()
        .ok_or_else(|| {
            ApiError::bad_request(
                "UnknownTable",
                format!("no uploaded table '{}'", req.table_token),
            )
        })?;
    let query =
        load_query_table(&upload.bytes, &req.key, &req.task, req.task_kind).map_err(table_error)?;
    req.config
        .validate()
        .map_err(|e| ApiError::bad_request("InvalidConfig", e.to_string()))?;

    if s.pending.fetch_add(1, Ordering::SeqCst) >= s.config.queue_capacity {
        s.pending.fetch_sub(1, Ordering::SeqCst);
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "QueueFull",
            format!("{} jobs already queued or running", s.config.queue_capacity),
        ));
    }
    let id = uuid::Uuid::new_v4().simple().to_string();
    let job = Arc::new(RwLock::new(Job::queued(
        id.clone(),
        req.config.clone(),
        req.key,
        req.task,
        req.task_kind,
    )));
    s.jobs
        .write()
        .expect("jobs lock")
        .insert(id.clone(), job.clone());
    tokio::spawn(execute(s.clone(), job, query, req.config));
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": id }))).into_response())
}

async fn execute(
    s: Arc<AppState>,
    job: Arc<RwLock<Job>>,
    query: tablelift_core::tablecore::QueryTable,
    config: RunConfig,
) {
    let permit = s
        .runners
        .clone()
        .acquire_owned()
        .await
        .expect("semaphore never closes");
    let (corpus, index, progress) = (s.corpus.clone(), s.index.clone(), job.clone());
    let outcome = tokio::task::spawn_blocking(move || {
        run_observed(&config, &query, &corpus, &index, &mut |stage| {
            progress.write().expect("job lock").advance(stage.into());
        })
    })
    .await;
    drop(permit);
    let outcome = match outcome {
        Ok(Ok(result)) => Ok(result),
        Ok(Err(e)) => Err(e.to_string()),
        Err(e) => Err(format!("job aborted: {e}")),
    };
    let snapshot = {
        let mut j = job.write().expect("job lock");
        j.finish(outcome);
        j.clone()
    };
    s.persist(&snapshot);
    s.pending.fetch_sub(1, Ordering::SeqCst);
    log::info!("job {} finished as {:?}", snapshot.id, snapshot.state);
}

#[derive(Debug, Serialize)]
struct Links {
    results: String,
    provenance: String,
    enriched_csv: String,
    diffs: String,
}

#[derive(Debug, Serialize)]
struct JobStatus<'a> {
    id: &'a str,
    state: JobState,
    config: &'a RunConfig,
    key: &'a str,
    task: &'a str,
    task_kind: TaskKind,
    submitted_ms: u64,
    started_ms: Option<u64>,
    finished_ms: Option<u64>,
    error: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    links: Option<Links>,
}

fn status_of(job: &Job) -> Value {
    let links = (job.state == JobState::Done).then(|| {
        let base = format!("/api/jobs/{}", job.id);
        Links {
            results: format!("{base}/results"),
            provenance: format!("{base}/provenance"),
            enriched_csv: format!("{base}/enriched.csv"),
            diffs: format!("{base}/diffs"),
        }
    });
    serde_json::to_value(JobStatus {
        id: &job.id,
        state: job.state,
        config: &job.config,
        key: &job.key,
        task: &job.task,
        task_kind: job.task_kind,
        submitted_ms: job.submitted_ms,
        started_ms: job.started_ms,
        finished_ms: job.finished_ms,
        error: job.error.as_deref(),
        links,
    })
    .expect("status serializes")
}

async fn list_jobs(State(s): State<Arc<AppState>>) -> Json<Value> {
    let handles: Vec<_> = s
        .jobs
        .read()
        .expect("jobs lock")
        .values()
        .cloned()
        .collect();
    let mut statuses: Vec<(u64, String, Value)> = handles
        .iter()
        .map(|h| {
            let j = h.read().expect("job lock");
            (j.submitted_ms, j.id.clone(), status_of(&j))
        })
        .collect();
    statuses.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    Json(Value::Array(
        statuses.into_iter().map(|(_, _, v)| v).collect(),
    ))
}

async fn job_status(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let handle = s.job(&id)?;
    let job = handle.read().expect("job lock");
    Ok(Json(status_of(&job)))
}

async fn provenance(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    s.with_result(&id, |_, r| Json(json!(r.provenance)))
}

async fn results(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    s.with_result(&id, |job, r| {
        Json(json!({
            "job_id": job.id,
            "mode": r.config.mode,
            "task_kind": job.task_kind,
            "before": r.before,
            "after": r.after,
            "improvement_percent": r.improvement_percent,
            "importance": r.importance,
            "timings": r.timings,
            "counts": r.counts,
        }))
    })
}

async fn enriched_csv(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let body = s.with_result(&id, |_, r| r.enriched.to_csv())?;
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8".to_string()),
            (
                header::CONTENT_DISPOSITION,
                format!("attachment; filename=\"{id}-enriched.csv\""),
            ),
        ],
        Body::from(body),
    )
        .into_response())
}

#[derive(Debug, Deserialize)]
struct DiffQuery {
    filter: Option<String>,
}

async fn diffs(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<DiffQuery>,
) -> Result<Json<Value>, ApiError> {
    let filter: DiffFilter = match q.filter.as_deref() {
        None => DiffFilter::All,
        Some(f) => f
            .parse()
            .map_err(|e: String| ApiError::bad_request("InvalidFilter", e))?,
    };
    s.with_result(&id, |job, r| match &r.diffs {
        Some(rows) => {
            let kept: Vec<_> = rows.iter().filter(|d| filter.keeps(d)).collect();
            Json(json!({ "supported": true, "filter": filter, "count": kept.len(), "rows": kept }))
        }
        None => Json(json!({
            "supported": false,
            "error": "UnsupportedTask",
            "message": format!("record diffs need a classification task, this job is {:?}", job.task_kind),
            "rows": [],
        })),
    })
}
