//! HTTP session service.
//!
//! Routes:
//!
//! * `POST /datasets/{id}` with UCR text stores a dataset.
//! * `POST /sessions` `{dataset_id, config?}` starts a session.
//! * `GET /sessions/{id}/query[?wait_ms=N]` returns the pending query or the phase.
//! * `POST /sessions/{id}/answer` `{relation, query_seq?}` answers it.
//! * `GET /sessions/{id}/clustering[?at=q]` returns the current clusters.
//! * `GET /sessions/{id}/log[?format=csv]` returns the answered queries.
//! * `DELETE /sessions/{id}` aborts the session.

mod registry;
mod session;

pub use registry::{valid_id, DatasetRegistry};
pub use session::{Phase, Session, StoredSession};

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cobras_ts::{
    write_query_log_csv, Clustering, ConstraintKind, EngineConfig, EngineState, MailboxError, QueryRecord, RunOutcome,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Longest a `GET /query` request may park waiting for the next query.
pub const MAX_WAIT: Duration = Duration::from_secs(30);

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

impl From<MailboxError> for ApiError {
    fn from(e: MailboxError) -> Self {
        ApiError::Conflict(e.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub session_dir: PathBuf,
    /// Abort a session whose pending query stays unanswered this long.
    pub answer_timeout: Option<Duration>,
}

#[derive(Debug)]
struct Inner {
    registry: DatasetRegistry,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    config: ServiceConfig,
}

#[derive(Debug, Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Open the data and session directories and resume every saved session.
    pub fn open(config: ServiceConfig) -> anyhow::Result<Self> {
        let registry = DatasetRegistry::open(&config.data_dir)?;
        fs::create_dir_all(&config.session_dir)?;
        let state = AppState(Arc::new(Inner {
            registry,
            sessions: RwLock::new(HashMap::new()),
            config,
        }));
        state.resume_saved()?;
        Ok(state)
    }

    fn resume_saved(&self) -> anyhow::Result<()> {
        let cfg = &self.0.config;
        let mut paths: Vec<PathBuf> = fs::read_dir(&cfg.session_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let stored = match StoredSession::load(&path) {
                Ok(s) => s,
                Err(e) => {
                    tracing::warn!("skipping {}: {e}", path.display());
                    continue;
                }
            };
            let prepared = match self.0.registry.prepare(&stored.dataset_id, &stored.session.config) {
                Ok(p) => p,
                Err(e) => {
                    tracing::warn!("skipping {}: {e}", path.display());
                    continue;
                }
            };
            let id = stored.id.clone();
            let session = if stored.error.is_some() {
                Session::failed(stored, prepared, cfg.session_dir.clone())
            } else {
                tracing::info!(session = %id, answered = stored.session.log.len(), "resuming session");
                Session::start(
                    id.clone(),
                    stored.dataset_id,
                    prepared,
                    Some(stored.session),
                    cfg.session_dir.clone(),
                    cfg.answer_timeout,
                )
            };
            self.sessions_mut().insert(id, session);
        }
        Ok(())
    }

    fn sessions_mut(&self) -> std::sync::RwLockWriteGuard<'_, HashMap<String, Arc<Session>>> {
        self.0.sessions.write().unwrap_or_else(|p| p.into_inner())
    }

    pub fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.0
            .sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown session {id:?}")))
    }

    /// Stop every engine thread without marking sessions aborted, so they
    /// resume on the next start.
    pub fn shutdown(&self) {
        for s in self.0.sessions.read().unwrap_or_else(|p| p.into_inner()).values() {
            s.detach();
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/datasets/{id}", post(add_dataset))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(delete_session))
        .route("/sessions/{id}/query", get(get_query))
        .route("/sessions/{id}/answer", post(post_answer))
        .route("/sessions/{id}/clustering", get(get_clustering))
        .route("/sessions/{id}/log", get(get_log))
        .with_state(state)
}

/// Parse a JSON body. Every failure is a bad request, whatever the cause.
fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("malformed body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))
}

#[derive(Debug, Serialize)]
struct DatasetInfo {
    dataset_id: String,
    n: usize,
    series_len: usize,
    classes: Option<usize>,
}

async fn add_dataset(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<(StatusCode, Json<DatasetInfo>), ApiError> {
    let text = String::from_utf8(body.to_vec()).map_err(|_| ApiError::BadRequest("body is not UTF-8".into()))?;
    let ds = blocking(move || app.0.registry.add(&id, &text).map(|ds| (id, ds))).await??;
    let (dataset_id, ds) = ds;
    Ok((
        StatusCode::CREATED,
        Json(DatasetInfo {
            dataset_id,
            n: ds.len(),
            series_len: ds.series_len(),
            classes: ds.class_count(),
        }),
    ))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    dataset_id: String,
    #[serde(default)]
    config: EngineConfig,
}

#[derive(Debug, Serialize)]
struct SessionCreated {
    session_id: String,
    dataset_id: String,
    n: usize,
    series_len: usize,
    config: EngineConfig,
}

async fn create_session(
    State(app): State<AppState>,
    body: Bytes,
) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let req: CreateSession = parse_body(&body)?;
    req.config.validate().map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let registry_app = app.clone();
    let (dataset_id, config) = (req.dataset_id.clone(), req.config.clone());
    let prepared = blocking(move || registry_app.0.registry.prepare(&dataset_id, &config)).await??;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let cfg = &app.0.config;
    let session = Session::start(
        id.clone(),
        req.dataset_id.clone(),
        Arc::clone(&prepared),
        None,
        cfg.session_dir.clone(),
        cfg.answer_timeout,
    );
    app.sessions_mut().insert(id.clone(), session);
    tracing::info!(session = %id, dataset = %req.dataset_id, "session started");
    Ok((
        StatusCode::CREATED,
        Json(SessionCreated {
            session_id: id,
            dataset_id: req.dataset_id,
            n: prepared.len(),
            series_len: prepared.dataset().series_len(),
            config: req.config,
        }),
    ))
}

#[derive(Debug, Deserialize)]
struct QueryParams {
    wait_ms: Option<u64>,
}

#[derive(Debug, Serialize)]
struct QueryView {
    phase: Phase,
    queries_used: usize,
    budget: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    query_seq: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pair: Option<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    series_i: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    series_j: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    outcome: Option<RunOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

async fn get_query(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<QueryParams>,
) -> Result<Json<QueryView>, ApiError> {
    let session = app.session(&id)?;
    if let Some(ms) = params.wait_ms.filter(|&ms| ms > 0) {
        if session.phase() == Phase::Running {
            let s = Arc::clone(&session);
            blocking(move || s.wait(Duration::from_millis(ms).min(MAX_WAIT))).await?;
        }
    }
    let raw = session.prepared().raw_dataset();
    let mut view = QueryView {
        phase: session.phase(),
        queries_used: session.log().len(),
        budget: session.budget(),
        query_seq: None,
        pair: None,
        series_i: None,
        series_j: None,
        outcome: session.outcome(),
        error: session.error(),
    };
    if let Some(p) = session.pending().filter(|_| view.phase == Phase::AwaitingAnswer) {
        view.queries_used = p.seq;
        view.query_seq = Some(p.seq);
        view.pair = Some([p.i, p.j]);
        view.series_i = Some(raw.get(p.i).values().to_vec());
        view.series_j = Some(raw.get(p.j).values().to_vec());
    }
    Ok(Json(view))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerBody {
    relation: ConstraintKind,
    #[serde(default)]
    query_seq: Option<usize>,
}

#[derive(Debug, Serialize)]
struct AnswerAck {
    query_seq: usize,
    relation: ConstraintKind,
}

async fn post_answer(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<AnswerAck>, ApiError> {
    let session = app.session(&id)?;
    let req: AnswerBody = parse_body(&body)?;
    let seq = session.answer(req.query_seq, req.relation)?;
    Ok(Json(AnswerAck {
        query_seq: seq,
        relation: req.relation,
    }))
}

#[derive(Debug, Deserialize)]
struct ClusteringParams {
    at: Option<usize>,
}

#[derive(Debug, Serialize)]
struct SuperInstanceView {
    members: Vec<usize>,
    representative: usize,
    representative_series: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct ClusterView {
    members: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    super_instances: Vec<SuperInstanceView>,
}

#[derive(Debug, Serialize)]
struct ClusteringView {
    phase: Phase,
    queries_used: usize,
    /// Query count the clustering was taken at, when a past one was asked for.
    #[serde(skip_serializing_if = "Option::is_none")]
    at: Option<usize>,
    n_clusters: usize,
    assignment: Vec<usize>,
    clusters: Vec<ClusterView>,
}

fn cluster_views(
    clustering: &Clustering,
    state: Option<&EngineState>,
    raw: &cobras_ts::DatasetF64,
) -> Vec<ClusterView> {
    let mut views: Vec<ClusterView> = clustering
        .clusters()
        .into_iter()
        .map(|members| ClusterView {
            members,
            super_instances: Vec::new(),
        })
        .collect();
    if let Some(state) = state {
        for c in &state.clusters {
            for &sid in &c.super_instances {
                let si = state.si(sid);
                views[clustering.assignment[si.members[0]]]
                    .super_instances
                    .push(SuperInstanceView {
                        members: si.members.clone(),
                        representative: si.representative,
                        representative_series: raw.get(si.representative).values().to_vec(),
                    });
            }
        }
    }
    views
}

async fn get_clustering(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<ClusteringParams>,
) -> Result<Json<ClusteringView>, ApiError> {
    let session = app.session(&id)?;
    let (clustering, state) = match params.at {
        Some(q) => {
            let snap = session
                .snapshot(q)
                .ok_or_else(|| ApiError::NotFound(format!("no clustering recorded at query {q}")))?;
            (snap, None)
        }
        None => {
            let state = session.state();
            let clustering = state
                .as_ref()
                .map(EngineState::clustering)
                .unwrap_or_else(|| Clustering::from_labels(&vec![0; session.prepared().len()]));
            (clustering, state)
        }
    };
    Ok(Json(ClusteringView {
        phase: session.phase(),
        queries_used: session.log().len(),
        at: params.at,
        n_clusters: clustering.n_clusters(),
        clusters: cluster_views(&clustering, state.as_ref(), session.prepared().raw_dataset()),
        assignment: clustering.assignment,
    }))
}

#[derive(Debug, Deserialize)]
struct LogParams {
    format: Option<String>,
}

#[derive(Debug, Serialize)]
struct LogView {
    queries_used: usize,
    budget: usize,
    queries: Vec<QueryRecord>,
}

async fn get_log(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<LogParams>,
) -> Result<Response, ApiError> {
    let session = app.session(&id)?;
    let log = session.log();
    match params.format.as_deref() {
        None | Some("json") => Ok(Json(LogView {
            queries_used: log.len(),
            budget: session.budget(),
            queries: log,
        })
        .into_response()),
        Some("csv") => {
            let mut out = Vec::new();
            write_query_log_csv(&log, &mut out).map_err(|e| ApiError::Internal(e.to_string()))?;
            Ok(([(header::CONTENT_TYPE, "text/csv")], out).into_response())
        }
        Some(other) => Err(ApiError::BadRequest(format!(
            "unknown format {other:?}; expected json or csv"
        ))),
    }
}

#[derive(Debug, Serialize)]
struct Deleted {
    session_id: String,
    phase: Phase,
}

async fn delete_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<Deleted>, ApiError> {
    let session = app.session(&id)?;
    session.abort();
    let s = Arc::clone(&session);
    // Give the engine a moment to record the abort.
    blocking(move || {
        let deadline = std::time::Instant::now() + Duration::from_secs(5);
        while !s.is_finished() && std::time::Instant::now() < deadline {
            std::thread::sleep(Duration::from_millis(10));
        }
    })
    .await?;
    Ok(Json(Deleted {
        session_id: id,
        phase: session.phase(),
    }))
}

/// Serve until interrupted.
pub async fn serve(config: ServiceConfig, addr: std::net::SocketAddr) -> anyhow::Result<()> {
    let state = AppState::open(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    let app = router(state.clone());
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    state.shutdown();
    Ok(())
}
