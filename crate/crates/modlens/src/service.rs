//! HTTP/JSON API of the moderation queue.
//!
//! | Method | Path | Body | Success |
//! |---|---|---|---|
//! | `POST` | `/comments` | `{id, text}` | 201 entry |
//! | `GET` | `/queue?limit&min_p&status` | | 200 entries |
//! | `GET` | `/comments/{id}` | | 200 entry |
//! | `POST` | `/comments/{id}/decision` | `{action, reason?, decided_by?}` | 200 entry |
//! | `GET` | `/health` | | 200 |
//!
//! Errors are `{"error": message}` with 400 (invalid request), 404 (unknown
//! comment), 409 (duplicate id or conflicting decision), 503 (no model) or 500.

use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use modlens_core::text::Reason;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::scorer::Scorer;
use crate::store::{Action, QueueEntry, QueueQuery, Status, Store, StoreError};

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

/// Milliseconds since the Unix epoch.
pub fn system_clock() -> Clock {
    Arc::new(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64))
}

pub struct AppState {
    pub store: RwLock<Store>,
    pub scorer: Option<Arc<Scorer>>,
    pub clock: Clock,
}

impl AppState {
    pub fn new(store: Store, scorer: Option<Arc<Scorer>>, clock: Clock) -> Arc<Self> {
        Arc::new(AppState { store: RwLock::new(store), scorer, clock })
    }
}

pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::Duplicate(_) | StoreError::AlreadyDecided { .. } => StatusCode::CONFLICT,
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::MissingReason | StoreError::UnexpectedReason | StoreError::EmptyText | StoreError::BadProbability(_) => {
                StatusCode::BAD_REQUEST
            }
            StoreError::Io { .. } | StoreError::Corrupt { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewComment {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct QueueParams {
    pub limit: Option<usize>,
    pub min_p: Option<f64>,
    pub status: Option<Status>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub action: Action,
    #[serde(default)]
    pub reason: Option<String>,
    #[serde(default)]
    pub decided_by: Option<String>,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/comments", post(ingest))
        .route("/comments/{id}", get(fetch))
        .route("/comments/{id}/decision", post(decide))
        .route("/queue", get(queue))
        .with_state(state)
}

fn read(state: &AppState) -> ApiResult<std::sync::RwLockReadGuard<'_, Store>> {
    state.store.read().map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store lock poisoned"))
}

fn write(state: &AppState) -> ApiResult<std::sync::RwLockWriteGuard<'_, Store>> {
    state.store.write().map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store lock poisoned"))
}

async fn health(State(state): State<Arc<AppState>>) -> ApiResult<Json<serde_json::Value>> {
    let store = read(&state)?;
    Ok(Json(json!({ "status": "ok", "model_loaded": state.scorer.is_some(), "entries": store.len() })))
}

async fn ingest(State(state): State<Arc<AppState>>, Json(req): Json<NewComment>) -> ApiResult<(StatusCode, Json<QueueEntry>)> {
    if req.text.trim().is_empty() {
        return Err(StoreError::EmptyText.into());
    }
    let scorer = state.scorer.clone().ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "model not loaded"))?;
    if read(&state)?.get(&req.id).is_some() {
        return Err(StoreError::Duplicate(req.id).into());
    }
    let text = req.text.clone();
    let scored = tokio::task::spawn_blocking(move || scorer.score(&text))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| match e {
            modlens_core::Error::EmptySequence => StoreError::EmptyText.into(),
            e => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        })?;
    let mut store = write(&state)?;
    let entry = QueueEntry {
        id: req.id,
        text: req.text,
        probability: scored.probability,
        spans: scored.spans,
        status: Status::Pending,
        reason: None,
        decided_by: None,
        decided_at: None,
        ingested_at: (state.clock)(),
        seq: store.next_seq(),
    };
    Ok((StatusCode::CREATED, Json(store.ingest(entry)?)))
}

async fn fetch(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<QueueEntry>> {
    let store = read(&state)?;
    store.get(&id).cloned().map(Json).ok_or_else(|| StoreError::NotFound(id).into())
}

async fn queue(State(state): State<Arc<AppState>>, Query(p): Query<QueueParams>) -> ApiResult<Json<Vec<QueueEntry>>> {
    let store = read(&state)?;
    Ok(Json(store.queue(&QueueQuery { limit: p.limit, min_probability: p.min_p, status: p.status })))
}

async fn decide(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<DecisionRequest>,
) -> ApiResult<Json<QueueEntry>> {
    let reason = req
        .reason
        .as_deref()
        .map(|r| r.parse::<Reason>())
        .transpose()
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let mut store = write(&state)?;
    let (entry, _) = store.decide(&id, req.action, reason, req.decided_by, (state.clock)())?;
    Ok(Json(entry))
}
