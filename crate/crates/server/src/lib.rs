//! Human evaluation service.
//!
//! Routes (bodies are UTF-8 JSON; see `contracts/human-eval-api.md`):
//!
//! - `POST /sessions` creates a session
//! - `GET /sessions/{id}` returns progress
//! - `GET /sessions/{id}/next` returns the next unjudged item, or 204
//! - `POST /sessions/{id}/judgments` records a score
//! - `GET /sessions/{id}/report?partial=true` aggregates scores
//!
//! Every `/sessions/{id}` route needs the session token in `X-Session-Token`.
//! Writes to one session are serialized; each judgment is on disk before it
//! is acknowledged.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use adaptnmt_core::human_eval::{
    DisplayMode, Judgment, Progress, Session, SessionError, SessionSpec, SessionStore, StoreError,
};
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

pub const TOKEN_HEADER: &str = "x-session-token";

type SessionCell = Arc<RwLock<Session>>;

struct Inner {
    store: SessionStore,
    /// Sessions loaded so far; the store stays the source of truth.
    sessions: Mutex<HashMap<String, SessionCell>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(store: SessionStore) -> Self {
        AppState(Arc::new(Inner {
            store,
            sessions: Mutex::new(HashMap::new()),
        }))
    }

    pub fn open(root: &Path) -> Result<Self, StoreError> {
        Ok(Self::new(SessionStore::open(root)?))
    }

    fn cell(&self, id: &str) -> Result<SessionCell, ApiError> {
        let mut map = self.0.sessions.lock().expect("session map poisoned");
        if let Some(c) = map.get(id) {
            return Ok(c.clone());
        }
        let session = self.0.store.load(id)?;
        let cell = Arc::new(RwLock::new(session));
        map.insert(id.to_string(), cell.clone());
        Ok(cell)
    }
}

/// Error body: `{"error": code, "message": text}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error: code.to_string(),
                message: message.into(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let (status, code) = match &e {
            SessionError::UnknownItem(_) => (StatusCode::NOT_FOUND, "unknown_item"),
            SessionError::ScoreOutOfRange(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "score_out_of_range")
            }
            SessionError::AlreadyJudged { .. } => (StatusCode::CONFLICT, "already_judged"),
            SessionError::Incomplete { .. } => (StatusCode::CONFLICT, "session_incomplete"),
            SessionError::NoJudgments => (StatusCode::CONFLICT, "no_judgments"),
            SessionError::NoSources
            | SessionError::NoSystems
            | SessionError::CoverageGap { .. }
            | SessionError::DuplicateSystem(_)
            | SessionError::SampleTooLarge { .. }
            | SessionError::ZeroSample => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_session"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Session(s) => s.into(),
            StoreError::NotFound(id) => {
                ApiError::new(StatusCode::NOT_FOUND, "session_not_found", format!("no session {id}"))
            }
            other => {
                log::error!("{other}");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", other.to_string())
            }
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_query", e.body_text())
    }
}

fn internal(e: tokio::task::JoinError) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub token: String,
    pub display: DisplayMode,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Status {
    pub session_id: String,
    pub annotator: Option<String>,
    pub display: DisplayMode,
    pub progress: Progress,
    pub complete: bool,
}

#[derive(Debug, Deserialize)]
pub struct ReportQuery {
    #[serde(default)]
    pub partial: bool,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(status))
        .route("/sessions/{id}/next", get(next_item))
        .route("/sessions/{id}/judgments", post(submit_judgment))
        .route("/sessions/{id}/report", get(report))
        .with_state(state)
}

/// Looks the session up and checks the caller's token.
fn authorized(state: &AppState, id: &str, headers: &HeaderMap) -> Result<SessionCell, ApiError> {
    let cell = state.cell(id)?;
    let given = headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok());
    let ok = {
        let s = cell.read().expect("session lock poisoned");
        given == Some(s.manifest.token.as_str())
    };
    if !ok {
        return Err(ApiError::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "missing or wrong X-Session-Token",
        ));
    }
    Ok(cell)
}

async fn create_session(
    State(state): State<AppState>,
    body: Result<Json<SessionSpec>, JsonRejection>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let Json(spec) = body?;
    let created = tokio::task::spawn_blocking(move || -> Result<Created, ApiError> {
        let session = state.0.store.create(&spec)?;
        let created = Created {
            session_id: session.id().to_string(),
            token: session.manifest.token.clone(),
            display: session.manifest.display,
            progress: session.progress(),
        };
        let mut map = state.0.sessions.lock().expect("session map poisoned");
        map.insert(created.session_id.clone(), Arc::new(RwLock::new(session)));
        log::info!("created {} with {} items", created.session_id, created.progress.total);
        Ok(created)
    })
    .await
    .map_err(internal)??;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn status(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
) -> Result<Json<Status>, ApiError> {
    tokio::task::spawn_blocking(move || {
        let cell = authorized(&state, &id, &headers)?;
        let s = cell.read().expect("session lock poisoned");
        Ok(Json(Status {
            session_id: s.id().to_string(),
            annotator: s.manifest.annotator.clone(),
            display: s.manifest.display,
            progress: s.progress(),
            complete: s.is_complete(),
        }))
    })
    .await
    .map_err(internal)?
}

async fn next_item(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    tokio::task::spawn_blocking(move || {
        let cell = authorized(&state, &id, &headers)?;
        let s = cell.read().expect("session lock poisoned");
        Ok(match s.next() {
            Some(view) => Json(view).into_response(),
            None => StatusCode::NO_CONTENT.into_response(),
        })
    })
    .await
    .map_err(internal)?
}

async fn submit_judgment(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Result<Json<Judgment>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(judgment) = body?;
    tokio::task::spawn_blocking(move || {
        let cell = authorized(&state, &id, &headers)?;
        let mut s = cell.write().expect("session lock poisoned");
        let ack = state.0.store.submit(&mut s, judgment)?;
        Ok(Json(ack).into_response())
    })
    .await
    .map_err(internal)?
}

async fn report(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    query: Result<Query<ReportQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = query?;
    tokio::task::spawn_blocking(move || {
        let cell = authorized(&state, &id, &headers)?;
        let s = cell.read().expect("session lock poisoned");
        Ok(Json(s.report(q.partial)?).into_response())
    })
    .await
    .map_err(internal)?
}

/// Serves until ctrl-c.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
