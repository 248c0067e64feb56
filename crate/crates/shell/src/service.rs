//! JSON-over-HTTP service. Sessions live in memory in an LRU cache; ids
//! come from a counter, so replaying a transcript against a fresh service
//! reproduces the same ids and the same numbers.

use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use duality_core::wheel::WheelSession;
use duality_core::Error;
use lru::LruCache;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::api::{self, ErrorBody, ErrorEnvelope, SessionRecord, SettingsPayload};
use crate::wire;

pub const SESSION_CAPACITY: usize = 256;

pub struct SessionEntry {
    pub record: SessionRecord,
    pub session: WheelSession,
    /// Serializes derivations within one session.
    lock: Mutex<()>,
}

pub struct AppState {
    sessions: Mutex<LruCache<String, Arc<SessionEntry>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(capacity: usize) -> Self {
        Self {
            sessions: Mutex::new(LruCache::new(
                NonZeroUsize::new(capacity).unwrap_or(NonZeroUsize::MIN),
            )),
            next_id: AtomicU64::new(1),
        }
    }

    pub fn insert(&self, session: WheelSession, utility_text: String) -> Arc<SessionEntry> {
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let record = SessionRecord {
            session_id: id.clone(),
            n_goods: session.n_goods(),
            utility_text,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            settings: SettingsPayload::of(&session),
        };
        let entry = Arc::new(SessionEntry {
            record,
            session,
            lock: Mutex::new(()),
        });
        self.lock().put(id, entry.clone());
        entry
    }

    pub fn get(&self, id: &str) -> Option<Arc<SessionEntry>> {
        self.lock().get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, LruCache<String, Arc<SessionEntry>>> {
        // a panicked request cannot leave the cache itself inconsistent
        self.sessions.lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl Default for AppState {
    fn default() -> Self {
        Self::new(SESSION_CAPACITY)
    }
}

/// An error response: status plus the uniform envelope.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                kind: kind.into(),
                message: message.into(),
                position: None,
            },
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("no session '{id}'"))
    }
}

/// Input problems are 400; well-formed requests the mathematics rejects
/// are 422.
pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::Parse { .. } | Error::Invalid(_) | Error::Param(_) => StatusCode::BAD_REQUEST,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self {
            status: status_for(&e),
            body: ErrorBody::from(&e),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json_response(self.status, &ErrorEnvelope { error: self.body })
    }
}

fn json_response<T: Serialize>(status: StatusCode, body: &T) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        wire::to_string(body),
    )
        .into_response()
}

/// Parses a JSON body; syntax and schema problems become a ParseError
/// with the byte offset of the fault.
fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    let text = if bytes.iter().all(u8::is_ascii_whitespace) {
        b"{}".as_slice()
    } else {
        bytes
    };
    serde_json::from_slice(text).map_err(|e| {
        let offset = byte_offset(text, e.line(), e.column());
        ApiError::from(Error::Parse {
            position: offset,
            message: e.to_string(),
        })
    })
}

fn byte_offset(text: &[u8], line: usize, column: usize) -> usize {
    let before: usize = text
        .split(|b| *b == b'\n')
        .take(line.saturating_sub(1))
        .map(|l| l.len() + 1)
        .sum();
    before + column.saturating_sub(1)
}

/// Runs blocking numerical work off the async executor, holding the
/// session lock for its duration.
async fn with_session<T, F>(state: &AppState, id: &str, f: F) -> Result<Response, ApiError>
where
    T: Serialize,
    F: FnOnce(&WheelSession) -> duality_core::Result<T> + Send + 'static,
    T: Send + 'static,
{
    let entry = state.get(id).ok_or_else(|| ApiError::not_found(id))?;
    let out = tokio::task::spawn_blocking(move || {
        let _guard = entry.lock.lock().unwrap_or_else(|p| p.into_inner());
        f(&entry.session)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "InternalError", e.to_string()))?;
    Ok(json_response(StatusCode::OK, &out?))
}

type AppResult = Result<Response, ApiError>;
type Shared = State<Arc<AppState>>;

async fn create_session(State(state): Shared, body: Bytes) -> AppResult {
    let req: api::CreateSession = parse_body(&body)?;
    let text = req.utility_text()?;
    let session = WheelSession::from_text(&text)?;
    let entry = state.insert(session, text);
    Ok(json_response(StatusCode::CREATED, &entry.record))
}

async fn get_session(State(state): Shared, Path(id): Path<String>) -> AppResult {
    let entry = state.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    Ok(json_response(StatusCode::OK, &entry.record))
}

async fn graph() -> Response {
    json_response(StatusCode::OK, &api::graph())
}

async fn evaluate(State(state): Shared, Path(id): Path<String>, body: Bytes) -> AppResult {
    let req: api::EvaluateRequest = parse_body(&body)?;
    with_session(&state, &id, move |s| api::evaluate(s, &req)).await
}

async fn transition(State(state): Shared, Path(id): Path<String>, body: Bytes) -> AppResult {
    let req: api::TransitionRequest = parse_body(&body)?;
    with_session(&state, &id, move |s| api::transition(s, &req)).await
}

async fn plan(State(state): Shared, Path(id): Path<String>, body: Bytes) -> AppResult {
    let req: api::PlanRequest = parse_body(&body)?;
    with_session(&state, &id, move |s| api::plan(s, &req)).await
}

async fn verify(State(state): Shared, Path(id): Path<String>, body: Bytes) -> AppResult {
    let req: api::VerifyRequest = parse_body(&body)?;
    with_session(&state, &id, move |s| api::verify(s, &req)).await
}

async fn slutsky(State(state): Shared, Path(id): Path<String>, body: Bytes) -> AppResult {
    let req: api::SlutskyRequest = parse_body(&body)?;
    with_session(&state, &id, move |s| api::slutsky(s, &req)).await
}

async fn demo_nonconvex(State(state): Shared, Path(id): Path<String>) -> AppResult {
    with_session(&state, &id, api::demo_nonconvex).await
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint")
}

pub fn router() -> Router {
    router_with(Arc::new(AppState::default()))
}

pub fn router_with(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/graph", get(graph))
        .route("/api/session", post(create_session))
        .route("/api/session/{id}", get(get_session))
        .route("/api/session/{id}/evaluate", post(evaluate))
        .route("/api/session/{id}/transition", post(transition))
        .route("/api/session/{id}/plan", post(plan))
        .route("/api/session/{id}/verify", post(verify))
        .route("/api/session/{id}/slutsky", post(slutsky))
        .route("/api/session/{id}/demo/nonconvex", post(demo_nonconvex))
        .fallback(fallback)
        .with_state(state)
}

pub async fn serve(addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router()).await
}
