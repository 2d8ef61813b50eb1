//! Streaming service: live masking sessions over HTTP.
//!
//! | method   | path                     | body                          |
//! |----------|--------------------------|-------------------------------|
//! | `POST`   | `/v1/session`            | [`SessionCreateRequest`]      |
//! | `POST`   | `/v1/session/{id}/frame` | [`FrameRequest`]              |
//! | `DELETE` | `/v1/session/{id}`       | none, answers [`CloseResponse`] |
//! | `GET`    | `/v1/health`             | none, answers [`HealthResponse`] |
//!
//! Frames of one session are processed one at a time in arrival order; a
//! request that arrives while the previous frame is still being processed
//! waits for it. Every delivered frame advances the session, so a caller
//! that retries a frame it already sent advances the tracker twice.
//!
//! Errors answer with an [`ErrorBody`]: 400 for malformed input or a wrong
//! resolution, 404 for unknown or expired sessions, 422 when a prompt or
//! the gripper cannot be resolved, 429 when the session limit is reached,
//! and 502/503/504 for backend failures.

mod client;

use std::collections::HashMap;
use std::future::Future;
use std::net::{SocketAddr, TcpListener as StdListener};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

use crate::backend::Backends;
use crate::codec::{frame_from_b64, frame_to_b64};
use crate::error::{Error, Result};
use crate::eval::percentile;
use crate::init::{initialize_session, InitOptions};
use crate::recompose::MaskingSession;
use crate::wire::{
    CloseResponse, EntityInfo, EntityStatusInfo, ErrorBody, FrameRequest, FrameResponse, HealthResponse,
    SessionCreateRequest, SessionCreateResponse, SessionStats,
};

pub use client::{CreatedSession, ServiceClient};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub max_sessions: usize,
    pub idle_timeout_secs: u64,
    /// Largest accepted request body.
    pub max_frame_bytes: usize,
    pub init_budget_secs: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_sessions: 16, idle_timeout_secs: 120, max_frame_bytes: 64 << 20, init_budget_secs: 30 }
    }
}

impl Limits {
    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

const LATENCY_WINDOW: usize = 1024;

struct Live {
    session: MaskingSession,
    last_active: Instant,
    frames: u64,
    latencies: std::collections::VecDeque<f64>,
    closed: bool,
}

impl Live {
    fn record(&mut self, ms: f64) {
        if self.latencies.len() == LATENCY_WINDOW {
            self.latencies.pop_front();
        }
        self.latencies.push_back(ms);
        self.frames += 1;
        self.last_active = Instant::now();
    }

    fn stats(&self) -> SessionStats {
        let mut s: Vec<f64> = self.latencies.iter().copied().collect();
        s.sort_by(f64::total_cmp);
        let pick = |p: f64| (!s.is_empty()).then(|| percentile(&s, p));
        SessionStats { frames: self.frames, latency_p50_ms: pick(50.0), latency_p95_ms: pick(95.0), latency_max_ms: s.last().copied() }
    }

    fn shut(&mut self) {
        if !self.closed {
            self.closed = true;
            if let Err(e) = self.session.close() {
                tracing::warn!(error = %e, "closing session");
            }
        }
    }
}

type Slot = Arc<tokio::sync::Mutex<Live>>;

struct AppState {
    backends: Backends,
    limits: Limits,
    sessions: Mutex<HashMap<String, Slot>>,
}

impl AppState {
    fn slot(&self, id: &str) -> Option<Slot> {
        self.sessions.lock().expect("session table poisoned").get(id).cloned()
    }

    fn count(&self) -> usize {
        self.sessions.lock().expect("session table poisoned").len()
    }
}

struct ApiError(StatusCode, ErrorBody);

impl ApiError {
    fn new(status: StatusCode, category: &str, msg: impl Into<String>) -> Self {
        Self(status, ErrorBody { error: msg.into(), category: category.into() })
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "session", format!("no live session {id}"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::PromptUnresolved(_) | Error::GripperUnresolved(_) | Error::Init(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Session(_) => StatusCode::NOT_FOUND,
            Error::Shape { .. }
            | Error::Length { .. }
            | Error::Format(_)
            | Error::Input(_)
            | Error::Config(_)
            | Error::EmptyMask
            | Error::Frame { .. } => StatusCode::BAD_REQUEST,
            Error::Transport(_) | Error::Protocol(_) => StatusCode::BAD_GATEWAY,
            Error::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            Error::Timeout(_) => StatusCode::GATEWAY_TIMEOUT,
            Error::State(_) | Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.category(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

fn parse<T: serde::de::DeserializeOwned>(body: &str) -> std::result::Result<T, ApiError> {
    serde_json::from_str(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "format", format!("malformed request: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> std::result::Result<T, ApiError> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "state", format!("worker failed: {e}"))),
    }
}

fn full(limits: &Limits) -> ApiError {
    ApiError::new(StatusCode::TOO_MANY_REQUESTS, "limit", format!("session limit of {} reached", limits.max_sessions))
}

async fn create_session(State(st): State<Arc<AppState>>, body: String) -> ApiResult<SessionCreateResponse> {
    let req: SessionCreateRequest = parse(&body)?;
    req.task.validate()?;
    req.recompose.validate()?;
    if st.count() >= st.limits.max_sessions {
        return Err(full(&st.limits));
    }
    let backends = st.backends.clone();
    let opts = InitOptions { budget: Duration::from_secs(st.limits.init_budget_secs) };
    let (session, image, entities) = blocking(move || {
        let frame = frame_from_b64(&req.image)?;
        let init = initialize_session(&frame, &req.task, &backends, opts)?;
        let (session, first) = MaskingSession::from_init(init, &frame, req.recompose)?;
        let entities: Vec<EntityInfo> = session
            .entities()
            .iter()
            .enumerate()
            .map(|(i, e)| EntityInfo { id: i as u32, role: e.role.as_str().into() })
            .collect();
        Ok((session, frame_to_b64(&first.image), entities))
    })
    .await?;

    let id = uuid::Uuid::new_v4().simple().to_string();
    let live = Live { session, last_active: Instant::now(), frames: 1, latencies: Default::default(), closed: false };
    let mut table = st.sessions.lock().expect("session table poisoned");
    if table.len() >= st.limits.max_sessions {
        drop(table);
        let mut live = live;
        tokio::task::spawn_blocking(move || live.shut());
        return Err(full(&st.limits));
    }
    table.insert(id.clone(), Arc::new(tokio::sync::Mutex::new(live)));
    tracing::info!(session = %id, entities = entities.len(), "session opened");
    Ok(Json(SessionCreateResponse { session: id, image, entities }))
}

async fn session_frame(State(st): State<Arc<AppState>>, Path(id): Path<String>, body: String) -> ApiResult<FrameResponse> {
    let req: FrameRequest = parse(&body)?;
    let slot = st.slot(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let mut live = slot.lock_owned().await;
    if live.closed {
        return Err(ApiError::not_found(&id));
    }
    blocking(move || {
        let started = Instant::now();
        let frame = frame_from_b64(&req.image)?;
        let out = live.session.mask_frame(&frame)?;
        let image = frame_to_b64(&out.image);
        let latency_ms = started.elapsed().as_secs_f64() * 1e3;
        live.record(latency_ms);
        let entities = out
            .statuses
            .iter()
            .enumerate()
            .map(|(i, s)| EntityStatusInfo { id: i as u32, status: s.as_str().into() })
            .collect();
        Ok(FrameResponse { image, entities, latency_ms })
    })
    .await
    .map(Json)
}

async fn close_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<CloseResponse> {
    let slot = st.sessions.lock().expect("session table poisoned").remove(&id);
    let slot = slot.ok_or_else(|| ApiError::not_found(&id))?;
    let mut live = slot.lock_owned().await;
    let stats = live.stats();
    blocking(move || {
        live.shut();
        Ok(())
    })
    .await?;
    tracing::info!(session = %id, frames = stats.frames, "session closed");
    Ok(Json(CloseResponse { stats }))
}

async fn health(State(st): State<Arc<AppState>>) -> Json<HealthResponse> {
    let backends = st.backends.identifiers().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    Json(HealthResponse { ok: true, backends })
}

/// Drop sessions idle for longer than the limit. Sessions busy with a
/// frame are never idle.
fn reap_idle(st: &AppState) {
    let idle = Duration::from_secs(st.limits.idle_timeout_secs);
    let mut expired = Vec::new();
    {
        let mut table = st.sessions.lock().expect("session table poisoned");
        table.retain(|id, slot| match slot.clone().try_lock_owned() {
            Ok(live) if live.last_active.elapsed() > idle => {
                tracing::info!(session = %id, "session expired");
                expired.push(live);
                false
            }
            _ => true,
        });
    }
    if !expired.is_empty() {
        tokio::task::spawn_blocking(move || expired.iter_mut().for_each(|l| l.shut()));
    }
}

fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/session", post(create_session))
        .route("/v1/session/{id}/frame", post(session_frame))
        .route("/v1/session/{id}", axum::routing::delete(close_session))
        .route("/v1/health", get(health))
        .layer(DefaultBodyLimit::max(state.limits.max_frame_bytes))
        .with_state(state)
}

async fn run(listener: tokio::net::TcpListener, backends: Backends, limits: Limits, shutdown: impl Future<Output = ()> + Send + 'static) {
    let state = Arc::new(AppState { backends, limits, sessions: Mutex::new(HashMap::new()) });
    let tick = Duration::from_millis((state.limits.idle_timeout_secs * 250).clamp(50, 1000));
    let reaper = {
        let st = state.clone();
        tokio::spawn(async move {
            let mut iv = tokio::time::interval(tick);
            loop {
                iv.tick().await;
                reap_idle(&st);
            }
        })
    };
    if let Err(e) = axum::serve(listener, router(state.clone())).with_graceful_shutdown(shutdown).await {
        tracing::error!(error = %e, "service stopped");
    }
    reaper.abort();
    let slots: Vec<Slot> = state.sessions.lock().expect("session table poisoned").drain().map(|(_, s)| s).collect();
    for slot in slots {
        let mut live = slot.lock_owned().await;
        let _ = tokio::task::spawn_blocking(move || live.shut()).await;
    }
}

/// Serve until Ctrl-C, then drain in-flight frames and close every session.
pub async fn serve(bind: SocketAddr, backends: Backends, limits: Limits) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .map_err(|e| Error::io(bind.to_string(), e))?;
    tracing::info!(addr = %listener.local_addr().map_err(|e| Error::io(bind.to_string(), e))?, "listening");
    run(listener, backends, limits, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await;
    Ok(())
}

/// A server running on its own thread; stops when dropped.
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

pub(crate) fn spawn_server<F, Fut>(bind: SocketAddr, app: F) -> Result<ServerHandle>
where
    F: FnOnce(tokio::net::TcpListener, oneshot::Receiver<()>) -> Fut + Send + 'static,
    Fut: Future<Output = ()>,
{
    let std_listener = StdListener::bind(bind).map_err(|e| Error::io(bind.to_string(), e))?;
    let addr = std_listener.local_addr().map_err(|e| Error::io(bind.to_string(), e))?;
    std_listener.set_nonblocking(true).map_err(|e| Error::io(addr.to_string(), e))?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(|e| Error::io(addr.to_string(), e))?;
    let (tx, rx) = oneshot::channel();
    let thread = std::thread::Builder::new()
        .name(format!("arro-http-{}", addr.port()))
        .spawn(move || {
            runtime.block_on(async move {
                match tokio::net::TcpListener::from_std(std_listener) {
                    Ok(l) => app(l, rx).await,
                    Err(e) => tracing::error!(error = %e, "adopting listener"),
                }
            })
        })
        .map_err(|e| Error::io(addr.to_string(), e))?;
    Ok(ServerHandle { addr, shutdown: Some(tx), thread: Some(thread) })
}

/// Start the service on a background thread. Bind to port 0 for an
/// ephemeral port and read it back from the handle.
pub fn spawn(bind: SocketAddr, backends: Backends, limits: Limits) -> Result<ServerHandle> {
    spawn_server(bind, move |listener, rx| async move {
        run(listener, backends, limits, async {
            let _ = rx.await;
        })
        .await
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limits_json_defaults() {
        let l: Limits = serde_json::from_str(r#"{"max_sessions": 2}"#).unwrap();
        assert_eq!(l.max_sessions, 2);
        assert_eq!(l.idle_timeout_secs, 120);
    }

    #[test]
    fn error_statuses() {
        let s = |e: Error| ApiError::from(e).0;
        assert_eq!(s(Error::PromptUnresolved("x".into())), StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(s(Error::Shape { expected: (1, 1), got: (2, 2) }), StatusCode::BAD_REQUEST);
        assert_eq!(s(Error::Session("x".into())), StatusCode::NOT_FOUND);
        assert_eq!(s(Error::Unavailable("x".into())), StatusCode::SERVICE_UNAVAILABLE);
    }
}
