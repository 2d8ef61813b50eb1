//! In-process HTTP gateway that answers the backend wire protocol from a
//! script. Used to exercise [`RemoteBackend`](super::RemoteBackend) and
//! the error taxonomy without any model behind it.

#![allow(clippy::result_large_err)]

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::de::DeserializeOwned;

use super::group_entities;
use crate::codec::frame_from_b64;
use crate::error::Result;
use crate::mask::{BoundingBox, Keypoint, RleMask};
use crate::service::{spawn_server, ServerHandle};
use crate::wire::{self, ErrorBody, WireBox, WireSelection};

/// Canned answers.
#[derive(Clone, Debug, Default)]
pub struct MockScript {
    /// Boxes per detector prompt; unknown prompts get none.
    pub detections: HashMap<String, Vec<WireBox>>,
    pub proposals: Vec<RleMask>,
    pub selections: Vec<WireSelection>,
    /// Masks answered by successive `track/step` calls of a session; the
    /// last entry repeats once the script runs out.
    pub track: Vec<Vec<RleMask>>,
    /// Answer this many requests with 503 before behaving.
    pub fail_first: u32,
    pub unavailable: bool,
}

impl MockScript {
    pub fn detect(mut self, prompt: impl Into<String>, boxes: Vec<WireBox>) -> Self {
        self.detections.insert(prompt.into(), boxes);
        self
    }

    pub fn proposals(mut self, masks: Vec<RleMask>) -> Self {
        self.proposals = masks;
        self
    }

    pub fn selections(mut self, sel: Vec<WireSelection>) -> Self {
        self.selections = sel;
        self
    }

    pub fn track(mut self, steps: Vec<Vec<RleMask>>) -> Self {
        self.track = steps;
        self
    }

    pub fn fail_first(mut self, n: u32) -> Self {
        self.fail_first = n;
        self
    }
}

/// A request as received, body parsed as JSON when possible.
#[derive(Clone, Debug)]
pub struct LoggedRequest {
    pub path: String,
    pub body: Option<serde_json::Value>,
}

#[derive(Default)]
struct Inner {
    script: MockScript,
    failures_left: u32,
    log: Vec<LoggedRequest>,
    sessions: HashMap<String, usize>,
    next_session: u64,
}

type Shared = Arc<Mutex<Inner>>;

fn reject(status: StatusCode, category: &str, msg: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: msg.into(), category: category.into() })).into_response()
}

fn bad_request(msg: impl Into<String>) -> Response {
    reject(StatusCode::BAD_REQUEST, "protocol", msg)
}

/// Log the request, apply scripted outages, and parse the body.
fn admit<T: DeserializeOwned>(st: &Shared, path: &str, body: &str) -> std::result::Result<T, Response> {
    let mut g = st.lock().expect("mock state poisoned");
    g.log.push(LoggedRequest { path: path.into(), body: serde_json::from_str(body).ok() });
    if g.script.unavailable {
        return Err(reject(StatusCode::SERVICE_UNAVAILABLE, "unavailable", "model offline"));
    }
    if g.failures_left > 0 {
        g.failures_left -= 1;
        return Err(reject(StatusCode::SERVICE_UNAVAILABLE, "unavailable", "model warming up"));
    }
    serde_json::from_str(body).map_err(|e| bad_request(format!("malformed payload: {e}")))
}

fn check_image(b64: &str) -> std::result::Result<(u32, u32), Response> {
    frame_from_b64(b64).map(|f| f.dims()).map_err(|e| bad_request(format!("image: {e}")))
}

async fn detect(State(st): State<Shared>, body: String) -> Response {
    let run = || -> std::result::Result<Response, Response> {
        let req: wire::DetectRequest = admit(&st, wire::DETECT, &body)?;
        check_image(&req.image)?;
        let boxes = st.lock().expect("mock state poisoned").script.detections.get(&req.prompt).cloned().unwrap_or_default();
        Ok(Json(wire::DetectResponse { boxes }).into_response())
    };
    run().unwrap_or_else(|r| r)
}

async fn propose(State(st): State<Shared>, body: String) -> Response {
    let run = || -> std::result::Result<Response, Response> {
        let req: wire::ProposeRequest = admit(&st, wire::PROPOSE, &body)?;
        check_image(&req.image)?;
        let masks = st.lock().expect("mock state poisoned").script.proposals.clone();
        Ok(Json(wire::MasksResponse { masks }).into_response())
    };
    run().unwrap_or_else(|r| r)
}

async fn track_init(State(st): State<Shared>, body: String) -> Response {
    let run = || -> std::result::Result<Response, Response> {
        let req: wire::TrackInitRequest = admit(&st, wire::TRACK_INIT, &body)?;
        let (w, h) = check_image(&req.image)?;
        let mut boxes = Vec::with_capacity(req.boxes.len());
        for (i, b) in req.boxes.iter().enumerate() {
            let bb = BoundingBox::clamped(b.x, b.y, b.w, b.h, b.score, w, h)
                .ok_or_else(|| bad_request(format!("box {i} lies outside the frame")))?;
            boxes.push((format!("box-{i}"), bb));
        }
        let mut points = Vec::with_capacity(req.points.len());
        for p in &req.points {
            let inside = p.x >= 0.0 && p.y >= 0.0 && p.x < w as f64 && p.y < h as f64;
            if !inside {
                return Err(bad_request(format!("point ({}, {}) lies outside the frame", p.x, p.y)));
            }
            points.push(Keypoint::new(p.x as u32, p.y as u32, p.role.clone()));
        }
        let entities: Vec<String> = group_entities(&boxes, &points).into_iter().map(|e| e.prompt).collect();
        if entities.is_empty() {
            return Err(bad_request("no boxes or points to track"));
        }
        let mut g = st.lock().expect("mock state poisoned");
        g.next_session += 1;
        let session = format!("mock-{}", g.next_session);
        g.sessions.insert(session.clone(), 0);
        Ok(Json(wire::TrackInitResponse { session, entities }).into_response())
    };
    run().unwrap_or_else(|r| r)
}

async fn track_step(State(st): State<Shared>, body: String) -> Response {
    let run = || -> std::result::Result<Response, Response> {
        let req: wire::TrackStepRequest = admit(&st, wire::TRACK_STEP, &body)?;
        check_image(&req.image)?;
        let mut g = st.lock().expect("mock state poisoned");
        let step = g
            .sessions
            .get_mut(&req.session)
            .ok_or_else(|| reject(StatusCode::NOT_FOUND, "session", format!("unknown session {}", req.session)))?;
        let k = *step;
        *step += 1;
        let track = &g.script.track;
        let masks = if track.is_empty() { Vec::new() } else { track[k.min(track.len() - 1)].clone() };
        Ok(Json(wire::MasksResponse { masks }).into_response())
    };
    run().unwrap_or_else(|r| r)
}

async fn track_close(State(st): State<Shared>, body: String) -> Response {
    let run = || -> std::result::Result<Response, Response> {
        let req: wire::SessionRef = admit(&st, wire::TRACK_CLOSE, &body)?;
        let mut g = st.lock().expect("mock state poisoned");
        g.sessions
            .remove(&req.session)
            .ok_or_else(|| reject(StatusCode::NOT_FOUND, "session", format!("unknown session {}", req.session)))?;
        Ok(Json(serde_json::json!({})).into_response())
    };
    run().unwrap_or_else(|r| r)
}

async fn annotate(State(st): State<Shared>, body: String) -> Response {
    let run = || -> std::result::Result<Response, Response> {
        let req: wire::AnnotateRequest = admit(&st, wire::ANNOTATE, &body)?;
        check_image(&req.image)?;
        let selections = st.lock().expect("mock state poisoned").script.selections.clone();
        Ok(Json(wire::AnnotateResponse { selections }).into_response())
    };
    run().unwrap_or_else(|r| r)
}

/// A scripted gateway listening on a loopback port until dropped.
#[derive(Debug)]
pub struct MockGateway {
    server: ServerHandle,
    state: Shared,
}

impl std::fmt::Debug for Inner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockGateway").field("requests", &self.log.len()).finish_non_exhaustive()
    }
}

impl MockGateway {
    pub fn start(script: MockScript) -> Result<Self> {
        let state: Shared = Arc::new(Mutex::new(Inner { failures_left: script.fail_first, script, ..Default::default() }));
        let app = Router::new()
            .route(wire::DETECT, post(detect))
            .route(wire::PROPOSE, post(propose))
            .route(wire::TRACK_INIT, post(track_init))
            .route(wire::TRACK_STEP, post(track_step))
            .route(wire::TRACK_CLOSE, post(track_close))
            .route(wire::ANNOTATE, post(annotate))
            .layer(DefaultBodyLimit::max(256 << 20))
            .with_state(state.clone());
        let addr: SocketAddr = ([127, 0, 0, 1], 0).into();
        let server = spawn_server(addr, move |listener, rx| async move {
            let stop = async {
                let _ = rx.await;
            };
            if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(stop).await {
                tracing::error!(error = %e, "mock gateway stopped");
            }
        })?;
        Ok(Self { server, state })
    }

    pub fn url(&self) -> String {
        self.server.url()
    }

    pub fn requests(&self) -> Vec<LoggedRequest> {
        self.state.lock().expect("mock state poisoned").log.clone()
    }

    /// Paths of all requests so far, in arrival order.
    pub fn paths(&self) -> Vec<String> {
        self.requests().into_iter().map(|r| r.path).collect()
    }

    pub fn set_unavailable(&self, down: bool) {
        self.state.lock().expect("mock state poisoned").script.unavailable = down;
    }

    pub fn set_track(&self, steps: Vec<Vec<RleMask>>) {
        self.state.lock().expect("mock state poisoned").script.track = steps;
    }

    /// Forget every open session, as an idle-evicting gateway would.
    pub fn expire_sessions(&self) {
        self.state.lock().expect("mock state poisoned").sessions.clear();
    }

    pub fn open_sessions(&self) -> usize {
        self.state.lock().expect("mock state poisoned").sessions.len()
    }
}
