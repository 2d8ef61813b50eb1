//! Blocking client for the streaming service.

use std::time::Duration;

use serde::de::DeserializeOwned;
use ureq::Agent;

use crate::codec::{frame_from_b64, frame_to_b64};
use crate::error::{Error, Result};
use crate::init::TaskSpec;
use crate::mask::Frame;
use crate::recompose::RecomposeConfig;
use crate::wire::{
    CloseResponse, EntityInfo, ErrorBody, FrameRequest, FrameResponse, HealthResponse, SessionCreateRequest,
    SessionCreateResponse, SessionStats,
};

#[derive(Clone, Debug)]
pub struct CreatedSession {
    pub id: String,
    pub image: Frame,
    pub entities: Vec<EntityInfo>,
}

#[derive(Clone)]
pub struct ServiceClient {
    base: String,
    agent: Agent,
}

impl std::fmt::Debug for ServiceClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServiceClient").field("base", &self.base).finish()
    }
}

fn error_for(status: u16, body: &str) -> Error {
    let (msg, category) = match serde_json::from_str::<ErrorBody>(body) {
        Ok(b) => (b.error, b.category),
        Err(_) => (body.chars().take(200).collect(), String::new()),
    };
    match (status, category.as_str()) {
        (_, "prompt-unresolved") => Error::PromptUnresolved(msg),
        (_, "gripper-unresolved") => Error::GripperUnresolved(msg),
        (_, "init") => Error::Init(msg),
        (404, _) => Error::Session(msg),
        (429 | 503, _) => Error::Unavailable(msg),
        (400, "shape") => Error::Input(format!("wrong frame shape: {msg}")),
        (400, _) => Error::Input(msg),
        (504, _) => Error::Transport(format!("service timed out: {msg}")),
        _ => Error::Transport(format!("HTTP {status}: {msg}")),
    }
}

impl ServiceClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        let config = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build();
        Self { base: base_url.into().trim_end_matches('/').to_string(), agent: Agent::new_with_config(config) }
    }

    fn finish<R: DeserializeOwned>(&self, resp: std::result::Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<R> {
        let mut resp = resp.map_err(|e| Error::Transport(format!("{}: {e}", self.base)))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(1 << 30)
            .read_to_string()
            .map_err(|e| Error::Transport(format!("reading response: {e}")))?;
        if status != 200 {
            return Err(error_for(status, &text));
        }
        serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("malformed service response: {e}")))
    }

    fn post<B: serde::Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        let payload = serde_json::to_string(body).map_err(|e| Error::Format(e.to_string()))?;
        let resp = self
            .agent
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .send(payload.as_str());
        self.finish(resp)
    }

    pub fn create(&self, frame: &Frame, task: &TaskSpec, recompose: &RecomposeConfig) -> Result<CreatedSession> {
        let req = SessionCreateRequest { image: frame_to_b64(frame), task: task.clone(), recompose: recompose.clone() };
        let r: SessionCreateResponse = self.post("/v1/session", &req)?;
        Ok(CreatedSession { id: r.session, image: frame_from_b64(&r.image)?, entities: r.entities })
    }

    /// Send one frame; returns the recomposed frame and the raw response.
    pub fn frame(&self, session: &str, frame: &Frame) -> Result<(Frame, FrameResponse)> {
        let r: FrameResponse = self.post(&format!("/v1/session/{session}/frame"), &FrameRequest { image: frame_to_b64(frame) })?;
        Ok((frame_from_b64(&r.image)?, r))
    }

    pub fn close(&self, session: &str) -> Result<SessionStats> {
        let resp = self.agent.delete(format!("{}/v1/session/{session}", self.base)).call();
        self.finish::<CloseResponse>(resp).map(|r| r.stats)
    }

    pub fn health(&self) -> Result<HealthResponse> {
        let resp = self.agent.get(format!("{}/v1/health", self.base)).call();
        self.finish(resp)
    }
}
