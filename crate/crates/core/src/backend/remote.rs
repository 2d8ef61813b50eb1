//! Blocking client for the backend wire protocol.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use ureq::Agent;

use super::{
    Annotator, Detector, EntityDescriptor, EntityPrompt, RegionRole, Seed, SegmentHandle, Segmenter, Selection,
    TrackMemory,
};
use crate::codec::frame_to_b64;
use crate::error::{Error, Result};
use crate::init::AnnotatedFrame;
use crate::mask::{BoundingBox, Frame, Mask};
use crate::wire::{self, ErrorBody};

const MAX_RESPONSE_BYTES: u64 = 512 * 1024 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Extra attempts after the first failure.
    pub retries: u32,
    /// Delay before the first retry; doubles each time.
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { retries: 3, initial_backoff: Duration::from_millis(100) }
    }
}

#[derive(Clone)]
pub struct RemoteBackend {
    base: String,
    agent: Agent,
    retry: RetryPolicy,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend").field("base", &self.base).field("retry", &self.retry).finish()
    }
}

impl RemoteBackend {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self::with_options(base_url, RetryPolicy::default(), Duration::from_secs(60))
    }

    pub fn with_options(base_url: impl Into<String>, retry: RetryPolicy, timeout: Duration) -> Self {
        let config = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        Self {
            base: base_url.into().trim_end_matches('/').to_string(),
            agent: Agent::new_with_config(config),
            retry,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        let payload = serde_json::to_string(body).map_err(|e| Error::Protocol(format!("encoding request: {e}")))?;
        let mut attempt = 0u32;
        loop {
            match self.post_once(path, &payload) {
                Err(e) if e.is_retriable() && attempt < self.retry.retries => {
                    let wait = self.retry.initial_backoff * 2u32.saturating_pow(attempt);
                    tracing::debug!(path, attempt, ?wait, error = %e, "retrying backend call");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn post_once<R: DeserializeOwned>(&self, path: &str, payload: &str) -> Result<R> {
        let url = format!("{}{}", self.base, path);
        let mut resp = self
            .agent
            .post(&url)
            .header("content-type", "application/json")
            .send(payload)
            .map_err(|e| Error::Transport(format!("{url}: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(MAX_RESPONSE_BYTES)
            .read_to_string()
            .map_err(|e| Error::Transport(format!("{url}: reading body: {e}")))?;
        let detail = || {
            serde_json::from_str::<ErrorBody>(&text)
                .map(|b| b.error)
                .unwrap_or_else(|_| text.chars().take(200).collect())
        };
        match status {
            200 => serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("{path}: malformed response: {e}"))),
            400 => Err(Error::Protocol(format!("{path}: rejected request: {}", detail()))),
            404 => Err(Error::Session(format!("{path}: {}", detail()))),
            503 => Err(Error::Unavailable(format!("{path}: {}", detail()))),
            s if s >= 500 => Err(Error::Transport(format!("{path}: HTTP {s}: {}", detail()))),
            s => Err(Error::Protocol(format!("{path}: unexpected HTTP {s}: {}", detail()))),
        }
    }
}

fn decode_masks(masks: Vec<crate::mask::RleMask>, dims: (u32, u32)) -> Result<Vec<Mask>> {
    masks
        .into_iter()
        .map(|r| {
            if (r.w, r.h) != dims {
                return Err(Error::Protocol(format!("mask is {}x{}, frame is {}x{}", r.w, r.h, dims.0, dims.1)));
            }
            r.decode().map_err(|e| Error::Protocol(format!("mask payload: {e}")))
        })
        .collect()
}

impl Detector for RemoteBackend {
    fn name(&self) -> String {
        format!("remote:{}", self.base)
    }

    fn detect(&self, frame: &Frame, prompt: &str) -> Result<Vec<BoundingBox>> {
        let req = wire::DetectRequest { image: frame_to_b64(frame), prompt: prompt.to_string() };
        let resp: wire::DetectResponse = self.post(wire::DETECT, &req)?;
        let mut boxes: Vec<BoundingBox> = resp
            .boxes
            .iter()
            .filter_map(|b| BoundingBox::clamped(b.x, b.y, b.w, b.h, b.score, frame.width(), frame.height()))
            .collect();
        boxes.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(boxes)
    }
}

impl Annotator for RemoteBackend {
    fn name(&self) -> String {
        format!("remote:{}", self.base)
    }

    fn select_regions(&self, annotated: &AnnotatedFrame, task_prompt: &str) -> Result<Vec<Selection>> {
        let count = annotated.anchors.len();
        let req = wire::AnnotateRequest {
            image: frame_to_b64(&annotated.frame),
            region_count: count,
            task_prompt: task_prompt.to_string(),
        };
        let resp: wire::AnnotateResponse = self.post(wire::ANNOTATE, &req)?;
        resp.selections
            .into_iter()
            .map(|s| {
                if s.index < 1 || s.index as usize > count {
                    return Err(Error::Protocol(format!("annotator picked region {} of {count}", s.index)));
                }
                Ok(Selection::new(s.index as usize, RegionRole::parse(&s.role)?))
            })
            .collect()
    }
}

impl Segmenter for RemoteBackend {
    fn name(&self) -> String {
        format!("remote:{}", self.base)
    }

    fn propose(&self, frame: &Frame) -> Result<Vec<Mask>> {
        let resp: wire::MasksResponse = self.post(wire::PROPOSE, &wire::ProposeRequest { image: frame_to_b64(frame) })?;
        decode_masks(resp.masks, frame.dims())
    }

    fn init_tracks(&self, frame: &Frame, prompts: &[EntityPrompt]) -> Result<SegmentHandle> {
        let mut boxes = Vec::new();
        let mut points = Vec::new();
        for p in prompts {
            match &p.seed {
                Seed::Box(b) => boxes.push(wire::WireBox::from(b)),
                Seed::Points(pts) => points.extend(pts.iter().map(wire::WirePoint::from)),
            }
        }
        let req = wire::TrackInitRequest { image: frame_to_b64(frame), boxes, points };
        let resp: wire::TrackInitResponse = self.post(wire::TRACK_INIT, &req)?;
        if resp.entities.len() != prompts.len() {
            return Err(Error::Protocol(format!(
                "gateway created {} entities for {} prompts",
                resp.entities.len(),
                prompts.len()
            )));
        }
        let memory = RemoteMemory { client: self.clone(), session: resp.session, dims: frame.dims() };
        let descriptors: Vec<EntityDescriptor> = prompts.iter().map(EntityPrompt::descriptor).collect();
        Ok(SegmentHandle::new(descriptors, frame.dims(), Box::new(memory)))
    }
}

struct RemoteMemory {
    client: RemoteBackend,
    session: String,
    dims: (u32, u32),
}

impl TrackMemory for RemoteMemory {
    fn propagate(&mut self, frame: &Frame) -> Result<Vec<Mask>> {
        let req = wire::TrackStepRequest { session: self.session.clone(), image: frame_to_b64(frame) };
        let resp: wire::MasksResponse = self.client.post(wire::TRACK_STEP, &req)?;
        decode_masks(resp.masks, self.dims)
    }

    fn close(&mut self) -> Result<()> {
        let _: serde_json::Value = self.client.post(wire::TRACK_CLOSE, &wire::SessionRef { session: self.session.clone() })?;
        Ok(())
    }
}
