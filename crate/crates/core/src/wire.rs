//! JSON bodies of the backend protocol and the streaming session API.
//!
//! Frames travel as base64 PNG, masks as [`RleMask`].
//!
//! Backend endpoints (all `POST`):
//!
//! | path              | request              | response              |
//! |-------------------|----------------------|-----------------------|
//! | `/v1/detect`      | [`DetectRequest`]    | [`DetectResponse`]    |
//! | `/v1/propose`     | [`ProposeRequest`]   | [`MasksResponse`]     |
//! | `/v1/track/init`  | [`TrackInitRequest`] | [`TrackInitResponse`] |
//! | `/v1/track/step`  | [`TrackStepRequest`] | [`MasksResponse`]     |
//! | `/v1/track/close` | [`SessionRef`]       | `{}`                  |
//! | `/v1/annotate`    | [`AnnotateRequest`]  | [`AnnotateResponse`]  |
//!
//! Malformed payloads answer 400, unknown sessions 404, an unavailable
//! model 503. Error bodies are [`ErrorBody`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::mask::{BoundingBox, Keypoint, RleMask};

pub const DETECT: &str = "/v1/detect";
pub const PROPOSE: &str = "/v1/propose";
pub const TRACK_INIT: &str = "/v1/track/init";
pub const TRACK_STEP: &str = "/v1/track/step";
pub const TRACK_CLOSE: &str = "/v1/track/close";
pub const ANNOTATE: &str = "/v1/annotate";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

impl From<&BoundingBox> for WireBox {
    fn from(b: &BoundingBox) -> Self {
        Self { x: b.x as f64, y: b.y as f64, w: b.w as f64, h: b.h as f64, score: b.score }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WirePoint {
    pub x: f64,
    pub y: f64,
    pub role: String,
}

impl From<&Keypoint> for WirePoint {
    fn from(k: &Keypoint) -> Self {
        Self { x: k.x as f64, y: k.y as f64, role: k.label.clone() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetectRequest {
    pub image: String,
    pub prompt: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetectResponse {
    pub boxes: Vec<WireBox>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProposeRequest {
    pub image: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MasksResponse {
    pub masks: Vec<RleMask>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrackInitRequest {
    pub image: String,
    pub boxes: Vec<WireBox>,
    pub points: Vec<WirePoint>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrackInitResponse {
    pub session: String,
    pub entities: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrackStepRequest {
    pub session: String,
    pub image: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionRef {
    pub session: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnnotateRequest {
    pub image: String,
    pub region_count: usize,
    pub task_prompt: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireSelection {
    pub index: i64,
    pub role: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnnotateResponse {
    pub selections: Vec<WireSelection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub category: String,
}

// Streaming session API.

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionCreateRequest {
    pub image: String,
    pub task: crate::init::TaskSpec,
    #[serde(default)]
    pub recompose: crate::recompose::RecomposeConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityInfo {
    pub id: u32,
    pub role: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionCreateResponse {
    pub session: String,
    pub image: String,
    pub entities: Vec<EntityInfo>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameRequest {
    pub image: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityStatusInfo {
    pub id: u32,
    pub status: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameResponse {
    pub image: String,
    pub entities: Vec<EntityStatusInfo>,
    pub latency_ms: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionStats {
    pub frames: u64,
    pub latency_p50_ms: Option<f64>,
    pub latency_p95_ms: Option<f64>,
    pub latency_max_ms: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CloseResponse {
    pub stats: SessionStats,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HealthResponse {
    pub ok: bool,
    pub backends: BTreeMap<String, String>,
}
