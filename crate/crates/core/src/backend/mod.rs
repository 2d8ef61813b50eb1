//! Call contracts for the three model roles and their implementations.
//!
//! - [`Detector`]: open-vocabulary boxes for a text prompt.
//! - [`Segmenter`]: unprompted region proposals, plus promptable tracking
//!   through a [`SegmentHandle`].
//! - [`Annotator`]: picks task-relevant numbered regions from an annotated frame.
//!
//! [`builtin`] is an offline color-class backend, [`remote`] speaks the
//! HTTP wire protocol, [`scripted`] and [`replay`] exist for tests and demos,
//! and [`mock`] is an in-process gateway that serves the wire protocol from a
//! script.

pub mod builtin;
pub mod color;
pub mod mock;
pub mod remote;
pub mod replay;
pub mod scripted;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::AnnotatedFrame;
use crate::mask::{BoundingBox, Frame, Keypoint, Mask};
use crate::tracker::{Role, TrackStatus};

pub use builtin::{BuiltinConfig, ChromaAnnotator, ChromaDetector, ChromaSegmenter};
pub use color::{chroma_segment, ColorClass};
pub use remote::RemoteBackend;

pub trait Detector: Send + Sync {
    fn name(&self) -> String;

    /// Boxes sorted by descending score, all inside the frame. An empty list
    /// is a valid answer.
    fn detect(&self, frame: &Frame, prompt: &str) -> Result<Vec<BoundingBox>>;
}

pub trait Annotator: Send + Sync {
    fn name(&self) -> String;

    /// Region indices are 1-based and refer to `annotated.anchors`.
    fn select_regions(&self, annotated: &AnnotatedFrame, task_prompt: &str) -> Result<Vec<Selection>>;
}

pub trait Segmenter: Send + Sync {
    fn name(&self) -> String;

    fn propose(&self, frame: &Frame) -> Result<Vec<Mask>>;

    fn init_tracks(&self, frame: &Frame, prompts: &[EntityPrompt]) -> Result<SegmentHandle>;
}

/// Role label an annotator attaches to a region.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RegionRole {
    GripperLeft,
    GripperRight,
    Object(String),
}

impl RegionRole {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gripper-left" => Ok(RegionRole::GripperLeft),
            "gripper-right" => Ok(RegionRole::GripperRight),
            _ => match s.strip_prefix("object:") {
                Some(name) if !name.trim().is_empty() => Ok(RegionRole::Object(name.trim().to_string())),
                _ => Err(Error::Protocol(format!("unknown region role {s:?}"))),
            },
        }
    }

    pub fn is_gripper(&self) -> bool {
        matches!(self, RegionRole::GripperLeft | RegionRole::GripperRight)
    }
}

impl fmt::Display for RegionRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionRole::GripperLeft => f.write_str("gripper-left"),
            RegionRole::GripperRight => f.write_str("gripper-right"),
            RegionRole::Object(name) => write!(f, "object:{name}"),
        }
    }
}

impl Serialize for RegionRole {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RegionRole {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        RegionRole::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub index: usize,
    pub role: RegionRole,
}

impl Selection {
    pub fn new(index: usize, role: RegionRole) -> Self {
        Self { index, role }
    }
}

/// What seeds one tracked entity on the first frame.
#[derive(Clone, Debug, PartialEq)]
pub enum Seed {
    Box(BoundingBox),
    Points(Vec<Keypoint>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntityPrompt {
    pub role: Role,
    pub prompt: String,
    pub seed: Seed,
}

impl EntityPrompt {
    pub fn descriptor(&self) -> EntityDescriptor {
        EntityDescriptor { role: self.role, prompt: self.prompt.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityDescriptor {
    pub role: Role,
    pub prompt: String,
}

/// Group detector boxes and annotator keypoints into tracked entities.
///
/// Every box is one entity. A `gripper-left`/`gripper-right` keypoint pair
/// is a single gripper entity; every other keypoint is an entity of its own.
/// Entities are ordered boxes first, then keypoint groups by first
/// appearance.
pub fn group_entities(boxes: &[(String, BoundingBox)], points: &[Keypoint]) -> Vec<EntityPrompt> {
    let mut out: Vec<EntityPrompt> = boxes
        .iter()
        .map(|(prompt, b)| EntityPrompt { role: Role::Object, prompt: prompt.clone(), seed: Seed::Box(*b) })
        .collect();

    let left = points.iter().position(|p| p.label == "gripper-left");
    let right = points.iter().position(|p| p.label == "gripper-right");
    let pair = match (left, right) {
        (Some(l), Some(r)) => Some((l.min(r), l, r)),
        _ => None,
    };
    for (i, p) in points.iter().enumerate() {
        match pair {
            Some((first, l, r)) if i == first => out.push(EntityPrompt {
                role: Role::Gripper,
                prompt: "gripper".into(),
                seed: Seed::Points(vec![points[l].clone(), points[r].clone()]),
            }),
            Some((_, l, r)) if i == l || i == r => {}
            _ => {
                let (role, prompt) = match RegionRole::parse(&p.label) {
                    Ok(RegionRole::Object(name)) => (Role::Object, name),
                    Ok(_) => (Role::Gripper, "gripper".to_string()),
                    Err(_) => (Role::Object, p.label.clone()),
                };
                out.push(EntityPrompt { role, prompt, seed: Seed::Points(vec![p.clone()]) });
            }
        }
    }
    out
}

/// Status of an entity tracked as several parts.
pub(crate) fn combined_status(parts: &[TrackStatus]) -> TrackStatus {
    if parts.contains(&TrackStatus::Present) {
        TrackStatus::Present
    } else if !parts.is_empty() && parts.iter().all(|&s| s == TrackStatus::Lost) {
        TrackStatus::Lost
    } else {
        TrackStatus::Occluded
    }
}

/// Backend-private tracking memory behind a [`SegmentHandle`].
pub trait TrackMemory: Send {
    /// One mask per entity, in initialization order.
    fn propagate(&mut self, frame: &Frame) -> Result<Vec<Mask>>;

    /// Per-entity status after the latest frame, when the backend knows it.
    fn statuses(&self) -> Option<Vec<TrackStatus>> {
        None
    }

    fn close(&mut self) -> Result<()> {
        Ok(())
    }
}

/// A single-session tracking handle. Frames must be fed in order.
pub struct SegmentHandle {
    entities: Vec<EntityDescriptor>,
    memory: Box<dyn TrackMemory>,
    dims: (u32, u32),
    last: Vec<bool>,
    closed: bool,
}

impl fmt::Debug for SegmentHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SegmentHandle")
            .field("entities", &self.entities)
            .field("dims", &self.dims)
            .field("closed", &self.closed)
            .finish_non_exhaustive()
    }
}

impl SegmentHandle {
    pub fn new(entities: Vec<EntityDescriptor>, dims: (u32, u32), memory: Box<dyn TrackMemory>) -> Self {
        let n = entities.len();
        Self { entities, memory, dims, last: vec![true; n], closed: false }
    }

    pub fn entities(&self) -> &[EntityDescriptor] {
        &self.entities
    }

    pub fn dims(&self) -> (u32, u32) {
        self.dims
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn propagate(&mut self, frame: &Frame) -> Result<Vec<Mask>> {
        if self.closed {
            return Err(Error::Session("segment handle already closed".into()));
        }
        if frame.dims() != self.dims {
            return Err(Error::shape(self.dims, frame.dims()));
        }
        let masks = self.memory.propagate(frame)?;
        if masks.len() != self.entities.len() {
            return Err(Error::Protocol(format!(
                "segmenter returned {} masks for {} entities",
                masks.len(),
                self.entities.len()
            )));
        }
        if let Some(bad) = masks.iter().find(|m| m.dims() != self.dims) {
            return Err(Error::Protocol(format!("mask dims {:?} differ from frame dims {:?}", bad.dims(), self.dims)));
        }
        self.last = masks.iter().map(|m| !m.is_empty()).collect();
        Ok(masks)
    }

    pub fn statuses(&self) -> Vec<TrackStatus> {
        self.memory.statuses().unwrap_or_else(|| {
            self.last
                .iter()
                .map(|&seen| if seen { TrackStatus::Present } else { TrackStatus::Occluded })
                .collect()
        })
    }

    pub fn close(&mut self) -> Result<()> {
        if self.closed {
            return Ok(());
        }
        self.closed = true;
        self.memory.close()
    }
}

/// The three model roles a pipeline needs.
#[derive(Clone)]
pub struct Backends {
    pub detector: Arc<dyn Detector>,
    pub segmenter: Arc<dyn Segmenter>,
    pub annotator: Arc<dyn Annotator>,
}

impl fmt::Debug for Backends {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.identifiers()).finish()
    }
}

impl Backends {
    pub fn new(detector: Arc<dyn Detector>, segmenter: Arc<dyn Segmenter>, annotator: Arc<dyn Annotator>) -> Self {
        Self { detector, segmenter, annotator }
    }

    pub fn builtin(cfg: &BuiltinConfig) -> Result<Self> {
        cfg.backends()
    }

    pub fn remote(client: RemoteBackend) -> Self {
        let client = Arc::new(client);
        Self { detector: client.clone(), segmenter: client.clone(), annotator: client }
    }

    /// `(role, backend name)` pairs, recorded in provenance files.
    pub fn identifiers(&self) -> Vec<(&'static str, String)> {
        vec![
            ("detector", self.detector.name()),
            ("segmenter", self.segmenter.name()),
            ("annotator", self.annotator.name()),
        ]
    }
}
