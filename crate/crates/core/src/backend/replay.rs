//! A segmenter that replays known per-frame masks through the tracker.
//!
//! Feeding ground-truth masks isolates everything downstream of
//! segmentation: association, compositing and storage.

use std::sync::Arc;

use super::{combined_status, EntityDescriptor, EntityPrompt, Seed, SegmentHandle, Segmenter, TrackMemory};
use crate::error::{Error, Result};
use crate::mask::{union_all, Frame, Mask};
use crate::tracker::{SessionState, TrackStatus, TrackerConfig};

#[derive(Clone, Debug)]
pub struct ReplaySegmenter {
    proposals: Vec<Mask>,
    frames: Arc<Vec<Vec<Mask>>>,
    tracker: TrackerConfig,
}

impl ReplaySegmenter {
    /// `frames[t]` holds the candidate masks offered on frame `t`.
    pub fn new(frames: Vec<Vec<Mask>>, tracker: TrackerConfig) -> Self {
        let proposals = frames.first().cloned().unwrap_or_default();
        Self { proposals, frames: Arc::new(frames), tracker }
    }

    pub fn with_proposals(mut self, proposals: Vec<Mask>) -> Self {
        self.proposals = proposals;
        self
    }
}

impl Segmenter for ReplaySegmenter {
    fn name(&self) -> String {
        "replay-segmenter".into()
    }

    fn propose(&self, _frame: &Frame) -> Result<Vec<Mask>> {
        Ok(self.proposals.iter().filter(|m| !m.is_empty()).cloned().collect())
    }

    fn init_tracks(&self, frame: &Frame, prompts: &[EntityPrompt]) -> Result<SegmentHandle> {
        let first = self
            .frames
            .first()
            .ok_or_else(|| Error::State("replay script has no frames".into()))?;
        let mut seeds = Vec::new();
        let mut parts_of = Vec::with_capacity(prompts.len());
        for p in prompts {
            let picks: Vec<usize> = match &p.seed {
                Seed::Box(b) => {
                    let best = first
                        .iter()
                        .enumerate()
                        .map(|(i, m)| (i, m.set_pixels().filter(|&(x, y)| b.contains(x, y)).count()))
                        .filter(|&(_, n)| n > 0)
                        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)));
                    best.map(|(i, _)| vec![i]).unwrap_or_default()
                }
                Seed::Points(points) => {
                    let mut v: Vec<usize> = Vec::new();
                    for kp in points {
                        if let Some(i) = first.iter().position(|m| kp.x < m.width() && kp.y < m.height() && m.get(kp.x, kp.y)) {
                            if !v.contains(&i) {
                                v.push(i);
                            }
                        }
                    }
                    v
                }
            };
            if picks.is_empty() {
                return Err(Error::Init(format!("no replayed mask under the seed for {:?}", p.prompt)));
            }
            let mut parts = Vec::new();
            for i in picks {
                parts.push(seeds.len());
                seeds.push((p.role, p.prompt.clone(), first[i].clone()));
            }
            parts_of.push(parts);
        }
        let state = SessionState::new(frame, seeds, self.tracker)?;
        let memory = ReplayMemory { frames: self.frames.clone(), next: 0, state, parts_of };
        let descriptors: Vec<EntityDescriptor> = prompts.iter().map(EntityPrompt::descriptor).collect();
        Ok(SegmentHandle::new(descriptors, frame.dims(), Box::new(memory)))
    }
}

struct ReplayMemory {
    frames: Arc<Vec<Vec<Mask>>>,
    next: usize,
    state: SessionState,
    parts_of: Vec<Vec<usize>>,
}

impl TrackMemory for ReplayMemory {
    fn propagate(&mut self, frame: &Frame) -> Result<Vec<Mask>> {
        let cands = self
            .frames
            .get(self.next)
            .ok_or_else(|| Error::State(format!("replay script exhausted after {} frames", self.frames.len())))?
            .clone();
        self.next += 1;
        let out = self.state.step(frame, cands)?;
        self.parts_of
            .iter()
            .map(|parts| union_all(frame.dims(), parts.iter().map(|&t| &out[t])))
            .collect()
    }

    fn statuses(&self) -> Option<Vec<TrackStatus>> {
        let ents = self.state.entities();
        Some(
            self.parts_of
                .iter()
                .map(|parts| {
                    let st: Vec<TrackStatus> = parts.iter().map(|&t| ents[t].status()).collect();
                    combined_status(&st)
                })
                .collect(),
        )
    }
}
