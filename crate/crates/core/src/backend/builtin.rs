//! Offline backend built on color classes.
//!
//! Works whenever the gripper and the task objects carry distinct saturated
//! colors, which is the common case for tabletop setups with painted
//! fingers and colored blocks. Low-saturation clutter is ignored.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::color::{threshold_masks, ColorClass};
use super::{
    combined_status, Annotator, Backends, Detector, EntityDescriptor, EntityPrompt, RegionRole, Seed, SegmentHandle, Segmenter,
    Selection, TrackMemory,
};
use crate::error::{Error, Result};
use crate::init::AnnotatedFrame;
use crate::mask::{bbox_of, centroid_f64, connected_components, union_all, BoundingBox, Frame, Keypoint, Mask};
use crate::tracker::{SessionState, TrackStatus, TrackerConfig};

/// Assigns one annotator role to regions of a color class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorRule {
    /// `"gripper"` (picks a left/right finger pair) or `"object:<name>"`.
    pub role: String,
    pub class: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuiltinConfig {
    pub classes: Vec<ColorClass>,
    pub min_area: usize,
    pub annotator: Vec<AnnotatorRule>,
    pub tracker: TrackerConfig,
}

impl Default for BuiltinConfig {
    fn default() -> Self {
        Self {
            classes: vec![
                ColorClass::new("red", 340.0, 20.0, 0.5, 0.25),
                ColorClass::new("yellow", 45.0, 70.0, 0.5, 0.25),
                ColorClass::new("green", 90.0, 150.0, 0.5, 0.25),
                ColorClass::new("blue", 200.0, 260.0, 0.5, 0.25),
            ],
            min_area: 30,
            annotator: vec![AnnotatorRule { role: "gripper".into(), class: "green".into() }],
            tracker: TrackerConfig::default(),
        }
    }
}

impl BuiltinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Config("builtin backend needs at least one color class".into()));
        }
        for c in &self.classes {
            c.validate()?;
        }
        for r in &self.annotator {
            if !self.classes.iter().any(|c| c.name == r.class) {
                return Err(Error::Config(format!("annotator rule refers to unknown class {:?}", r.class)));
            }
            if r.role != "gripper" && RegionRole::parse(&r.role).is_err() {
                return Err(Error::Config(format!("annotator rule has invalid role {:?}", r.role)));
            }
        }
        self.tracker.validate()
    }

    pub fn backends(&self) -> Result<Backends> {
        self.validate()?;
        Ok(Backends::new(
            Arc::new(ChromaDetector::new(self.classes.clone(), self.min_area)),
            Arc::new(ChromaSegmenter::new(self.classes.clone(), self.min_area, self.tracker)?),
            Arc::new(ChromaAnnotator::new(self.classes.clone(), self.annotator.clone())),
        ))
    }
}

fn components_per_class(frame: &Frame, classes: &[&ColorClass], min_area: usize) -> (Vec<Mask>, Vec<Vec<Mask>>) {
    let raw = threshold_masks(frame, classes);
    let comps = raw.iter().map(|m| connected_components(m, min_area.max(1))).collect();
    (raw, comps)
}

fn first_index(m: &Mask) -> usize {
    m.bits().iter().position(|&b| b != 0).unwrap_or(usize::MAX)
}

/// Boxes around components of every class whose name appears in the prompt.
#[derive(Clone, Debug)]
pub struct ChromaDetector {
    classes: Vec<ColorClass>,
    min_area: usize,
}

impl ChromaDetector {
    pub fn new(classes: Vec<ColorClass>, min_area: usize) -> Self {
        Self { classes, min_area }
    }
}

impl Detector for ChromaDetector {
    fn name(&self) -> String {
        "builtin-chroma-detector".into()
    }

    fn detect(&self, frame: &Frame, prompt: &str) -> Result<Vec<BoundingBox>> {
        let words: Vec<String> = prompt
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect();
        let classes: Vec<&ColorClass> = self
            .classes
            .iter()
            .filter(|c| words.iter().any(|w| *w == c.name.to_lowercase()))
            .collect();
        if classes.is_empty() {
            return Ok(Vec::new());
        }
        let (_, comps) = components_per_class(frame, &classes, self.min_area);
        let all: Vec<&Mask> = comps.iter().flatten().collect();
        let largest = all.iter().map(|m| m.area()).max().unwrap_or(1) as f64;
        let mut boxes: Vec<(BoundingBox, usize)> = all
            .iter()
            .map(|m| {
                let mut b = bbox_of(m).expect("components are nonempty");
                b.score = m.area() as f64 / largest;
                (b, first_index(m))
            })
            .collect();
        boxes.sort_by(|a, b| b.0.score.total_cmp(&a.0.score).then(a.1.cmp(&b.1)));
        Ok(boxes.into_iter().map(|(b, _)| b).collect())
    }
}

/// Color-class proposals and tracking.
///
/// Each entity is bound at init to the class covering most of its seed.
/// Tracking runs one tracker state per class so candidates never cross
/// classes, and an entity made of several components (a finger pair, say)
/// is tracked as several parts whose masks are united on output.
#[derive(Clone, Debug)]
pub struct ChromaSegmenter {
    classes: Vec<ColorClass>,
    min_area: usize,
    tracker: TrackerConfig,
}

impl ChromaSegmenter {
    pub fn new(classes: Vec<ColorClass>, min_area: usize, tracker: TrackerConfig) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Config("builtin segmenter needs at least one color class".into()));
        }
        for c in &classes {
            c.validate()?;
        }
        tracker.validate()?;
        Ok(Self { classes, min_area, tracker })
    }

    pub fn classes(&self) -> &[ColorClass] {
        &self.classes
    }

    fn best_class_in(&self, raw: &[Mask], x0: u32, y0: u32, x1: u32, y1: u32) -> Option<usize> {
        let mut best: Option<(usize, usize)> = None;
        for (k, m) in raw.iter().enumerate() {
            let mut n = 0usize;
            for y in y0..y1 {
                for x in x0..x1 {
                    n += m.get(x, y) as usize;
                }
            }
            if n > 0 && best.is_none_or(|(_, bn)| n > bn) {
                best = Some((k, n));
            }
        }
        best.map(|(k, _)| k)
    }

    fn parts_for(&self, frame: &Frame, raw: &[Mask], comps: &[Vec<Mask>], p: &EntityPrompt) -> Result<Vec<(usize, Mask)>> {
        let (w, h) = frame.dims();
        match &p.seed {
            Seed::Box(b) => {
                let k = self
                    .best_class_in(raw, b.x, b.y, b.right().min(w), b.bottom().min(h))
                    .ok_or_else(|| Error::Init(format!("box for {:?} covers no pixels of any color class", p.prompt)))?;
                let parts: Vec<(usize, Mask)> = comps[k]
                    .iter()
                    .filter(|c| {
                        let inside = c.set_pixels().filter(|&(x, y)| b.contains(x, y)).count();
                        2 * inside >= c.area()
                    })
                    .map(|c| (k, c.clone()))
                    .collect();
                if parts.is_empty() {
                    return Err(Error::Init(format!(
                        "box for {:?} holds no {} region of at least {} pixels",
                        p.prompt, self.classes[k].name, self.min_area
                    )));
                }
                Ok(parts)
            }
            Seed::Points(points) => {
                let mut parts: Vec<(usize, Mask)> = Vec::new();
                for kp in points {
                    let part = self.part_at(raw, comps, kp, w, h).ok_or_else(|| {
                        Error::Init(format!("keypoint {:?} at ({}, {}) lies on no color region", kp.label, kp.x, kp.y))
                    })?;
                    if !parts.contains(&part) {
                        parts.push(part);
                    }
                }
                Ok(parts)
            }
        }
    }

    fn part_at(&self, raw: &[Mask], comps: &[Vec<Mask>], kp: &Keypoint, w: u32, h: u32) -> Option<(usize, Mask)> {
        if kp.x >= w || kp.y >= h {
            return None;
        }
        const R: u32 = 2;
        let (x0, y0) = (kp.x.saturating_sub(R), kp.y.saturating_sub(R));
        let (x1, y1) = ((kp.x + R + 1).min(w), (kp.y + R + 1).min(h));
        let k = self.best_class_in(raw, x0, y0, x1, y1)?;
        if let Some(c) = comps[k].iter().find(|c| c.get(kp.x, kp.y)) {
            return Some((k, c.clone()));
        }
        comps[k]
            .iter()
            .find(|c| (y0..y1).any(|y| (x0..x1).any(|x| c.get(x, y))))
            .map(|c| (k, c.clone()))
    }
}

impl Segmenter for ChromaSegmenter {
    fn name(&self) -> String {
        "builtin-chroma-segmenter".into()
    }

    fn propose(&self, frame: &Frame) -> Result<Vec<Mask>> {
        let classes: Vec<&ColorClass> = self.classes.iter().collect();
        let (_, comps) = components_per_class(frame, &classes, self.min_area);
        let mut all: Vec<(usize, usize, Mask)> = comps
            .into_iter()
            .flatten()
            .map(|m| (m.area(), first_index(&m), m))
            .collect();
        all.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(all.into_iter().map(|t| t.2).collect())
    }

    fn init_tracks(&self, frame: &Frame, prompts: &[EntityPrompt]) -> Result<SegmentHandle> {
        let classes: Vec<&ColorClass> = self.classes.iter().collect();
        let (raw, comps) = components_per_class(frame, &classes, self.min_area);

        // class -> (entity index, part mask)
        let mut per_class: Vec<Vec<(usize, Mask)>> = vec![Vec::new(); classes.len()];
        for (ei, p) in prompts.iter().enumerate() {
            for (k, part) in self.parts_for(frame, &raw, &comps, p)? {
                per_class[k].push((ei, part));
            }
        }

        let mut states = Vec::new();
        let mut parts_of: Vec<Vec<(usize, usize)>> = vec![Vec::new(); prompts.len()];
        for (k, parts) in per_class.into_iter().enumerate() {
            if parts.is_empty() {
                continue;
            }
            let si = states.len();
            let mut seeds = Vec::with_capacity(parts.len());
            for (ti, (ei, mask)) in parts.into_iter().enumerate() {
                parts_of[ei].push((si, ti));
                seeds.push((prompts[ei].role, prompts[ei].prompt.clone(), mask));
            }
            states.push((k, SessionState::new(frame, seeds, self.tracker)?));
        }

        let memory = ChromaMemory {
            classes: self.classes.clone(),
            min_area: self.min_area,
            states,
            parts_of,
        };
        let descriptors: Vec<EntityDescriptor> = prompts.iter().map(EntityPrompt::descriptor).collect();
        Ok(SegmentHandle::new(descriptors, frame.dims(), Box::new(memory)))
    }
}

struct ChromaMemory {
    classes: Vec<ColorClass>,
    min_area: usize,
    /// (class index, tracker state over that class's components)
    states: Vec<(usize, SessionState)>,
    /// entity -> (state index, track index) parts
    parts_of: Vec<Vec<(usize, usize)>>,
}

impl TrackMemory for ChromaMemory {
    fn propagate(&mut self, frame: &Frame) -> Result<Vec<Mask>> {
        let classes: Vec<&ColorClass> = self.states.iter().map(|(k, _)| &self.classes[*k]).collect();
        let (_, comps) = components_per_class(frame, &classes, self.min_area);
        let mut outputs = Vec::with_capacity(self.states.len());
        for ((_, state), cands) in self.states.iter_mut().zip(comps) {
            outputs.push(state.step(frame, cands)?);
        }
        self.parts_of
            .iter()
            .map(|parts| union_all(frame.dims(), parts.iter().map(|&(s, t)| &outputs[s][t])))
            .collect()
    }

    fn statuses(&self) -> Option<Vec<TrackStatus>> {
        Some(
            self.parts_of
                .iter()
                .map(|parts| {
                    let st: Vec<TrackStatus> = parts.iter().map(|&(s, t)| self.states[s].1.entities()[t].status()).collect();
                    combined_status(&st)
                })
                .collect(),
        )
    }
}

/// Rule-based stand-in for a vision-language model: picks regions by color.
#[derive(Clone, Debug)]
pub struct ChromaAnnotator {
    classes: Vec<ColorClass>,
    rules: Vec<AnnotatorRule>,
}

impl ChromaAnnotator {
    pub fn new(classes: Vec<ColorClass>, rules: Vec<AnnotatorRule>) -> Self {
        Self { classes, rules }
    }

    /// Share of the region's visible pixels in `class`. Pixels under a
    /// number tag are skipped, since the tag paints over the region.
    fn coverage(&self, af: &AnnotatedFrame, region: &Mask, class: &ColorClass) -> f64 {
        let visible: Vec<(u32, u32)> = region.set_pixels().filter(|&(x, y)| !af.tags.iter().any(|t| t.contains(x, y))).collect();
        if visible.is_empty() {
            return 0.0;
        }
        let hits = visible.iter().filter(|&&(x, y)| class.matches(af.frame.get(x, y))).count();
        hits as f64 / visible.len() as f64
    }
}

impl Annotator for ChromaAnnotator {
    fn name(&self) -> String {
        "builtin-chroma-annotator".into()
    }

    fn select_regions(&self, annotated: &AnnotatedFrame, _task_prompt: &str) -> Result<Vec<Selection>> {
        let mut used = vec![false; annotated.regions.len()];
        let mut out = Vec::new();
        for rule in &self.rules {
            let class = self
                .classes
                .iter()
                .find(|c| c.name == rule.class)
                .ok_or_else(|| Error::Config(format!("annotator rule refers to unknown class {:?}", rule.class)))?;
            // (region index, area) of unused regions mostly in this class
            let mut hits: Vec<(usize, usize)> = annotated
                .regions
                .iter()
                .enumerate()
                .filter(|(i, r)| !used[*i] && self.coverage(annotated, r, class) >= 0.5)
                .map(|(i, r)| (i, r.area()))
                .collect();
            hits.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

            if rule.role == "gripper" {
                let mut fingers: Vec<(usize, f64)> = hits
                    .iter()
                    .take(2)
                    .map(|&(i, _)| (i, centroid_f64(&annotated.regions[i]).map_or(0.0, |c| c.0)))
                    .collect();
                fingers.sort_by(|a, b| a.1.total_cmp(&b.1));
                let roles = [RegionRole::GripperLeft, RegionRole::GripperRight];
                for ((i, _), role) in fingers.into_iter().zip(roles) {
                    used[i] = true;
                    out.push(Selection::new(i + 1, role));
                }
            } else if let Some(&(i, _)) = hits.first() {
                used[i] = true;
                out.push(Selection::new(i + 1, RegionRole::parse(&rule.role)?));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::group_entities;
    use crate::mask::iou;

    const GREEN: [u8; 3] = [20, 220, 40];
    const BLUE: [u8; 3] = [30, 60, 230];

    fn seg() -> ChromaSegmenter {
        let cfg = BuiltinConfig::default();
        ChromaSegmenter::new(cfg.classes, 10, cfg.tracker).unwrap()
    }

    fn frame_with(rects: &[([i64; 4], [u8; 3])]) -> Frame {
        let mut f = Frame::filled(120, 80, [100, 100, 100]);
        for &(r, c) in rects {
            f.fill_rect(r[0], r[1], r[2], r[3], c);
        }
        f
    }

    #[test]
    fn moving_green_entity_is_followed() {
        let s = seg();
        let f0 = frame_with(&[([10, 10, 30, 30], GREEN)]);
        let prompts = group_entities(&[("green block".into(), BoundingBox::new(8, 8, 25, 25, 1.0))], &[]);
        let mut h = s.init_tracks(&f0, &prompts).unwrap();
        for t in 0..20i64 {
            let f = frame_with(&[([10 + 3 * t, 10 + t, 30 + 3 * t, 30 + t], GREEN)]);
            let truth = Mask::rect(120, 80, 10 + 3 * t, 10 + t, 30 + 3 * t, 30 + t);
            let out = h.propagate(&f).unwrap();
            assert_eq!(out.len(), 1);
            assert!(iou(&out[0], &truth).unwrap() >= 0.9, "frame {t}");
        }
    }

    #[test]
    fn distinct_hues_never_merge() {
        let s = seg();
        let f0 = frame_with(&[([10, 10, 30, 30], GREEN), ([60, 10, 80, 30], BLUE)]);
        let prompts = group_entities(
            &[("green".into(), BoundingBox::new(10, 10, 20, 20, 1.0)), ("blue".into(), BoundingBox::new(60, 10, 20, 20, 1.0))],
            &[],
        );
        let mut h = s.init_tracks(&f0, &prompts).unwrap();
        for t in 0..=10i64 {
            // approach until touching
            let f = frame_with(&[([10 + 2 * t, 10, 30 + 2 * t, 30], GREEN), ([60 - t, 10, 80 - t, 30], BLUE)]);
            let out = h.propagate(&f).unwrap();
            assert_eq!(crate::mask::intersection(&out[0], &out[1]).unwrap().area(), 0);
            assert_eq!(out[0], Mask::rect(120, 80, 10 + 2 * t, 10, 30 + 2 * t, 30));
            assert_eq!(out[1], Mask::rect(120, 80, 60 - t, 10, 80 - t, 30));
        }
    }

    #[test]
    fn box_without_color_fails_init() {
        let s = seg();
        let f0 = frame_with(&[([10, 10, 30, 30], GREEN)]);
        let prompts = group_entities(&[("cube".into(), BoundingBox::new(60, 40, 20, 20, 1.0))], &[]);
        assert_eq!(s.init_tracks(&f0, &prompts).unwrap_err().category(), "init");
    }

    #[test]
    fn finger_pair_is_one_entity() {
        let s = seg();
        let f0 = frame_with(&[([10, 10, 16, 40], GREEN), ([40, 10, 46, 40], GREEN), ([70, 50, 90, 70], BLUE)]);
        let pts = vec![Keypoint::new(12, 25, "gripper-left"), Keypoint::new(43, 25, "gripper-right")];
        let prompts = group_entities(&[("blue cube".into(), BoundingBox::new(68, 48, 24, 24, 1.0))], &pts);
        let mut h = s.init_tracks(&f0, &prompts).unwrap();
        assert_eq!(h.entities().len(), 2);
        let out = h.propagate(&f0).unwrap();
        let fingers = crate::mask::union(&Mask::rect(120, 80, 10, 10, 16, 40), &Mask::rect(120, 80, 40, 10, 46, 40)).unwrap();
        assert_eq!(out[1], fingers);
        assert_eq!(out[0], Mask::rect(120, 80, 70, 50, 90, 70));

        // right finger vanishes: gripper still present, its mask shrinks
        let f1 = frame_with(&[([10, 10, 16, 40], GREEN), ([70, 50, 90, 70], BLUE)]);
        let out = h.propagate(&f1).unwrap();
        assert_eq!(out[1], Mask::rect(120, 80, 10, 10, 16, 40));
        assert_eq!(h.statuses(), vec![TrackStatus::Present, TrackStatus::Present]);

        let f2 = frame_with(&[]);
        let out = h.propagate(&f2).unwrap();
        assert!(out.iter().all(Mask::is_empty));
        assert_eq!(h.statuses(), vec![TrackStatus::Occluded, TrackStatus::Occluded]);
    }

    #[test]
    fn detector_matches_class_names() {
        let d = ChromaDetector::new(BuiltinConfig::default().classes, 10);
        let f = frame_with(&[([10, 10, 30, 30], BLUE), ([60, 10, 70, 20], BLUE), ([80, 50, 90, 60], GREEN)]);
        let boxes = d.detect(&f, "Blue cube").unwrap();
        assert_eq!(boxes.len(), 2);
        assert_eq!((boxes[0].x, boxes[0].y, boxes[0].w, boxes[0].h), (10, 10, 20, 20));
        assert_eq!(boxes[0].score, 1.0);
        assert!((boxes[1].score - 0.25).abs() < 1e-12);
        assert!(d.detect(&f, "purple pyramid").unwrap().is_empty());
    }

    #[test]
    fn proposals_follow_component_order() {
        let s = seg();
        let f = frame_with(&[([10, 10, 16, 40], GREEN), ([40, 10, 60, 40], BLUE), ([70, 50, 80, 60], GREEN)]);
        let props = s.propose(&f).unwrap();
        let areas: Vec<usize> = props.iter().map(Mask::area).collect();
        assert_eq!(areas, vec![600, 180, 100]);
    }

    #[test]
    fn thin_fingers_under_tags_are_still_picked() {
        // 5 px wide fingers: the number tag hides most of each one
        let f = frame_with(&[([20, 20, 25, 39], GREEN), ([40, 20, 45, 39], GREEN)]);
        let regions = seg().propose(&f).unwrap();
        let af = crate::init::render_annotations(&f, &regions).unwrap();
        let cfg = BuiltinConfig::default();
        let got = ChromaAnnotator::new(cfg.classes, cfg.annotator).select_regions(&af, "").unwrap();
        assert_eq!(got, vec![Selection::new(1, RegionRole::GripperLeft), Selection::new(2, RegionRole::GripperRight)]);
    }
}
