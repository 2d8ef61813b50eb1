//! First-frame initialization: detect prompted objects, number the region
//! proposals for the annotator, and seed the segmenter's tracks.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::backend::{group_entities, Annotator, Backends, Detector, EntityPrompt, RegionRole, SegmentHandle};
use crate::error::{Error, Result};
use crate::mask::{centroid, Frame, Keypoint, Mask};

/// How a prompt with several detections picks its box.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disambiguation {
    #[default]
    ArgmaxScore,
    AnnotatorSpatial,
}

/// What to keep in view.
///
/// `objects` go through the detector. The gripper, and any object the
/// annotator labels among the region proposals, go through keypoints. An
/// empty `gripper` means no gripper entity is required.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    #[serde(default)]
    pub objects: Vec<String>,
    #[serde(default)]
    pub gripper: String,
    #[serde(default)]
    pub task: String,
    #[serde(default)]
    pub disambiguation: Disambiguation,
}

impl TaskSpec {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: TaskSpec =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.objects.iter().any(|o| o.trim().is_empty()) {
            return Err(Error::Config("object prompts must be nonempty".into()));
        }
        if self.objects.is_empty() && !self.wants_gripper() {
            return Err(Error::Config("task names neither objects nor a gripper".into()));
        }
        if self.disambiguation == Disambiguation::AnnotatorSpatial && self.task.trim().is_empty() {
            return Err(Error::Config("spatial disambiguation needs a task prompt".into()));
        }
        Ok(())
    }

    pub fn wants_gripper(&self) -> bool {
        !self.gripper.trim().is_empty()
    }

    /// Text handed to the annotator along with the numbered frame.
    pub fn annotator_prompt(&self) -> String {
        match (self.task.trim(), self.gripper.trim()) {
            (t, "") => t.to_string(),
            ("", g) => format!("gripper: {g}"),
            (t, g) => format!("{t}\ngripper: {g}"),
        }
    }
}

/// Pixel rectangle `[x0, x1) × [y0, y1)`, possibly reaching past the frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagRect {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl TagRect {
    fn overlaps(&self, o: &TagRect) -> bool {
        self.x0 < o.x1 && o.x0 < self.x1 && self.y0 < o.y1 && o.y0 < self.y1
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        let (x, y) = (x as i64, y as i64);
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// A frame with a numeric tag drawn on every region.
#[derive(Clone, Debug)]
pub struct AnnotatedFrame {
    pub frame: Frame,
    /// `(label, tag anchor)`, labels `1..=N` in region order.
    pub anchors: Vec<(usize, Keypoint)>,
    /// The regions the labels refer to.
    pub regions: Vec<Mask>,
    /// A point inside each region, nearest its centroid.
    pub interior: Vec<Keypoint>,
    pub tags: Vec<TagRect>,
}

impl AnnotatedFrame {
    pub fn tag_height(&self) -> u32 {
        tag_height(self.frame.height())
    }
}

pub fn tag_height(frame_height: u32) -> u32 {
    (frame_height / 45).max(12)
}

const DIGITS: [[u8; 7]; 10] = [
    [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
    [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
    [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
    [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
    [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
    [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
    [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
    [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
    [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
    [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
];

struct TagLayout {
    height: i64,
    scale: i64,
}

impl TagLayout {
    fn new(frame_height: u32) -> Self {
        let height = tag_height(frame_height) as i64;
        Self { height, scale: (height / 9).max(1) }
    }

    fn width(&self, label: &str) -> i64 {
        let s = self.scale;
        label.len() as i64 * 6 * s - s + 4 * s
    }

    fn rect(&self, anchor: (i64, i64), label: &str) -> TagRect {
        let w = self.width(label);
        let x0 = anchor.0 - w / 2;
        let y0 = anchor.1 - self.height / 2;
        TagRect { x0, y0, x1: x0 + w, y1: y0 + self.height }
    }

    fn draw(&self, frame: &mut Frame, r: &TagRect, label: &str) {
        let (fw, fh) = (frame.width() as i64, frame.height() as i64);
        let radius = 2 * self.scale;
        let in_corner = |x: i64, y: i64| {
            let cx = if x < r.x0 + radius { r.x0 + radius } else if x >= r.x1 - radius { r.x1 - radius - 1 } else { return false };
            let cy = if y < r.y0 + radius { r.y0 + radius } else if y >= r.y1 - radius { r.y1 - radius - 1 } else { return false };
            (x - cx).pow(2) + (y - cy).pow(2) > radius * radius
        };
        for y in r.y0.max(0)..r.y1.min(fh) {
            for x in r.x0.max(0)..r.x1.min(fw) {
                if !in_corner(x, y) {
                    frame.put(x as u32, y as u32, [0, 0, 0]);
                }
            }
        }
        let s = self.scale;
        let top = r.y0 + (self.height - 7 * s) / 2;
        let mut left = r.x0 + 2 * s;
        for ch in label.bytes() {
            let glyph = &DIGITS[(ch - b'0') as usize];
            for (gy, row) in glyph.iter().enumerate() {
                for gx in 0..5 {
                    if row & (0x10 >> gx) == 0 {
                        continue;
                    }
                    let px = left + gx as i64 * s;
                    let py = top + gy as i64 * s;
                    frame.fill_rect(px, py, px + s, py + s, [255, 255, 255]);
                }
            }
            left += 6 * s;
        }
    }
}

/// The set pixel closest to the centroid, ties in row-major order.
fn interior_point(m: &Mask) -> Result<Keypoint> {
    let c = centroid(m)?;
    if m.get(c.x, c.y) {
        return Ok(c);
    }
    let (cx, cy) = (c.x as i64, c.y as i64);
    let (x, y) = m
        .set_pixels()
        .min_by_key(|&(x, y)| (x as i64 - cx).pow(2) + (y as i64 - cy).pow(2))
        .ok_or(Error::EmptyMask)?;
    Ok(Keypoint::new(x, y, ""))
}

/// Draw numbered tags at region centroids.
///
/// A tag that would overlap an earlier one moves down by one tag height
/// until it is clear.
pub fn render_annotations(frame: &Frame, regions: &[Mask]) -> Result<AnnotatedFrame> {
    let layout = TagLayout::new(frame.height());
    let mut out = frame.clone();
    let mut anchors = Vec::with_capacity(regions.len());
    let mut interior = Vec::with_capacity(regions.len());
    let mut tags: Vec<TagRect> = Vec::with_capacity(regions.len());
    for (i, region) in regions.iter().enumerate() {
        if region.dims() != frame.dims() {
            return Err(Error::shape(frame.dims(), region.dims()));
        }
        let c = centroid(region)?;
        interior.push(interior_point(region)?);
        let label = (i + 1).to_string();
        let mut anchor = (c.x as i64, c.y as i64);
        let mut rect = layout.rect(anchor, &label);
        while tags.iter().any(|t| t.overlaps(&rect)) {
            anchor.1 += layout.height;
            rect = layout.rect(anchor, &label);
        }
        let ay = anchor.1.min(frame.height() as i64 - 1) as u32;
        anchors.push((i + 1, Keypoint::new(anchor.0 as u32, ay, label.clone())));
        tags.push(rect);
    }
    for (rect, (label, _)) in tags.iter().zip(&anchors) {
        layout.draw(&mut out, rect, &label.to_string());
    }
    Ok(AnnotatedFrame { frame: out, anchors, regions: regions.to_vec(), interior, tags })
}

/// Ask the annotator which numbered regions matter and turn its answer
/// into labeled keypoints inside those regions.
pub fn select_keypoints(af: &AnnotatedFrame, spec: &TaskSpec, annotator: &dyn Annotator) -> Result<Vec<Keypoint>> {
    let selections = annotator.select_regions(af, &spec.annotator_prompt())?;
    let n = af.regions.len();
    let mut seen: Vec<&RegionRole> = Vec::new();
    let mut out = Vec::with_capacity(selections.len());
    for s in &selections {
        if s.index < 1 || s.index > n {
            return Err(Error::Protocol(format!("annotator picked region {} of {n}", s.index)));
        }
        if seen.contains(&&s.role) {
            return Err(Error::Protocol(format!("annotator assigned {} twice", s.role)));
        }
        seen.push(&s.role);
        out.push(af.interior[s.index - 1].with_label(s.role.to_string()));
    }
    if spec.wants_gripper() {
        for role in [RegionRole::GripperLeft, RegionRole::GripperRight] {
            if !seen.contains(&&role) {
                return Err(Error::GripperUnresolved(format!("annotator named no {role} region")));
            }
        }
    }
    Ok(out)
}

/// One box per object prompt.
pub fn resolve_objects(
    frame: &Frame,
    spec: &TaskSpec,
    detector: &dyn Detector,
    annotator: &dyn Annotator,
) -> Result<Vec<(String, crate::mask::BoundingBox)>> {
    let mut out = Vec::with_capacity(spec.objects.len());
    for prompt in &spec.objects {
        let boxes = detector.detect(frame, prompt)?;
        if boxes.is_empty() {
            return Err(Error::PromptUnresolved(prompt.clone()));
        }
        let chosen = match spec.disambiguation {
            Disambiguation::ArgmaxScore => argmax(&boxes),
            Disambiguation::AnnotatorSpatial if boxes.len() == 1 => boxes[0],
            Disambiguation::AnnotatorSpatial => {
                let regions: Vec<Mask> = boxes.iter().map(|b| b.to_mask(frame.width(), frame.height())).collect();
                let af = render_annotations(frame, &regions)?;
                let task = format!("{}\nselect: {prompt}", spec.task.trim());
                let picks = annotator.select_regions(&af, &task)?;
                if let Some(bad) = picks.iter().find(|s| s.index < 1 || s.index > boxes.len()) {
                    return Err(Error::Protocol(format!("annotator picked box {} of {}", bad.index, boxes.len())));
                }
                let named = picks.iter().find(|s| s.role == RegionRole::Object(prompt.clone()));
                let pick = match (named, picks.as_slice()) {
                    (Some(s), _) => s,
                    (None, [only]) => only,
                    _ => return Err(Error::PromptUnresolved(format!("{prompt} (annotator chose no box)"))),
                };
                boxes[pick.index - 1]
            }
        };
        out.push((prompt.clone(), chosen));
    }
    Ok(out)
}

fn argmax(boxes: &[crate::mask::BoundingBox]) -> crate::mask::BoundingBox {
    let mut best = boxes[0];
    for b in &boxes[1..] {
        if b.score > best.score {
            best = *b;
        }
    }
    best
}

#[derive(Clone, Copy, Debug)]
pub struct InitOptions {
    pub budget: Duration,
}

impl Default for InitOptions {
    fn default() -> Self {
        Self { budget: Duration::from_secs(30) }
    }
}

/// An initialized tracking session and what went into it.
#[derive(Debug)]
pub struct SessionInit {
    pub entities: Vec<EntityPrompt>,
    pub handle: SegmentHandle,
    /// Masks of frame 0, one per entity.
    pub first_masks: Vec<Mask>,
    pub boxes: Vec<(String, crate::mask::BoundingBox)>,
    pub keypoints: Vec<Keypoint>,
    /// `None` when there were no region proposals to annotate.
    pub annotated: Option<AnnotatedFrame>,
}

/// Proposals in label order: area descending, then first pixel in
/// row-major order.
fn order_regions(mut regions: Vec<Mask>) -> Vec<Mask> {
    regions.retain(|m| !m.is_empty());
    let first = |m: &Mask| m.bits().iter().position(|&b| b != 0).unwrap_or(usize::MAX);
    regions.sort_by(|a, b| b.area().cmp(&a.area()).then(first(a).cmp(&first(b))));
    regions
}

/// Run detection, proposal, annotation and track seeding on frame 0.
pub fn initialize_session(frame: &Frame, spec: &TaskSpec, backends: &Backends, opts: InitOptions) -> Result<SessionInit> {
    spec.validate()?;
    let started = Instant::now();
    let check = || {
        if started.elapsed() > opts.budget {
            Err(Error::Timeout(opts.budget))
        } else {
            Ok(())
        }
    };

    let (boxes, proposals) = std::thread::scope(|s| {
        let det = s.spawn(|| resolve_objects(frame, spec, backends.detector.as_ref(), backends.annotator.as_ref()));
        let proposals = backends.segmenter.propose(frame);
        let boxes = det.join().unwrap_or_else(|_| Err(Error::State("detector thread panicked".into())));
        (boxes, proposals)
    });
    let boxes = boxes?;
    let proposals = order_regions(proposals?);
    check()?;
    tracing::debug!(boxes = boxes.len(), proposals = proposals.len(), "first frame analyzed");

    let (annotated, keypoints) = if proposals.is_empty() {
        if spec.wants_gripper() {
            return Err(Error::GripperUnresolved("segmenter proposed no regions".into()));
        }
        (None, Vec::new())
    } else {
        let af = render_annotations(frame, &proposals)?;
        let kps = select_keypoints(&af, spec, backends.annotator.as_ref())?;
        (Some(af), kps)
    };
    check()?;

    let entities = group_entities(&boxes, &keypoints);
    if entities.is_empty() {
        return Err(Error::Init("nothing selected to track".into()));
    }
    let mut handle = backends.segmenter.init_tracks(frame, &entities)?;
    let first_masks = handle.propagate(frame)?;
    if let Err(e) = check() {
        let _ = handle.close();
        return Err(e);
    }
    Ok(SessionInit { entities, handle, first_masks, boxes, keypoints, annotated })
}
