//! Frame-to-frame mask propagation with occlusion tolerance.
//!
//! Each [`Entity`] carries a last-seen mask, a hue signature and a
//! constant-velocity motion estimate. Every frame, candidate masks are
//! greedily assigned to entities on a blend of overlap with the motion
//! prediction and hue-signature similarity. Unmatched entities emit an
//! empty mask and keep their id until they are seen again.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{centroid_f64, iou, rgb_to_hsv, translate, Frame, Mask};

pub const HUE_BINS: usize = 16;

/// L1-normalized hue histogram.
pub type Signature = [f64; HUE_BINS];

const IOU_WEIGHT: f64 = 0.7;
const HUE_WEIGHT: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Gripper,
    Object,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Gripper => "gripper",
            Role::Object => "object",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Frames an entity may go unmatched before it is reported lost.
    pub occlusion_patience: u32,
    pub iou_gate: f64,
    pub hist_gate: f64,
    pub ema_alpha: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { occlusion_patience: 30, iou_gate: 0.05, hist_gate: 0.5, ema_alpha: 0.3 }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.iou_gate) || !unit(self.hist_gate) || !unit(self.ema_alpha) {
            return Err(Error::Config("tracker gates and ema_alpha must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Present,
    Occluded,
    Lost,
}

impl TrackStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrackStatus::Present => "present",
            TrackStatus::Occluded => "occluded",
            TrackStatus::Lost => "lost",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Entity {
    id: u32,
    role: Role,
    prompt: String,
    last_mask: Mask,
    last_seen: Option<Mask>,
    signature: Option<Signature>,
    velocity: (f64, f64),
    missing_for: u32,
    lost: bool,
}

impl Entity {
    pub fn new(id: u32, role: Role, prompt: impl Into<String>, frame: &Frame, mask: Mask) -> Self {
        let signature = hue_signature(frame, &mask);
        let seen = !mask.is_empty();
        Self {
            id,
            role,
            prompt: prompt.into(),
            last_seen: seen.then(|| mask.clone()),
            last_mask: mask,
            signature,
            velocity: (0.0, 0.0),
            missing_for: if seen { 0 } else { 1 },
            lost: false,
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }

    /// Mask emitted on the latest frame; empty while unmatched.
    pub fn last_mask(&self) -> &Mask {
        &self.last_mask
    }

    pub fn signature(&self) -> Option<&Signature> {
        self.signature.as_ref()
    }

    pub fn velocity(&self) -> (f64, f64) {
        self.velocity
    }

    pub fn missing_for(&self) -> u32 {
        self.missing_for
    }

    pub fn status(&self) -> TrackStatus {
        if self.lost {
            TrackStatus::Lost
        } else if self.missing_for == 0 {
            TrackStatus::Present
        } else {
            TrackStatus::Occluded
        }
    }

    #[cfg(test)]
    pub(crate) fn with_motion(mut self, velocity: (f64, f64), missing_for: u32) -> Self {
        self.velocity = velocity;
        self.missing_for = missing_for;
        self
    }
}

/// Where the entity is expected on the next frame.
///
/// The last nonempty mask shifted by `velocity × (missing_for + 1)`,
/// clipped at the borders. Lost entities are predicted in place.
pub fn predict(e: &Entity) -> Mask {
    let Some(seen) = &e.last_seen else {
        let (w, h) = e.last_mask.dims();
        return Mask::empty(w, h);
    };
    if e.lost {
        return seen.clone();
    }
    let k = (e.missing_for + 1) as f64;
    let dx = (e.velocity.0 * k).round() as i64;
    let dy = (e.velocity.1 * k).round() as i64;
    translate(seen, dx, dy)
}

/// Hue histogram over the masked pixels of `frame`; `None` for empty masks.
pub fn hue_signature(frame: &Frame, mask: &Mask) -> Option<Signature> {
    let mut hist = [0f64; HUE_BINS];
    let mut n = 0usize;
    let px = frame.pixels();
    for (i, &b) in mask.bits().iter().enumerate() {
        if b != 0 {
            let (h, _, _) = rgb_to_hsv([px[i * 3], px[i * 3 + 1], px[i * 3 + 2]]);
            let bin = ((h / 360.0 * HUE_BINS as f32) as usize).min(HUE_BINS - 1);
            hist[bin] += 1.0;
            n += 1;
        }
    }
    if n == 0 {
        return None;
    }
    for v in &mut hist {
        *v /= n as f64;
    }
    Some(hist)
}

/// `1 - L1/2`, in `[0, 1]`.
pub fn signature_similarity(a: &Signature, b: &Signature) -> f64 {
    let l1: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    (1.0 - l1 / 2.0).clamp(0.0, 1.0)
}

/// A candidate mask with its hue signature on the current frame.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub mask: Mask,
    pub signature: Option<Signature>,
}

impl Candidate {
    pub fn new(frame: &Frame, mask: Mask) -> Self {
        let signature = hue_signature(frame, &mask);
        Self { mask, signature }
    }
}

/// Greedy entity/candidate matching; `pairs` holds `(entity index, candidate index)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
}

impl Assignment {
    pub fn candidate_for(&self, entity: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == entity).map(|p| p.1)
    }
}

/// Association score of one pair, or `None` when the pair fails both gates.
pub fn pair_score(candidate: &Candidate, prediction: &Mask, entity_sig: Option<&Signature>, cfg: &TrackerConfig) -> Result<Option<f64>> {
    let overlap = iou(&candidate.mask, prediction)?;
    let overlap = if prediction.is_empty() || candidate.mask.is_empty() { 0.0 } else { overlap };
    let sim = match (entity_sig, &candidate.signature) {
        (Some(a), Some(b)) => signature_similarity(a, b),
        _ => 0.0,
    };
    if overlap < cfg.iou_gate && sim < cfg.hist_gate {
        return Ok(None);
    }
    Ok(Some(IOU_WEIGHT * overlap + HUE_WEIGHT * sim))
}

pub fn associate(candidates: &[Candidate], entities: &[Entity], cfg: &TrackerConfig) -> Result<Assignment> {
    let predictions: Vec<Mask> = entities.iter().map(predict).collect();
    associate_with(candidates, entities, &predictions, cfg)
}

fn associate_with(candidates: &[Candidate], entities: &[Entity], predictions: &[Mask], cfg: &TrackerConfig) -> Result<Assignment> {
    let mut scored = Vec::new();
    for (ei, (e, pred)) in entities.iter().zip(predictions).enumerate() {
        for (ci, c) in candidates.iter().enumerate() {
            if c.mask.is_empty() {
                continue;
            }
            if let Some(s) = pair_score(c, pred, e.signature.as_ref(), cfg)? {
                scored.push((s, e.id, ei, ci));
            }
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.3.cmp(&b.3)));

    let mut entity_used = vec![false; entities.len()];
    let mut cand_used = vec![false; candidates.len()];
    let mut pairs = Vec::new();
    for (_, _, ei, ci) in scored {
        if entity_used[ei] || cand_used[ci] {
            continue;
        }
        entity_used[ei] = true;
        cand_used[ci] = true;
        pairs.push((ei, ci));
    }
    pairs.sort_unstable();
    Ok(Assignment { pairs })
}

/// Per-stream tracking memory.
#[derive(Clone, Debug)]
pub struct SessionState {
    entities: Vec<Entity>,
    frame_index: u64,
    config: TrackerConfig,
    dims: (u32, u32),
}

impl SessionState {
    /// Start tracking from first-frame masks. Ids are assigned in order.
    pub fn new(frame: &Frame, seeds: Vec<(Role, String, Mask)>, config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        let mut entities = Vec::with_capacity(seeds.len());
        for (i, (role, prompt, mask)) in seeds.into_iter().enumerate() {
            if mask.dims() != frame.dims() {
                return Err(Error::shape(frame.dims(), mask.dims()));
            }
            entities.push(Entity::new(i as u32, role, prompt, frame, mask));
        }
        Ok(Self { entities, frame_index: 0, config, dims: frame.dims() })
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn dims(&self) -> (u32, u32) {
        self.dims
    }

    pub fn statuses(&self) -> Vec<TrackStatus> {
        self.entities.iter().map(Entity::status).collect()
    }

    /// Advance one frame. Returns one mask per entity in entity order.
    pub fn step(&mut self, frame: &Frame, candidates: Vec<Mask>) -> Result<Vec<Mask>> {
        if frame.dims() != self.dims {
            return Err(Error::shape(self.dims, frame.dims()));
        }
        let mut cands = Vec::with_capacity(candidates.len());
        for m in candidates {
            if m.dims() != self.dims {
                return Err(Error::shape(self.dims, m.dims()));
            }
            if !m.is_empty() {
                cands.push(Candidate::new(frame, m));
            }
        }
        let predictions: Vec<Mask> = self.entities.iter().map(predict).collect();
        let assignment = associate_with(&cands, &self.entities, &predictions, &self.config)?;

        let alpha = self.config.ema_alpha;
        let patience = self.config.occlusion_patience;
        let mut out = Vec::with_capacity(self.entities.len());
        for (ei, e) in self.entities.iter_mut().enumerate() {
            match assignment.candidate_for(ei) {
                Some(ci) => {
                    let c = &cands[ci];
                    if let (Some(prev), Some(now)) = (e.last_seen.as_ref().and_then(centroid_f64), centroid_f64(&c.mask)) {
                        let gap = (e.missing_for + 1) as f64;
                        e.velocity = ((now.0 - prev.0) / gap, (now.1 - prev.1) / gap);
                    }
                    e.signature = match (e.signature, c.signature) {
                        (Some(old), Some(new)) => {
                            let mut s = [0f64; HUE_BINS];
                            for k in 0..HUE_BINS {
                                s[k] = (1.0 - alpha) * old[k] + alpha * new[k];
                            }
                            Some(s)
                        }
                        (old, new) => new.or(old),
                    };
                    e.last_mask = c.mask.clone();
                    e.last_seen = Some(c.mask.clone());
                    e.missing_for = 0;
                    e.lost = false;
                }
                None => {
                    e.last_mask = Mask::empty(self.dims.0, self.dims.1);
                    e.missing_for += 1;
                    if e.missing_for > patience {
                        e.lost = true;
                        e.velocity = (0.0, 0.0);
                    }
                }
            }
            out.push(e.last_mask.clone());
        }
        self.frame_index += 1;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GREEN: [u8; 3] = [0, 255, 0];
    const BLUE: [u8; 3] = [0, 0, 255];

    fn scene(w: u32, h: u32, rects: &[([i64; 4], [u8; 3])]) -> (Frame, Vec<Mask>) {
        let mut f = Frame::filled(w, h, [90, 90, 90]);
        let mut masks = Vec::new();
        for &(r, c) in rects {
            f.fill_rect(r[0], r[1], r[2], r[3], c);
            masks.push(Mask::rect(w, h, r[0], r[1], r[2], r[3]));
        }
        (f, masks)
    }

    #[test]
    fn predict_examples() {
        let (f, m) = scene(20, 10, &[([4, 2, 8, 6], GREEN)]);
        let e = Entity::new(0, Role::Object, "cube", &f, m[0].clone());
        assert_eq!(predict(&e), m[0]);
        let moving = e.clone().with_motion((2.0, 0.0), 0);
        assert_eq!(predict(&moving), Mask::rect(20, 10, 6, 2, 10, 6));

        let (f, m) = scene(20, 10, &[([16, 2, 20, 6], GREEN)]);
        let edge = Entity::new(0, Role::Object, "cube", &f, m[0].clone()).with_motion((5.0, 0.0), 0);
        let p = predict(&edge);
        let oracle = Mask::from_fn(20, 10, |x, y| x >= 5 && m[0].get(x - 5, y));
        assert_eq!(p, oracle);
        assert!(p.area() < m[0].area());

        let never = Entity::new(1, Role::Object, "ghost", &f, Mask::empty(20, 10));
        assert!(predict(&never).is_empty());
    }

    #[test]
    fn signature_is_normalized() {
        let (f, m) = scene(20, 10, &[([0, 0, 5, 5], GREEN), ([5, 0, 10, 5], BLUE)]);
        let both = crate::mask::union(&m[0], &m[1]).unwrap();
        let s = hue_signature(&f, &both).unwrap();
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((s[5] - 0.5).abs() < 1e-9 && (s[10] - 0.5).abs() < 1e-9);
        assert!(hue_signature(&f, &Mask::empty(20, 10)).is_none());
    }

    #[test]
    fn associate_trivial_cases() {
        let (f, m) = scene(20, 10, &[([4, 2, 8, 6], GREEN)]);
        let cfg = TrackerConfig::default();
        let e = vec![Entity::new(0, Role::Object, "cube", &f, m[0].clone())];
        let a = associate(&[Candidate::new(&f, m[0].clone())], &e, &cfg).unwrap();
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert!(associate(&[], &e, &cfg).unwrap().pairs.is_empty());
    }

    #[test]
    fn hue_term_keeps_identities_through_a_crossing() {
        // Entities side by side; candidates have crossed so each one
        // overlaps the other entity's prediction more.
        let (f0, m0) = scene(20, 4, &[([0, 0, 10, 4], GREEN), ([10, 0, 20, 4], BLUE)]);
        let cfg = TrackerConfig::default();
        let ents = vec![
            Entity::new(0, Role::Object, "green", &f0, m0[0].clone()),
            Entity::new(1, Role::Object, "blue", &f0, m0[1].clone()),
        ];
        let mut f1 = Frame::filled(20, 4, [90, 90, 90]);
        f1.fill_rect(4, 0, 14, 4, BLUE);
        f1.fill_rect(6, 0, 16, 4, GREEN);
        let green_c = Mask::rect(20, 4, 6, 0, 16, 4);
        let blue_c = crate::mask::difference(&Mask::rect(20, 4, 4, 0, 14, 4), &green_c).unwrap();
        let cands = vec![Candidate::new(&f1, blue_c.clone()), Candidate::new(&f1, green_c.clone())];

        // hand-computed score matrix
        let iou_gg = 4.0 / 16.0; // [6,16) vs [0,10)
        let iou_bg = 6.0 / 14.0; // [6,16) vs [10,20)
        let iou_gb = 2.0 / 10.0; // [4,6) vs [0,10)
        let iou_bb = 0.0; // [4,6) vs [10,20)
        let s_green_green = 0.7 * iou_gg + 0.3;
        let s_blue_green = 0.7 * iou_bg;
        assert!(s_green_green > s_blue_green);
        let got = pair_score(&cands[1], &predict(&ents[0]), ents[0].signature(), &cfg).unwrap().unwrap();
        assert!((got - s_green_green).abs() < 1e-9);
        let got = pair_score(&cands[1], &predict(&ents[1]), ents[1].signature(), &cfg).unwrap().unwrap();
        assert!((got - s_blue_green).abs() < 1e-9);
        let got = pair_score(&cands[0], &predict(&ents[0]), ents[0].signature(), &cfg).unwrap().unwrap();
        assert!((got - 0.7 * iou_gb).abs() < 1e-9);
        let got = pair_score(&cands[0], &predict(&ents[1]), ents[1].signature(), &cfg).unwrap().unwrap();
        assert!((got - (0.7 * iou_bb + 0.3)).abs() < 1e-9);

        let a = associate(&cands, &ents, &cfg).unwrap();
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn occluded_entity_emits_empty_then_resumes() {
        let (f, m) = scene(40, 20, &[([5, 5, 15, 15], GREEN)]);
        let mut st = SessionState::new(&f, vec![(Role::Object, "cube".into(), m[0].clone())], TrackerConfig::default()).unwrap();
        let out = st.step(&f, vec![m[0].clone()]).unwrap();
        assert_eq!(out, vec![m[0].clone()]);
        let blank = Frame::filled(40, 20, [90, 90, 90]);
        for _ in 0..3 {
            let out = st.step(&blank, vec![]).unwrap();
            assert!(out[0].is_empty());
            assert_eq!(st.entities()[0].status(), TrackStatus::Occluded);
        }
        let out = st.step(&f, vec![m[0].clone()]).unwrap();
        assert_eq!(out[0], m[0]);
        assert_eq!(st.entities()[0].missing_for(), 0);
        assert_eq!(st.entities()[0].id(), 0);
        assert_eq!(st.frame_index(), 5);
    }

    #[test]
    fn static_scene_converges() {
        let (f, m) = scene(40, 20, &[([5, 5, 15, 15], GREEN), ([20, 5, 30, 15], BLUE)]);
        let seeds = vec![(Role::Gripper, "g".into(), m[0].clone()), (Role::Object, "o".into(), m[1].clone())];
        let mut st = SessionState::new(&f, seeds, TrackerConfig::default()).unwrap();
        for _ in 0..5 {
            let out = st.step(&f, vec![m[1].clone(), m[0].clone()]).unwrap();
            assert_eq!(out, m);
        }
        for e in st.entities() {
            assert_eq!(e.velocity(), (0.0, 0.0));
            assert!((e.signature().unwrap().iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn deformed_mask_still_matches() {
        let (f, m) = scene(60, 60, &[([10, 10, 40, 40], GREEN)]);
        let mut st = SessionState::new(&f, vec![(Role::Object, "plush".into(), m[0].clone())], TrackerConfig::default()).unwrap();
        // area halves: keep the top half
        let squashed = Mask::rect(60, 60, 10, 10, 40, 25);
        assert!(iou(&squashed, &predict(&st.entities()[0])).unwrap() >= 0.05);
        let out = st.step(&f, vec![squashed.clone()]).unwrap();
        assert_eq!(out[0], squashed);
    }

    #[test]
    fn entity_goes_lost_after_patience_but_keeps_id() {
        let (f, m) = scene(40, 20, &[([5, 5, 15, 15], GREEN)]);
        let cfg = TrackerConfig { occlusion_patience: 2, ..Default::default() };
        let mut st = SessionState::new(&f, vec![(Role::Object, "cube".into(), m[0].clone())], cfg).unwrap();
        let blank = Frame::filled(40, 20, [90, 90, 90]);
        st.step(&blank, vec![]).unwrap();
        st.step(&blank, vec![]).unwrap();
        assert_eq!(st.statuses(), vec![TrackStatus::Occluded]);
        st.step(&blank, vec![]).unwrap();
        assert_eq!(st.statuses(), vec![TrackStatus::Lost]);
        st.step(&f, vec![m[0].clone()]).unwrap();
        assert_eq!(st.statuses(), vec![TrackStatus::Present]);
        assert_eq!(st.entities()[0].id(), 0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (f, m) = scene(40, 20, &[([5, 5, 15, 15], GREEN)]);
        let mut st = SessionState::new(&f, vec![(Role::Object, "cube".into(), m[0].clone())], TrackerConfig::default()).unwrap();
        assert_eq!(st.step(&f, vec![Mask::empty(10, 10)]).unwrap_err().category(), "shape");
        assert_eq!(st.step(&Frame::filled(10, 10, [0; 3]), vec![]).unwrap_err().category(), "shape");
    }
}
