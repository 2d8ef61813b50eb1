//! Deterministic synthetic scenes with exact ground-truth masks.
//!
//! Actors are flat-colored rectangles or discs moving at constant velocity
//! over a solid, cluttered or image background. Later actors and active
//! occluders are drawn on top and remove the pixels they cover from the
//! ground truth of everything beneath.

use std::path::{Path, PathBuf};

use rand::rngs::Xoshiro256PlusPlus;
use rand::{RngExt, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::codec::read_png;
use crate::dataset::{write_masks_file, EntityRecord, EpisodeManifest, MaskRecord};
use crate::error::{Error, Result};
use crate::mask::{union_all, Frame, Mask, RleMask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Rect,
    Disc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActorRole {
    Gripper,
    Object,
    Distractor,
}

/// A rectangle that hides everything under it on frames `from..=to`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    /// `[x, y, w, h]`
    pub rect: [i64; 4],
    pub from: u32,
    pub to: u32,
    #[serde(default = "default_occluder_color")]
    pub color: [u8; 3],
}

fn default_occluder_color() -> [u8; 3] {
    [70, 66, 62]
}

impl Occluder {
    fn active(&self, t: u32) -> bool {
        (self.from..=self.to).contains(&t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    #[serde(default)]
    pub name: String,
    pub shape: Shape,
    pub color: [u8; 3],
    /// Top-left corner of the bounding box on frame 0.
    pub start: [f64; 2],
    #[serde(default)]
    pub velocity: [f64; 2],
    /// Bounding box `[w, h]`; a disc is the inscribed ellipse.
    pub size: [f64; 2],
    pub role: ActorRole,
    /// Per-frame scale about the box center; the last entry holds after
    /// the schedule runs out.
    #[serde(default)]
    pub deform: Option<Vec<f64>>,
    #[serde(default)]
    pub occluder: Option<Occluder>,
}

impl Actor {
    pub fn rect(role: ActorRole, color: [u8; 3], start: [f64; 2], size: [f64; 2]) -> Self {
        Self {
            name: String::new(),
            shape: Shape::Rect,
            color,
            start,
            velocity: [0.0, 0.0],
            size,
            role,
            deform: None,
            occluder: None,
        }
    }

    pub fn disc(role: ActorRole, color: [u8; 3], start: [f64; 2], diameter: f64) -> Self {
        Self { shape: Shape::Disc, ..Self::rect(role, color, start, [diameter, diameter]) }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn moving(mut self, velocity: [f64; 2]) -> Self {
        self.velocity = velocity;
        self
    }

    pub fn deforming(mut self, schedule: Vec<f64>) -> Self {
        self.deform = Some(schedule);
        self
    }

    pub fn occluded_by(mut self, occluder: Occluder) -> Self {
        self.occluder = Some(occluder);
        self
    }

    fn scale(&self, t: u32) -> f64 {
        match &self.deform {
            Some(s) if !s.is_empty() => s[(t as usize).min(s.len() - 1)],
            _ => 1.0,
        }
    }

    /// Exact raster of the actor on frame `t`, ignoring anything on top.
    pub fn raster(&self, t: u32, width: u32, height: u32) -> Mask {
        let s = self.scale(t);
        let cx = self.start[0] + self.velocity[0] * t as f64 + self.size[0] / 2.0;
        let cy = self.start[1] + self.velocity[1] * t as f64 + self.size[1] / 2.0;
        let (hw, hh) = (self.size[0] * s / 2.0, self.size[1] * s / 2.0);
        let round = |v: f64| (v + 0.5).floor() as i64;
        let (x0, x1, y0, y1) = (round(cx - hw), round(cx + hw), round(cy - hh), round(cy + hh));
        match self.shape {
            Shape::Rect => Mask::rect(width, height, x0, y0, x1, y1),
            Shape::Disc => {
                let mut m = Mask::empty(width, height);
                if hw <= 0.0 || hh <= 0.0 {
                    return m;
                }
                let clamp_x = |v: i64| v.clamp(0, width as i64) as u32;
                let clamp_y = |v: i64| v.clamp(0, height as i64) as u32;
                for y in clamp_y(y0)..clamp_y(y1) {
                    for x in clamp_x(x0)..clamp_x(x1) {
                        let dx = (x as f64 + 0.5 - cx) / hw;
                        let dy = (y as f64 + 0.5 - cy) / hh;
                        if dx * dx + dy * dy <= 1.0 {
                            m.set(x, y, true);
                        }
                    }
                }
                m
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SynthBackground {
    Solid {
        color: [u8; 3],
    },
    /// Seeded low-saturation rectangles over a gray base.
    Clutter {
        seed: u64,
        #[serde(default = "default_clutter_count")]
        count: u32,
    },
    Image {
        path: PathBuf,
    },
}

fn default_clutter_count() -> u32 {
    60
}

impl Default for SynthBackground {
    fn default() -> Self {
        SynthBackground::Solid { color: [110, 110, 110] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSceneConfig {
    pub episode_id: String,
    pub resolution: [u32; 2],
    pub length: u32,
    pub fps: f64,
    pub background: SynthBackground,
    pub actors: Vec<Actor>,
}

impl Default for SynthSceneConfig {
    fn default() -> Self {
        Self {
            episode_id: "synth-0000".into(),
            resolution: [320, 180],
            length: 40,
            fps: 15.0,
            background: SynthBackground::default(),
            actors: Vec::new(),
        }
    }
}

impl SynthSceneConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::Config("synthetic sequence needs at least one frame".into()));
        }
        if self.resolution[0] == 0 || self.resolution[1] == 0 {
            return Err(Error::Config("resolution must be at least 1x1".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Config("fps must be positive".into()));
        }
        for a in &self.actors {
            let finite = a.start.iter().chain(&a.velocity).chain(&a.size).all(|v| v.is_finite());
            if !finite || a.size[0] <= 0.0 || a.size[1] <= 0.0 {
                return Err(Error::Config(format!("actor {:?} has invalid geometry", a.name)));
            }
            if a.deform.iter().flatten().any(|s| !s.is_finite() || *s < 0.0) {
                return Err(Error::Config(format!("actor {:?} has an invalid deform schedule", a.name)));
            }
        }
        Ok(())
    }
}

/// Rendered frames plus per-frame, per-actor ground truth.
#[derive(Clone, Debug)]
pub struct SynthEpisode {
    pub config: SynthSceneConfig,
    pub frames: Vec<Frame>,
    /// `truth[t][k]` is the visible part of actor `k` on frame `t`.
    pub truth: Vec<Vec<Mask>>,
}

impl SynthEpisode {
    pub fn frame_names(&self) -> Vec<String> {
        (0..self.frames.len()).map(|t| format!("{t:06}.png")).collect()
    }

    pub fn manifest(&self) -> EpisodeManifest {
        let extras: Vec<serde_json::Value> = (0..self.frames.len()).map(|t| serde_json::json!({ "t": t })).collect();
        let extras = serde_json::value::to_raw_value(&extras).expect("plain json serializes");
        EpisodeManifest {
            episode_id: self.config.episode_id.clone(),
            fps: self.config.fps,
            resolution: self.config.resolution,
            frames: self.frame_names(),
            extras: Some(extras),
        }
    }

    /// Union of the gripper and object actors on frame `t`.
    pub fn retained(&self, t: usize) -> Mask {
        let dims = self.frames[t].dims();
        let keep = self.config.actors.iter().zip(&self.truth[t]).filter(|(a, _)| a.role != ActorRole::Distractor);
        union_all(dims, keep.map(|(_, m)| m)).expect("truth masks share frame dims")
    }

    /// Ground truth of one actor across all frames.
    pub fn actor_track(&self, k: usize) -> Vec<Mask> {
        self.truth.iter().map(|f| f[k].clone()).collect()
    }

    /// Write the episode, plus `masks.json` holding the retained union and
    /// per-actor ground truth of every frame.
    pub fn write(&self, dir: &Path) -> Result<()> {
        crate::dataset::write_episode(dir, &self.manifest(), &self.frames)?;
        let entities = self
            .config
            .actors
            .iter()
            .enumerate()
            .map(|(i, a)| EntityRecord { id: i as u32, role: role_name(a.role).into(), prompt: a.name.clone() })
            .collect();
        let frames = (0..self.frames.len())
            .map(|t| MaskRecord {
                union: RleMask::encode(&self.retained(t)),
                entities: self.truth[t].iter().map(RleMask::encode).collect(),
            })
            .collect();
        write_masks_file(dir, &self.config.episode_id, entities, frames)
    }
}

fn role_name(r: ActorRole) -> &'static str {
    match r {
        ActorRole::Gripper => "gripper",
        ActorRole::Object => "object",
        ActorRole::Distractor => "distractor",
    }
}

fn clutter(width: u32, height: u32, seed: u64, count: u32) -> Frame {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut f = Frame::filled(width, height, [118, 114, 110]);
    let (w, h) = (width as i64, height as i64);
    for _ in 0..count {
        let rw = rng.random_range(4..=(w / 4).max(5));
        let rh = rng.random_range(4..=(h / 4).max(5));
        let x = rng.random_range(-rw / 2..w);
        let y = rng.random_range(-rh / 2..h);
        // saturation stays under 0.4 so no color class picks it up
        let g: i16 = rng.random_range(70..=200);
        let mut c = [0u8; 3];
        for ch in &mut c {
            *ch = (g + rng.random_range(-15i16..=15)) as u8;
        }
        f.fill_rect(x, y, x + rw, y + rh, c);
    }
    f
}

fn background(cfg: &SynthSceneConfig) -> Result<Frame> {
    let [w, h] = cfg.resolution;
    match &cfg.background {
        SynthBackground::Solid { color } => Ok(Frame::filled(w, h, *color)),
        SynthBackground::Clutter { seed, count } => Ok(clutter(w, h, *seed, *count)),
        SynthBackground::Image { path } => {
            let f = read_png(path)?;
            if f.dims() != (w, h) {
                return Err(Error::Config(format!(
                    "background image {} is {:?}, scene is {w}x{h}",
                    path.display(),
                    f.dims()
                )));
            }
            Ok(f)
        }
    }
}

pub fn generate(cfg: &SynthSceneConfig) -> Result<SynthEpisode> {
    cfg.validate()?;
    let [w, h] = cfg.resolution;
    let bg = background(cfg)?;
    let mut frames = Vec::with_capacity(cfg.length as usize);
    let mut truth = Vec::with_capacity(cfg.length as usize);
    for t in 0..cfg.length {
        let mut f = bg.clone();
        let rasters: Vec<Mask> = cfg.actors.iter().map(|a| a.raster(t, w, h)).collect();
        for (a, m) in cfg.actors.iter().zip(&rasters) {
            for (x, y) in m.set_pixels() {
                f.put(x, y, a.color);
            }
        }
        let occluders: Vec<&Occluder> = cfg.actors.iter().filter_map(|a| a.occluder.as_ref()).filter(|o| o.active(t)).collect();
        let mut covered = Mask::empty(w, h);
        for o in &occluders {
            let [x, y, ow, oh] = o.rect;
            f.fill_rect(x, y, x + ow, y + oh, o.color);
            covered = crate::mask::union(&covered, &Mask::rect(w, h, x, y, x + ow, y + oh))?;
        }
        // visible part: own raster minus everything drawn later
        let mut visible = Vec::with_capacity(rasters.len());
        let mut above = covered;
        for m in rasters.iter().rev() {
            visible.push(crate::mask::difference(m, &above)?);
            above = crate::mask::union(&above, m)?;
        }
        visible.reverse();
        frames.push(f);
        truth.push(visible);
    }
    Ok(SynthEpisode { config: cfg.clone(), frames, truth })
}

/// Green gripper fingers closing on a blue cube, with a red target cross
/// and a yellow distractor. The reference scene used by examples and tests.
pub fn reference_scene(episode_id: &str, resolution: [u32; 2], length: u32, background: SynthBackground) -> SynthSceneConfig {
    let [w, h] = resolution;
    let (sx, sy) = (w as f64 / 320.0, h as f64 / 180.0);
    let at = |x: f64, y: f64| [x * sx, y * sy];
    let sz = |x: f64, y: f64| [x * sx, y * sy];
    SynthSceneConfig {
        episode_id: episode_id.into(),
        resolution,
        length,
        fps: 15.0,
        background,
        actors: vec![
            Actor::rect(ActorRole::Gripper, [30, 200, 60], at(40.0, 60.0), sz(10.0, 36.0)).named("left finger").moving([sx, 0.25 * sy]),
            Actor::rect(ActorRole::Gripper, [30, 200, 60], at(76.0, 60.0), sz(10.0, 36.0))
                .named("right finger")
                .moving([0.8 * sx, 0.25 * sy]),
            Actor::rect(ActorRole::Object, [40, 70, 220], at(160.0, 100.0), sz(28.0, 28.0)).named("blue cube").moving([-0.5 * sx, 0.0]),
            Actor::disc(ActorRole::Distractor, [230, 200, 40], [250.0 * sx, 30.0 * sy], 26.0 * sx).named("yellow ball"),
        ],
    }
}
