//! Episodes on disk and batch transformation.
//!
//! An episode is a directory holding `manifest.json` and one PNG per frame.
//! Transformed episodes add `provenance.json` (what produced them) and
//! `masks.json` (the masks behind every output frame).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::backend::Backends;
use crate::codec::{read_png, write_png};
use crate::error::{Error, Result};
use crate::eval::{latency_report, LatencyReport};
use crate::init::{initialize_session, InitOptions, TaskSpec};
use crate::mask::{Frame, RleMask};
use crate::recompose::{MaskedFrame, MaskingSession, RecomposeConfig};

pub const MANIFEST: &str = "manifest.json";
pub const PROVENANCE: &str = "provenance.json";
pub const MASKS: &str = "masks.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeManifest {
    pub episode_id: String,
    pub fps: f64,
    /// `[width, height]`
    pub resolution: [u32; 2],
    pub frames: Vec<String>,
    /// Per-step metadata, carried through untouched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extras: Option<Box<RawValue>>,
}

impl PartialEq for EpisodeManifest {
    fn eq(&self, o: &Self) -> bool {
        self.episode_id == o.episode_id
            && self.fps == o.fps
            && self.resolution == o.resolution
            && self.frames == o.frames
            && self.extras.as_ref().map(|r| r.get()) == o.extras.as_ref().map(|r| r.get())
    }
}

impl EpisodeManifest {
    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Format(format!("episode {:?} lists no frames", self.episode_id)));
        }
        if self.resolution[0] == 0 || self.resolution[1] == 0 {
            return Err(Error::Format("manifest resolution must be at least 1x1".into()));
        }
        for name in &self.frames {
            let p = Path::new(name);
            let plain = p.components().count() == 1 && matches!(p.components().next(), Some(std::path::Component::Normal(_)));
            if !plain {
                return Err(Error::Format(format!("frame name {name:?} is not a plain file name")));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.resolution[0], self.resolution[1])
    }
}

/// An episode directory with a validated manifest.
#[derive(Clone, Debug)]
pub struct Episode {
    pub dir: PathBuf,
    pub manifest: EpisodeManifest,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.manifest.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.frames.is_empty()
    }

    /// Decode frame `index`, checking it against the manifest resolution.
    pub fn frame(&self, index: usize) -> Result<Frame> {
        let name = self
            .manifest
            .frames
            .get(index)
            .ok_or_else(|| Error::Input(format!("episode has no frame {index}")))?;
        let frame_err = |reason: String| Error::Frame { index, file: name.clone(), reason };
        let f = read_png(&self.dir.join(name)).map_err(|e| frame_err(e.to_string()))?;
        if f.dims() != self.manifest.dims() {
            return Err(frame_err(format!("decoded {:?}, manifest says {:?}", f.dims(), self.manifest.dims())));
        }
        Ok(f)
    }

    /// Frames in manifest order.
    pub fn frames(&self) -> impl Iterator<Item = Result<Frame>> + '_ {
        (0..self.len()).map(move |i| self.frame(i))
    }
}

pub fn load_episode(dir: &Path) -> Result<Episode> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let manifest: EpisodeManifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    manifest.validate()?;
    Ok(Episode { dir: dir.to_path_buf(), manifest })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write a manifest and its frames into `dir`, creating it if needed.
pub fn write_episode(dir: &Path, manifest: &EpisodeManifest, frames: &[Frame]) -> Result<()> {
    manifest.validate()?;
    if frames.len() != manifest.frames.len() {
        return Err(Error::Length { expected: manifest.frames.len(), got: frames.len() });
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, (name, f)) in manifest.frames.iter().zip(frames).enumerate() {
        if f.dims() != manifest.dims() {
            return Err(Error::Frame { index: i, file: name.clone(), reason: format!("frame is {:?}", f.dims()) });
        }
        write_png(&dir.join(name), f)?;
    }
    write_json(&dir.join(MANIFEST), manifest)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: u32,
    pub role: String,
    pub prompt: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub union: RleMask,
    pub entities: Vec<RleMask>,
}

/// Contents of `masks.json`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MasksFile {
    pub episode_id: String,
    pub entities: Vec<EntityRecord>,
    pub frames: Vec<MaskRecord>,
}

pub fn write_masks_file(dir: &Path, episode_id: &str, entities: Vec<EntityRecord>, frames: Vec<MaskRecord>) -> Result<()> {
    let file = MasksFile { episode_id: episode_id.to_string(), entities, frames };
    let path = dir.join(MASKS);
    let text = serde_json::to_string(&file).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_masks_file(dir: &Path) -> Result<MasksFile> {
    let path = dir.join(MASKS);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub software: String,
    pub version: String,
    pub source_episode: String,
    pub task: TaskSpec,
    pub recompose: RecomposeConfig,
    pub backends: std::collections::BTreeMap<String, String>,
}

/// Result of one successfully transformed episode.
#[derive(Clone, Debug)]
pub struct EpisodeOutcome {
    pub frames: usize,
    /// Per-frame processing time, frame 0 excluded (it includes initialization).
    pub latencies_ms: Vec<f64>,
}

/// Recompose every frame of `input` into `output`.
///
/// `output` must not exist yet. On failure it is removed again, so a
/// partially masked episode never stays on disk.
pub fn transform_episode(
    input: &Path,
    output: &Path,
    spec: &TaskSpec,
    cfg: &RecomposeConfig,
    backends: &Backends,
    opts: InitOptions,
) -> Result<EpisodeOutcome> {
    let episode = load_episode(input)?;
    cfg.validate()?;
    if output.exists() {
        return Err(Error::Input(format!("output {} already exists", output.display())));
    }
    fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;
    let result = write_transformed(&episode, output, spec, cfg, backends, opts);
    if result.is_err() {
        if let Err(e) = fs::remove_dir_all(output) {
            tracing::warn!(path = %output.display(), error = %e, "removing partial output");
        }
    }
    result
}

fn write_transformed(
    episode: &Episode,
    output: &Path,
    spec: &TaskSpec,
    cfg: &RecomposeConfig,
    backends: &Backends,
    opts: InitOptions,
) -> Result<EpisodeOutcome> {
    let names = &episode.manifest.frames;
    let frame0 = episode.frame(0)?;
    let init = initialize_session(&frame0, spec, backends, opts)?;
    let entities: Vec<EntityRecord> = init
        .entities
        .iter()
        .enumerate()
        .map(|(i, e)| EntityRecord { id: i as u32, role: e.role.as_str().into(), prompt: e.prompt.clone() })
        .collect();
    let (mut session, first) = MaskingSession::from_init(init, &frame0, cfg.clone())?;

    let mut records = Vec::with_capacity(names.len());
    let mut latencies = Vec::with_capacity(names.len().saturating_sub(1));
    let mut emit = |i: usize, out: MaskedFrame| -> Result<()> {
        write_png(&output.join(&names[i]), &out.image)?;
        records.push(MaskRecord {
            union: RleMask::encode(&out.union),
            entities: out.entity_masks.iter().map(RleMask::encode).collect(),
        });
        Ok(())
    };
    emit(0, first)?;
    for i in 1..names.len() {
        let t = Instant::now();
        let frame = episode.frame(i)?;
        let out = session.mask_frame(&frame)?;
        latencies.push(t.elapsed().as_secs_f64() * 1e3);
        emit(i, out)?;
    }
    session.close()?;

    let manifest_in = episode.dir.join(MANIFEST);
    let manifest_out = output.join(MANIFEST);
    fs::copy(&manifest_in, &manifest_out).map_err(|e| Error::io(&manifest_in, e))?;
    let provenance = Provenance {
        software: "arro".into(),
        version: crate::VERSION.into(),
        source_episode: episode.manifest.episode_id.clone(),
        task: spec.clone(),
        recompose: cfg.clone(),
        backends: backends.identifiers().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
    };
    write_json(&output.join(PROVENANCE), &provenance)?;
    write_masks_file(output, &episode.manifest.episode_id, entities, records)?;
    Ok(EpisodeOutcome { frames: names.len(), latencies_ms: latencies })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeResult {
    /// Input directory name.
    pub episode: String,
    pub variant: String,
    pub ok: bool,
    pub frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransformReport {
    pub requested: usize,
    pub processed: usize,
    pub failed: usize,
    pub results: Vec<EpisodeResult>,
    pub wall_clock_ms: f64,
    pub latency: Option<LatencyReport>,
    pub latency_samples_ms: Vec<f64>,
}

/// Output directory names for a list of configs: the background kind,
/// suffixed with the config position when kinds repeat.
pub fn variant_names(cfgs: &[RecomposeConfig]) -> Vec<String> {
    cfgs.iter()
        .enumerate()
        .map(|(i, c)| {
            let kind = c.background.kind.as_str();
            let repeated = cfgs.iter().filter(|o| o.background.kind == c.background.kind).count() > 1;
            if repeated {
                format!("{kind}-{i}")
            } else {
                kind.to_string()
            }
        })
        .collect()
}

/// Episode directories under `root`, sorted by name.
pub fn list_episodes(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.file_type().map_err(|e| Error::io(entry.path(), e))?.is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Transform every episode under `input_root` once per config, writing
/// `output_root/<variant>/<episode>`. Failures are recorded, not fatal.
pub fn transform_dataset(
    input_root: &Path,
    output_root: &Path,
    spec: &TaskSpec,
    cfgs: &[RecomposeConfig],
    backends: &Backends,
    parallelism: usize,
) -> Result<TransformReport> {
    if cfgs.is_empty() {
        return Err(Error::Config("no recompose config given".into()));
    }
    for c in cfgs {
        c.validate()?;
    }
    spec.validate()?;
    let episodes = list_episodes(input_root)?;
    if episodes.is_empty() {
        return Err(Error::Input(format!("no episode directories under {}", input_root.display())));
    }
    let variants = variant_names(cfgs);
    let jobs: Vec<(&PathBuf, usize)> = episodes.iter().flat_map(|e| (0..cfgs.len()).map(move |k| (e, k))).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let started = Instant::now();
    let outcomes: Vec<(EpisodeResult, Vec<f64>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(dir, k)| {
                let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                let out = output_root.join(&variants[k]).join(&name);
                let r = transform_episode(dir, &out, spec, &cfgs[k], backends, InitOptions::default());
                let mut res = EpisodeResult { episode: name, variant: variants[k].clone(), ok: r.is_ok(), frames: 0, error: None, category: None };
                match r {
                    Ok(o) => {
                        res.frames = o.frames;
                        (res, o.latencies_ms)
                    }
                    Err(e) => {
                        tracing::warn!(episode = %res.episode, variant = %res.variant, error = %e, "episode failed");
                        res.error = Some(e.to_string());
                        res.category = Some(e.category().to_string());
                        (res, Vec::new())
                    }
                }
            })
            .collect()
    });
    let wall_clock_ms = started.elapsed().as_secs_f64() * 1e3;
    let samples: Vec<f64> = outcomes.iter().flat_map(|(_, l)| l.iter().copied()).collect();
    let results: Vec<EpisodeResult> = outcomes.into_iter().map(|(r, _)| r).collect();
    let processed = results.iter().filter(|r| r.ok).count();
    Ok(TransformReport {
        requested: results.len(),
        processed,
        failed: results.len() - processed,
        results,
        wall_clock_ms,
        latency: latency_report(&samples).ok(),
        latency_samples_ms: samples,
    })
}
