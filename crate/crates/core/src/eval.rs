//! Mask quality, temporal consistency and latency metrics, with text,
//! JSON and PNG chart output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::write_png;
use crate::dataset::{read_masks_file, MASKS};
use crate::error::{Error, Result};
use crate::mask::{iou, Frame, Mask};

pub const SCHEMA: &str = "arro-eval/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub series: Vec<f64>,
    pub mean: f64,
    pub min: f64,
}

impl SeriesSummary {
    pub fn of(series: Vec<f64>) -> Self {
        let n = series.len().max(1) as f64;
        let mean = series.iter().sum::<f64>() / n;
        let min = series.iter().copied().fold(f64::INFINITY, f64::min);
        Self { mean, min: if min.is_finite() { min } else { 0.0 }, series }
    }
}

/// Per-frame IoU of predicted against true masks.
pub fn mask_quality(pred: &[Mask], truth: &[Mask]) -> Result<SeriesSummary> {
    if pred.len() != truth.len() {
        return Err(Error::Length { expected: truth.len(), got: pred.len() });
    }
    let series = pred.iter().zip(truth).map(|(p, t)| iou(p, t)).collect::<Result<Vec<_>>>()?;
    Ok(SeriesSummary::of(series))
}

/// IoU of each mask with the next one.
pub fn temporal_consistency(pred: &[Mask]) -> Result<Vec<f64>> {
    if pred.len() < 2 {
        return Err(Error::Input("temporal consistency needs at least two frames".into()));
    }
    pred.windows(2).map(|w| iou(&w[0], &w[1])).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub count: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    /// Frames per second at the mean latency.
    pub fps: f64,
}

/// Nearest-rank percentile of ascending `sorted`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn latency_report(samples_ms: &[f64]) -> Result<LatencyReport> {
    if samples_ms.is_empty() {
        return Err(Error::Input("no latency samples".into()));
    }
    if samples_ms.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Input("latency samples must be finite and non-negative".into()));
    }
    let mut s = samples_ms.to_vec();
    s.sort_by(f64::total_cmp);
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    Ok(LatencyReport {
        count: s.len(),
        mean_ms: mean,
        p50_ms: percentile(&s, 50.0),
        p95_ms: percentile(&s, 95.0),
        p99_ms: percentile(&s, 99.0),
        max_ms: s[s.len() - 1],
        fps: if mean > 0.0 { 1000.0 / mean } else { f64::INFINITY },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEval {
    /// Path of the predicted episode relative to the prediction root.
    pub episode: String,
    pub frames: usize,
    pub iou: SeriesSummary,
    pub temporal: Option<SeriesSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub episodes: Vec<EpisodeEval>,
    pub mean_iou: Option<f64>,
    pub min_iou: Option<f64>,
    pub mean_temporal: Option<f64>,
    pub latency: Option<LatencyReport>,
}

impl EvalReport {
    pub fn new(episodes: Vec<EpisodeEval>, latency: Option<LatencyReport>) -> Self {
        let all: Vec<f64> = episodes.iter().flat_map(|e| e.iou.series.iter().copied()).collect();
        let temporal: Vec<f64> =
            episodes.iter().filter_map(|e| e.temporal.as_ref()).flat_map(|t| t.series.iter().copied()).collect();
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        Self {
            schema: SCHEMA.into(),
            mean_iou: mean(&all),
            min_iou: all.iter().copied().reduce(f64::min),
            mean_temporal: mean(&temporal),
            episodes,
            latency,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: EvalReport = serde_json::from_str(text).map_err(|e| Error::Format(format!("eval report: {e}")))?;
        if r.schema != SCHEMA {
            return Err(Error::Format(format!("unsupported report schema {:?}", r.schema)));
        }
        Ok(r)
    }

    /// One line per metric.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        let mut out = format!("schema {}\n", self.schema);
        out += &format!("mean_iou {}\nmin_iou {}\nmean_temporal {}\n", opt(self.mean_iou), opt(self.min_iou), opt(self.mean_temporal));
        for e in &self.episodes {
            out += &format!("episode {} frames {} iou.mean {:.4} iou.min {:.4}", e.episode, e.frames, e.iou.mean, e.iou.min);
            if let Some(t) = &e.temporal {
                out += &format!(" temporal.mean {:.4} temporal.min {:.4}", t.mean, t.min);
            }
            out.push('\n');
        }
        if let Some(l) = &self.latency {
            out += &format!(
                "latency count {} mean_ms {:.2} p50_ms {:.2} p95_ms {:.2} p99_ms {:.2} max_ms {:.2} fps {:.1}\n",
                l.count, l.mean_ms, l.p50_ms, l.p95_ms, l.p99_ms, l.max_ms, l.fps
            );
        }
        out
    }
}

fn find_mask_dirs(root: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if root.join(MASKS).is_file() {
        out.push(root.to_path_buf());
        return Ok(());
    }
    let mut children: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    children.sort();
    for c in children {
        find_mask_dirs(&c, out)?;
    }
    Ok(())
}

/// Compare every predicted episode under `pred_root` with the ground
/// truth episode of the same id under `truth_root`, on union masks.
pub fn evaluate_dirs(pred_root: &Path, truth_root: &Path, latency: Option<LatencyReport>) -> Result<EvalReport> {
    let (mut preds, mut truths) = (Vec::new(), Vec::new());
    find_mask_dirs(pred_root, &mut preds)?;
    find_mask_dirs(truth_root, &mut truths)?;
    if preds.is_empty() {
        return Err(Error::Input(format!("no {MASKS} under {}", pred_root.display())));
    }
    let mut truth_by_id = BTreeMap::new();
    for dir in &truths {
        let f = read_masks_file(dir)?;
        truth_by_id.insert(f.episode_id.clone(), f);
    }
    let mut episodes = Vec::with_capacity(preds.len());
    for dir in &preds {
        let p = read_masks_file(dir)?;
        let t = truth_by_id
            .get(&p.episode_id)
            .ok_or_else(|| Error::Input(format!("no ground truth for episode {:?}", p.episode_id)))?;
        let decode = |f: &crate::dataset::MasksFile| f.frames.iter().map(|r| r.union.decode()).collect::<Result<Vec<Mask>>>();
        let (pm, tm) = (decode(&p)?, decode(t)?);
        let quality = mask_quality(&pm, &tm)?;
        let temporal = if pm.len() >= 2 { Some(SeriesSummary::of(temporal_consistency(&pm)?)) } else { None };
        let rel = dir.strip_prefix(pred_root).unwrap_or(dir);
        let name = if rel.as_os_str().is_empty() { p.episode_id.clone() } else { rel.to_string_lossy().into_owned() };
        episodes.push(EpisodeEval { episode: name, frames: pm.len(), iou: quality, temporal });
    }
    Ok(EvalReport::new(episodes, latency))
}

/// Draw `series` as a polyline on a white chart with light gridlines.
pub fn line_chart(series: &[f64], y_max: f64, width: u32, height: u32) -> Frame {
    let mut f = Frame::filled(width, height, [255, 255, 255]);
    let (m, w, h) = (8i64, width as i64, height as i64);
    let (pw, ph) = ((w - 2 * m).max(1), (h - 2 * m).max(1));
    for k in 0..=4 {
        let y = m + ph * k / 4;
        f.fill_rect(m, y, w - m, y + 1, [225, 225, 225]);
    }
    f.fill_rect(m, m, m + 1, h - m, [60, 60, 60]);
    f.fill_rect(m, h - m, w - m, h - m + 1, [60, 60, 60]);
    let y_max = if y_max > 0.0 { y_max } else { 1.0 };
    let n = series.len();
    let point = |i: usize| {
        let x = if n > 1 { m + pw * i as i64 / (n as i64 - 1) } else { m + pw / 2 };
        let v = (series[i] / y_max).clamp(0.0, 1.0);
        let y = h - m - (v * ph as f64).round() as i64;
        (x, y)
    };
    for i in 0..n {
        let (x1, y1) = point(i);
        let (x0, y0) = if i == 0 { (x1, y1) } else { point(i - 1) };
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
        for s in 0..=steps {
            let x = x0 + (x1 - x0) * s / steps;
            let y = y0 + (y1 - y0) * s / steps;
            f.fill_rect(x - 1, y - 1, x + 1, y + 1, [30, 90, 200]);
        }
    }
    f
}

/// Write `iou-<n>.png` per episode and `latency.png` when latency is known.
pub fn write_plots(report: &EvalReport, latency_samples: Option<&[f64]>, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (i, e) in report.episodes.iter().enumerate() {
        let p = dir.join(format!("iou-{i:03}.png"));
        write_png(&p, &line_chart(&e.iou.series, 1.0, 480, 240))?;
        written.push(p);
    }
    if let Some(s) = latency_samples.filter(|s| !s.is_empty()) {
        let top = s.iter().copied().fold(0.0, f64::max);
        let p = dir.join("latency.png");
        write_png(&p, &line_chart(s, top, 480, 240))?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::translate;

    #[test]
    fn perfect_and_missing_predictions() {
        let t = vec![Mask::rect(10, 10, 2, 2, 6, 6), Mask::empty(10, 10)];
        let q = mask_quality(&t, &t).unwrap();
        assert_eq!(q.series, vec![1.0, 1.0]);
        let q = mask_quality(&[Mask::empty(10, 10)], &t[..1]).unwrap();
        assert_eq!(q.series, vec![0.0]);
        assert_eq!(mask_quality(&t[..1], &t).unwrap_err().category(), "shape");
    }

    #[test]
    fn half_overlap_is_one_third() {
        let a = Mask::rect(4, 1, 0, 0, 2, 1);
        let b = Mask::rect(4, 1, 1, 0, 3, 1);
        assert!((mask_quality(&[a], &[b]).unwrap().mean - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn translating_square_consistency() {
        let sq = Mask::rect(200, 60, 10, 10, 30, 30);
        let seq: Vec<Mask> = (0..10).map(|t| translate(&sq, 2 * t, 0)).collect();
        for v in temporal_consistency(&seq).unwrap() {
            assert!((v - 9.0 / 11.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_hits_two_entries() {
        let sq = Mask::rect(20, 20, 2, 2, 8, 8);
        let mut seq = vec![sq; 6];
        seq[3] = Mask::empty(20, 20);
        let tc = temporal_consistency(&seq).unwrap();
        assert_eq!(tc.iter().filter(|&&v| v < 1.0).count(), 2);
        assert!(temporal_consistency(&seq[..1]).is_err());
    }

    #[test]
    fn nearest_rank_percentiles() {
        let r = latency_report(&[10.0; 100]).unwrap();
        assert_eq!((r.p95_ms, r.fps), (10.0, 100.0));
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        let r = latency_report(&s).unwrap();
        assert_eq!((r.p50_ms, r.p95_ms, r.p99_ms, r.max_ms), (50.0, 95.0, 99.0, 100.0));
        assert!(latency_report(&[]).is_err());
    }

    #[test]
    fn report_round_trips_and_text_lists_metrics() {
        let ep = EpisodeEval {
            episode: "black/ep0".into(),
            frames: 2,
            iou: SeriesSummary::of(vec![1.0, 0.5]),
            temporal: Some(SeriesSummary::of(vec![0.9])),
        };
        let r = EvalReport::new(vec![ep], Some(latency_report(&[3.0, 4.0]).unwrap()));
        assert_eq!(EvalReport::from_json(&r.to_json()).unwrap(), r);
        let text = r.to_text();
        for key in ["mean_iou", "min_iou", "mean_temporal", "iou.mean", "temporal.min", "p95_ms", "fps"] {
            assert!(text.contains(key), "{key}");
        }
        assert_eq!(r.mean_iou, Some(0.75));
    }

    #[test]
    fn chart_has_requested_size() {
        let c = line_chart(&[0.0, 0.5, 1.0], 1.0, 120, 60);
        assert_eq!(c.dims(), (120, 60));
        assert!(c.pixels().chunks_exact(3).any(|p| p == [30, 90, 200]));
    }
}
