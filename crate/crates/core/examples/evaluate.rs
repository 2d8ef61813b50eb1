//! Mask quality, temporal consistency and latency reports.

use arro::eval::{latency_report, mask_quality, temporal_consistency, EpisodeEval, EvalReport, SeriesSummary};
use arro::mask::translate;
use arro::Mask;

fn main() -> arro::Result<()> {
    let square = Mask::rect(120, 60, 10, 20, 30, 40);
    let truth: Vec<Mask> = (0..10).map(|t| translate(&square, 2 * t, 0)).collect();
    // a prediction that lags one frame behind
    let pred: Vec<Mask> = (0..10).map(|t| translate(&square, 2 * (t - 1).max(0), 0)).collect();

    let q = mask_quality(&pred, &truth)?;
    let c = temporal_consistency(&pred)?;
    println!("iou mean {:.4} min {:.4}", q.mean, q.min);
    println!("temporal {:?}", c.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());

    let samples: Vec<f64> = (1..=100).map(f64::from).collect();
    let lat = latency_report(&samples)?;
    let episode = EpisodeEval { episode: "demo".into(), frames: pred.len(), iou: q, temporal: Some(SeriesSummary::of(c)) };
    let report = EvalReport::new(vec![episode], Some(lat));
    print!("{}", report.to_text());
    println!("{}", report.to_json());
    Ok(())
}
