//! Batch transform of a small dataset into black and grid variants.

use arro::backend::BuiltinConfig;
use arro::dataset::transform_dataset;
use arro::init::TaskSpec;
use arro::recompose::{BackgroundSpec, RecomposeConfig};
use arro::synth::{generate, reference_scene, SynthBackground};

fn main() -> arro::Result<()> {
    let root = std::env::temp_dir().join(format!("arro-dataset-{}", std::process::id()));
    for k in 0..4u64 {
        let id = format!("ep-{k:03}");
        generate(&reference_scene(&id, [160, 90], 20, SynthBackground::Clutter { seed: k, count: 40 }))?.write(&root.join("in").join(&id))?;
    }
    let spec = TaskSpec { objects: vec!["blue cube".into()], gripper: "green fingers".into(), task: "pick".into(), ..Default::default() };
    let variants = [
        RecomposeConfig { background: BackgroundSpec::black(), dilate: 0 },
        RecomposeConfig { background: BackgroundSpec::grid(), dilate: 1 },
    ];
    let backends = BuiltinConfig::default().backends()?;
    let report = transform_dataset(&root.join("in"), &root.join("out"), &spec, &variants, &backends, 2)?;

    for r in &report.results {
        println!("{:>5}/{}: ok={} frames={}", r.variant, r.episode, r.ok, r.frames);
    }
    println!("processed {} of {} in {} ms", report.processed, report.requested, report.wall_clock_ms);
    if let Some(l) = &report.latency {
        println!("per-frame p50 {:.2} ms p95 {:.2} ms", l.p50_ms, l.p95_ms);
    }
    println!("output under {}", root.join("out").display());
    Ok(())
}
