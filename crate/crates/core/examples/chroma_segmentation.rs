//! Color-class segmentation of a synthetic frame with the builtin backend.

use arro::backend::{chroma_segment, BuiltinConfig};
use arro::synth::{generate, reference_scene, SynthBackground};

fn main() -> arro::Result<()> {
    let ep = generate(&reference_scene("chroma", [320, 180], 1, SynthBackground::Clutter { seed: 4, count: 60 }))?;
    let frame = &ep.frames[0];
    let cfg = BuiltinConfig::default();

    for class in &cfg.classes {
        println!("{:>6}: {} px", class.name, chroma_segment(frame, class, cfg.min_area).area());
    }

    let b = cfg.backends()?;
    for prompt in ["blue cube", "yellow ball", "purple hat"] {
        println!("detect {prompt:?}: {:?}", b.detector.detect(frame, prompt)?);
    }
    for (i, m) in b.segmenter.propose(frame)?.iter().enumerate() {
        println!("proposal {}: area {}", i + 1, m.area());
    }
    Ok(())
}
