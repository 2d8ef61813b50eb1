//! Generate a synthetic episode with ground-truth masks and write it out.

use std::path::PathBuf;

use arro::dataset::{load_episode, read_masks_file};
use arro::synth::{generate, reference_scene, SynthBackground};

fn main() -> arro::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("arro-synth"));
    let cfg = reference_scene("demo-0000", [320, 180], 30, SynthBackground::Clutter { seed: 1, count: 60 });
    println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));

    let ep = generate(&cfg)?;
    let dir = out.join(&cfg.episode_id);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| arro::Error::Input(e.to_string()))?;
    }
    ep.write(&dir)?;

    let back = load_episode(&dir)?;
    let masks = read_masks_file(&dir)?;
    println!("{}: {} frames, {} actors, retained area on frame 0: {}", back.manifest.episode_id, back.len(), masks.entities.len(), ep.retained(0).area());
    Ok(())
}
