//! First-frame initialization: detect, propose, annotate, seed tracks.

use std::path::PathBuf;

use arro::backend::BuiltinConfig;
use arro::codec::write_png;
use arro::init::{initialize_session, InitOptions, TaskSpec};
use arro::synth::{generate, reference_scene, SynthBackground};

fn main() -> arro::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("arro-init.png"));
    let ep = generate(&reference_scene("init", [320, 180], 1, SynthBackground::Clutter { seed: 2, count: 60 }))?;
    let spec = TaskSpec {
        objects: vec!["blue cube".into()],
        gripper: "green fingers".into(),
        task: "put the blue cube away".into(),
        ..Default::default()
    };
    let backends = BuiltinConfig::default().backends()?;
    let mut init = initialize_session(&ep.frames[0], &spec, &backends, InitOptions::default())?;

    println!("boxes: {:?}", init.boxes);
    println!("keypoints: {:?}", init.keypoints);
    for (e, m) in init.entities.iter().zip(&init.first_masks) {
        println!("entity {:?} {:?}: {} px", e.role, e.prompt, m.area());
    }
    if let Some(af) = &init.annotated {
        write_png(&out, &af.frame)?;
        println!("annotated frame with {} numbered regions: {}", af.anchors.len(), out.display());
    }
    init.handle.close()
}
