//! Compositing retained pixels onto the black and grid virtual backgrounds.

use std::path::PathBuf;

use arro::codec::write_png;
use arro::recompose::{composite, make_background, BackgroundSpec};
use arro::synth::{generate, reference_scene, SynthBackground};

fn main() -> arro::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("arro-recompose"));
    std::fs::create_dir_all(&out).map_err(|e| arro::Error::Input(e.to_string()))?;

    let ep = generate(&reference_scene("bg", [320, 180], 1, SynthBackground::Clutter { seed: 9, count: 60 }))?;
    let (frame, keep) = (&ep.frames[0], ep.retained(0));
    write_png(&out.join("input.png"), frame)?;
    for (name, spec) in [("black", BackgroundSpec::black()), ("grid", BackgroundSpec::grid())] {
        let bg = make_background(&spec, 320, 180);
        write_png(&out.join(format!("{name}.png")), &composite(frame, &keep, &bg)?)?;
    }
    println!("wrote input.png, black.png, grid.png to {}", out.display());
    Ok(())
}
