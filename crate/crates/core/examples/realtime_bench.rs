//! End-to-end latency at 1280x720: decode, track, composite, encode.

use std::time::Instant;

use arro::backend::BuiltinConfig;
use arro::codec::{decode_png, encode_png};
use arro::eval::latency_report;
use arro::init::{initialize_session, InitOptions, TaskSpec};
use arro::recompose::{MaskingSession, RecomposeConfig};
use arro::synth::{generate, reference_scene, SynthBackground};

fn main() -> arro::Result<()> {
    let n: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(90);
    let ep = generate(&reference_scene("bench", [1280, 720], n + 1, SynthBackground::Clutter { seed: 3, count: 60 }))?;
    let encoded: Vec<Vec<u8>> = ep.frames.iter().map(encode_png).collect();

    let spec = TaskSpec { objects: vec!["blue cube".into()], gripper: "green fingers".into(), task: "pick".into(), ..Default::default() };
    let frame0 = decode_png(&encoded[0])?;
    let init = initialize_session(&frame0, &spec, &BuiltinConfig::default().backends()?, InitOptions::default())?;
    let (mut session, _) = MaskingSession::from_init(init, &frame0, RecomposeConfig::default())?;

    let mut samples = Vec::with_capacity(n as usize);
    for bytes in &encoded[1..] {
        let t = Instant::now();
        let out = session.mask_frame(&decode_png(bytes)?)?;
        std::hint::black_box(encode_png(&out.image));
        samples.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let r = latency_report(&samples)?;
    println!("{n} frames: {:.1} fps, p50 {:.1} ms, p95 {:.1} ms, p99 {:.1} ms, max {:.1} ms", r.fps, r.p50_ms, r.p95_ms, r.p99_ms, r.max_ms);
    Ok(())
}
