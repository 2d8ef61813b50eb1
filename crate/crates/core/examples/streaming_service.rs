//! Run the streaming service in-process and drive it with the client.

use arro::backend::BuiltinConfig;
use arro::init::TaskSpec;
use arro::recompose::RecomposeConfig;
use arro::service::{spawn, Limits, ServiceClient};
use arro::synth::{generate, reference_scene, SynthBackground};

fn main() -> arro::Result<()> {
    let server = spawn(([127, 0, 0, 1], 0).into(), BuiltinConfig::default().backends()?, Limits::default())?;
    let client = ServiceClient::new(server.url());
    println!("health: {:?}", client.health()?);

    let ep = generate(&reference_scene("live", [320, 180], 20, SynthBackground::Clutter { seed: 5, count: 60 }))?;
    let spec = TaskSpec { objects: vec!["blue cube".into()], gripper: "green fingers".into(), task: "pick".into(), ..Default::default() };
    let session = client.create(&ep.frames[0], &spec, &RecomposeConfig::default())?;
    println!("session {} entities {:?}", session.id, session.entities);

    for (t, f) in ep.frames.iter().enumerate().skip(1) {
        let (_, resp) = client.frame(&session.id, f)?;
        if t % 5 == 0 {
            println!("frame {t}: {:.2} ms {:?}", resp.latency_ms, resp.entities);
        }
    }
    println!("closed: {:?}", client.close(&session.id)?);
    server.shutdown();
    Ok(())
}
