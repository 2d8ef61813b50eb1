//! The remote backend against the scripted in-process gateway.

use arro::backend::mock::{MockGateway, MockScript};
use arro::backend::{Backends, RemoteBackend};
use arro::init::{initialize_session, InitOptions, TaskSpec};
use arro::recompose::{MaskingSession, RecomposeConfig};
use arro::wire::{WireBox, WireSelection};
use arro::{Frame, Mask, RleMask};

fn main() -> arro::Result<()> {
    let (w, h) = (64, 48);
    let frame = Frame::from_fn(w, h, |x, y| if x < 20 && y < 20 { [200, 40, 40] } else { [90, 90, 90] });
    let cube = Mask::rect(w, h, 30, 20, 44, 34);
    let (left, right) = (Mask::rect(w, h, 4, 4, 10, 18), Mask::rect(w, h, 12, 4, 18, 18));

    let script = MockScript::default()
        .detect("cube", vec![WireBox { x: 30.0, y: 20.0, w: 14.0, h: 14.0, score: 0.9 }])
        .proposals(vec![RleMask::encode(&left), RleMask::encode(&right)])
        .selections(vec![
            WireSelection { index: 1, role: "gripper-left".into() },
            WireSelection { index: 2, role: "gripper-right".into() },
        ])
        .track(vec![vec![RleMask::encode(&cube), RleMask::encode(&arro::mask::union(&left, &right)?)]])
        .fail_first(1);
    let gateway = MockGateway::start(script)?;
    let backends = Backends::remote(RemoteBackend::new(gateway.url()));

    let spec = TaskSpec { objects: vec!["cube".into()], gripper: "red fingers".into(), task: "grab the cube".into(), ..Default::default() };
    let init = initialize_session(&frame, &spec, &backends, InitOptions::default())?;
    let (mut session, first) = MaskingSession::from_init(init, &frame, RecomposeConfig::default())?;
    println!("frame 0 keeps {} px", first.union.area());
    println!("frame 1 keeps {} px", session.mask_frame(&frame)?.union.area());
    session.close()?;

    for p in gateway.paths() {
        println!("POST {p}");
    }
    Ok(())
}
