//! The greedy tracker carrying an object through a three-frame occlusion.

use arro::mask::iou;
use arro::synth::{generate, Actor, ActorRole, Occluder, SynthBackground, SynthSceneConfig};
use arro::tracker::{Role, SessionState, TrackerConfig};

fn main() -> arro::Result<()> {
    let cfg = SynthSceneConfig {
        resolution: [200, 120],
        length: 14,
        background: SynthBackground::Solid { color: [110, 110, 110] },
        actors: vec![
            Actor::rect(ActorRole::Object, [40, 70, 220], [20.0, 50.0], [20.0, 20.0])
                .moving([4.0, 0.0])
                .occluded_by(Occluder { rect: [30, 40, 50, 40], from: 5, to: 7, color: [70, 66, 62] }),
            Actor::rect(ActorRole::Object, [220, 40, 40], [150.0, 20.0], [16.0, 16.0]),
        ],
        ..Default::default()
    };
    let ep = generate(&cfg)?;
    let seeds = vec![(Role::Object, "blue".to_string(), ep.truth[0][0].clone()), (Role::Object, "red".to_string(), ep.truth[0][1].clone())];
    let mut st = SessionState::new(&ep.frames[0], seeds, TrackerConfig::default())?;

    for t in 1..ep.frames.len() {
        // ground-truth masks stand in for a segmenter's candidates
        let candidates = ep.truth[t].iter().filter(|m| !m.is_empty()).cloned().collect();
        let masks = st.step(&ep.frames[t], candidates)?;
        let statuses: Vec<&str> = st.statuses().iter().map(|s| s.as_str()).collect();
        println!("frame {t:2}: blue iou {:.3} statuses {statuses:?}", iou(&masks[0], &ep.truth[t][0])?);
    }
    Ok(())
}
