//! Wire-protocol checks against the scripted in-process gateway.
//!
//! Each check panics on failure and returns a short description of what
//! it exercised, so both the regular test target and the acceptance
//! runner can use them.

use std::time::Duration;

use arro::backend::mock::{MockGateway, MockScript};
use arro::backend::remote::RetryPolicy;
use arro::backend::{group_entities, Annotator, Backends, Detector, RegionRole, RemoteBackend, Segmenter, Selection};
use arro::codec::frame_from_b64;
use arro::init::{initialize_session, render_annotations, InitOptions, TaskSpec};
use arro::recompose::{composite, make_background, BackgroundSpec, MaskingSession, RecomposeConfig};
use arro::wire::{self, WireBox, WireSelection};
use arro::{BoundingBox, Error, Keypoint, Mask, RleMask};

use super::{blue_block, card, red_block};

const W: u32 = 64;
const H: u32 = 48;

fn client(url: &str, retries: u32) -> RemoteBackend {
    RemoteBackend::with_options(url, RetryPolicy { retries, initial_backoff: Duration::from_millis(1) }, Duration::from_secs(10))
}

fn wbox(x: f64, y: f64, w: f64, h: f64, score: f64) -> WireBox {
    WireBox { x, y, w, h, score }
}

fn sel(index: i64, role: &str) -> WireSelection {
    WireSelection { index, role: role.into() }
}

fn rle(m: &Mask) -> RleMask {
    RleMask::encode(m)
}

fn finger_halves() -> (Mask, Mask) {
    (Mask::rect(W, H, 8, 8, 14, 20), Mask::rect(W, H, 14, 8, 20, 20))
}

pub fn detect_clamps_and_sorts() -> String {
    let script = MockScript::default().detect(
        "red block",
        vec![wbox(-4.0, 6.0, 20.0, 16.0, 0.4), wbox(8.0, 8.0, 12.0, 12.0, 0.9), wbox(500.0, 500.0, 5.0, 5.0, 0.99)],
    );
    let gw = MockGateway::start(script).unwrap();
    let c = client(&gw.url(), 0);
    let frame = card(W, H);
    let boxes = c.detect(&frame, "red block").unwrap();
    assert_eq!(boxes, vec![BoundingBox::new(8, 8, 12, 12, 0.9), BoundingBox::new(0, 6, 16, 16, 0.4)]);
    assert!(c.detect(&frame, "purple thing").unwrap().is_empty());

    let reqs = gw.requests();
    assert_eq!(reqs[0].path, wire::DETECT);
    let body = reqs[0].body.as_ref().unwrap();
    assert_eq!(body["prompt"], "red block");
    assert_eq!(frame_from_b64(body["image"].as_str().unwrap()).unwrap(), frame);
    "detect: boxes clamped to the frame, off-frame dropped, sorted by score".into()
}

pub fn propose_decodes_masks() -> String {
    let gw = MockGateway::start(MockScript::default().proposals(vec![rle(&red_block(W, H)), rle(&blue_block(W, H))])).unwrap();
    let masks = client(&gw.url(), 0).propose(&card(W, H)).unwrap();
    assert_eq!(masks, vec![red_block(W, H), blue_block(W, H)]);

    let bad = MockGateway::start(MockScript::default().proposals(vec![rle(&Mask::full(10, 10))])).unwrap();
    let err = client(&bad.url(), 0).propose(&card(W, H)).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
    "propose: RLE masks decoded; wrong-size masks are protocol errors".into()
}

pub fn annotate_parses_selections() -> String {
    let frame = card(W, H);
    let af = render_annotations(&frame, &[red_block(W, H), blue_block(W, H)]).unwrap();
    let gw = MockGateway::start(MockScript::default().selections(vec![sel(1, "gripper-left"), sel(2, "object:cube")])).unwrap();
    let got = client(&gw.url(), 0).select_regions(&af, "pick the cube").unwrap();
    assert_eq!(
        got,
        vec![Selection::new(1, RegionRole::GripperLeft), Selection::new(2, RegionRole::Object("cube".into()))]
    );
    let body = gw.requests()[0].body.clone().unwrap();
    assert_eq!(body["region_count"], 2);
    assert_eq!(body["task_prompt"], "pick the cube");
    assert_eq!(frame_from_b64(body["image"].as_str().unwrap()).unwrap(), af.frame);

    for bad in [sel(3, "gripper-left"), sel(0, "gripper-left"), sel(1, "wheel")] {
        let gw = MockGateway::start(MockScript::default().selections(vec![bad.clone()])).unwrap();
        let err = client(&gw.url(), 0).select_regions(&af, "x").unwrap_err();
        assert!(matches!(err, Error::Protocol(_)), "{bad:?}: {err}");
    }
    "annotate: selections parsed; bad index or role is a protocol error".into()
}

pub fn track_lifecycle() -> String {
    let (w, h) = (W, H);
    let steps = vec![vec![rle(&blue_block(w, h)), rle(&red_block(w, h))], vec![rle(&blue_block(w, h)), rle(&Mask::empty(w, h))]];
    let gw = MockGateway::start(MockScript::default().track(steps)).unwrap();
    let c = client(&gw.url(), 0);
    let frame = card(w, h);
    let prompts = group_entities(
        &[("cube".into(), BoundingBox::new(36, 20, 14, 14, 1.0))],
        &[Keypoint::new(10, 12, "gripper-left"), Keypoint::new(16, 12, "gripper-right")],
    );
    let mut handle = c.init_tracks(&frame, &prompts).unwrap();
    assert_eq!(handle.entities().len(), 2);
    assert_eq!(gw.open_sessions(), 1);
    let init = gw.requests().into_iter().find(|r| r.path == wire::TRACK_INIT).unwrap().body.unwrap();
    assert_eq!(init["boxes"].as_array().unwrap().len(), 1);
    assert_eq!(init["points"].as_array().unwrap().len(), 2);

    assert_eq!(handle.propagate(&frame).unwrap(), vec![blue_block(w, h), red_block(w, h)]);
    assert_eq!(handle.propagate(&frame).unwrap(), vec![blue_block(w, h), Mask::empty(w, h)]);
    assert_eq!(handle.propagate(&frame).unwrap(), vec![blue_block(w, h), Mask::empty(w, h)]);
    handle.close().unwrap();
    assert_eq!(gw.open_sessions(), 0);
    assert_eq!(gw.paths().last().map(String::as_str), Some(wire::TRACK_CLOSE));
    "track/init, track/step x3, track/close: arity and session lifecycle".into()
}

pub fn rejected_request_is_protocol_error() -> String {
    let gw = MockGateway::start(MockScript::default()).unwrap();
    let prompts = group_entities(&[], &[Keypoint::new(500, 10, "object:ghost")]);
    let err = client(&gw.url(), 3).init_tracks(&card(W, H), &prompts).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
    assert_eq!(gw.paths(), vec![wire::TRACK_INIT], "400 must not be retried");
    "HTTP 400 -> protocol error, not retried".into()
}

pub fn unknown_session_is_session_error() -> String {
    let gw = MockGateway::start(MockScript::default().track(vec![vec![rle(&blue_block(W, H))]])).unwrap();
    let prompts = group_entities(&[("cube".into(), BoundingBox::new(36, 20, 14, 14, 1.0))], &[]);
    let mut handle = client(&gw.url(), 3).init_tracks(&card(W, H), &prompts).unwrap();
    gw.expire_sessions();
    let err = handle.propagate(&card(W, H)).unwrap_err();
    assert!(matches!(err, Error::Session(_)), "{err}");
    assert_eq!(gw.paths().iter().filter(|p| *p == wire::TRACK_STEP).count(), 1, "404 must not be retried");
    "HTTP 404 -> session error, not retried".into()
}

pub fn unavailable_is_retried() -> String {
    let gw = MockGateway::start(MockScript::default().fail_first(2).detect("cube", vec![wbox(36.0, 20.0, 14.0, 14.0, 0.8)])).unwrap();
    let boxes = client(&gw.url(), 3).detect(&card(W, H), "cube").unwrap();
    assert_eq!(boxes.len(), 1);
    assert_eq!(gw.paths().len(), 3);

    let down = MockGateway::start(MockScript::default()).unwrap();
    down.set_unavailable(true);
    let err = client(&down.url(), 2).propose(&card(W, H)).unwrap_err();
    assert!(matches!(err, Error::Unavailable(_)), "{err}");
    assert!(err.is_retriable());
    assert_eq!(down.paths().len(), 3);
    "HTTP 503 -> unavailable, retried with backoff until the budget runs out".into()
}

pub fn unreachable_is_transport_error() -> String {
    let url = {
        let gw = MockGateway::start(MockScript::default()).unwrap();
        gw.url()
    };
    let err = client(&url, 0).propose(&card(W, H)).unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err}");
    "connection refused -> transport error".into()
}

/// Full first-frame initialization and two streamed frames, all over the wire.
pub fn pipeline_over_wire() -> String {
    let (left, right) = finger_halves();
    let script = MockScript::default()
        .detect("cube", vec![wbox(36.0, 20.0, 14.0, 14.0, 0.95)])
        .proposals(vec![rle(&right), rle(&left)])
        .selections(vec![sel(1, "gripper-left"), sel(2, "gripper-right")])
        .track(vec![vec![rle(&blue_block(W, H)), rle(&red_block(W, H))]]);
    let gw = MockGateway::start(script).unwrap();
    let backends = Backends::remote(client(&gw.url(), 0));
    let spec = TaskSpec { objects: vec!["cube".into()], gripper: "red fingers".into(), task: "pick the cube".into(), ..Default::default() };
    let frame = card(W, H);
    let init = initialize_session(&frame, &spec, &backends, InitOptions::default()).unwrap();
    assert_eq!(init.keypoints.iter().map(|k| k.label.as_str()).collect::<Vec<_>>(), ["gripper-left", "gripper-right"]);
    assert!(left.get(init.keypoints[0].x, init.keypoints[0].y));
    assert!(right.get(init.keypoints[1].x, init.keypoints[1].y));

    let cfg = RecomposeConfig { background: BackgroundSpec::black(), dilate: 0 };
    let (mut session, first) = MaskingSession::from_init(init, &frame, cfg).unwrap();
    let keep = arro::mask::union(&red_block(W, H), &blue_block(W, H)).unwrap();
    let expected = composite(&frame, &keep, &make_background(&BackgroundSpec::black(), W, H)).unwrap();
    assert_eq!(first.image, expected);
    assert_eq!(session.mask_frame(&frame).unwrap().image, expected);
    session.close().unwrap();

    let mut seen = gw.paths();
    seen.sort();
    seen.dedup();
    let mut all = vec![wire::DETECT, wire::PROPOSE, wire::ANNOTATE, wire::TRACK_INIT, wire::TRACK_STEP, wire::TRACK_CLOSE];
    all.sort();
    assert_eq!(seen, all);
    assert_eq!(gw.open_sessions(), 0);
    "first-frame init plus streaming through all six endpoints".into()
}

pub type Check = fn() -> String;

pub const ALL: &[(&str, Check)] = &[
    ("detect", detect_clamps_and_sorts),
    ("propose", propose_decodes_masks),
    ("annotate", annotate_parses_selections),
    ("track", track_lifecycle),
    ("http-400", rejected_request_is_protocol_error),
    ("http-404", unknown_session_is_session_error),
    ("http-503", unavailable_is_retried),
    ("unreachable", unreachable_is_transport_error),
    ("pipeline", pipeline_over_wire),
];
