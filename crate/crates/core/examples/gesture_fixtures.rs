//! Regenerates the scripted gesture fixtures: a classifier trained on the
//! seed-7 synthetic corpus, twelve pose streams and their event traces.
//!
//!     cargo run -p cartographer-core --example gesture_fixtures -- crates/cli/tests/fixtures/gesture

use std::path::PathBuf;

use cartographer_core::gesture::{
    canonical_frame, encode_model, encode_pose_stream, encode_trace, generate_synthetic_corpus, parse_pose_stream, run_stream,
    split_corpus, train_classifier, GestureClass, Hand, KeypointName, MachineConfig, PoseFrame, SyntheticConfig,
    TrainParams,
};

use GestureClass::*;

/// A run of identical poses, with the working wrist optionally circling.
struct Segment {
    class: GestureClass,
    hand: Hand,
    frames: usize,
    circle: bool,
}

fn seg(class: GestureClass, frames: usize) -> Segment {
    Segment { class, hand: Hand::Right, frames, circle: false }
}

fn moving(class: GestureClass, hand: Hand, frames: usize) -> Segment {
    Segment { class, hand, frames, circle: true }
}

fn render(segments: &[Segment]) -> Vec<PoseFrame> {
    let mut out = Vec::new();
    for s in segments {
        let base = canonical_frame(s.class, s.hand);
        let wrist = match s.hand {
            Hand::Right => KeypointName::RightWrist,
            Hand::Left => KeypointName::LeftWrist,
        };
        for i in 0..s.frames {
            let mut f = base.clone();
            if s.circle {
                let w = f.get(wrist);
                let a = i as f64 * 0.3;
                f.set(wrist, w.x + 0.02 * a.cos(), w.y + 0.02 * a.sin(), w.conf);
            }
            f.timestamp = out.len() as f64 / 30.0;
            out.push(f);
        }
    }
    out
}

/// Discrete gesture held for 40 frames with a one-frame neutral glitch.
fn held(class: GestureClass) -> Vec<Segment> {
    vec![seg(Neutral, 10), seg(class, 20), seg(Neutral, 1), seg(class, 19), seg(Neutral, 10)]
}

fn scripts() -> Vec<(&'static str, Vec<Segment>)> {
    let mut v = vec![(
        "neutral",
        vec![seg(Neutral, 10), seg(ZoomIn, 1), seg(Neutral, 10), seg(Refresh, 2), seg(Neutral, 10)],
    )];
    for (name, class) in [
        ("zoom_in", ZoomIn),
        ("zoom_out", ZoomOut),
        ("scroll_down", ScrollDown),
        ("scroll_up", ScrollUp),
        ("advance_right", AdvanceRight),
        ("advance_left", AdvanceLeft),
        ("refresh", Refresh),
    ] {
        v.push((name, held(class)));
    }
    v.push(("track", vec![seg(Neutral, 10), moving(Track, Hand::Right, 40), seg(Neutral, 10)]));
    v.push((
        "select",
        vec![
            seg(Neutral, 10),
            moving(Track, Hand::Right, 15),
            moving(Select, Hand::Right, 20),
            moving(Track, Hand::Right, 10),
            seg(Neutral, 10),
        ],
    ));
    v.push((
        "switch_hands",
        vec![
            seg(Neutral, 10),
            seg(SwitchHands, 15),
            seg(Neutral, 10),
            moving(Track, Hand::Left, 20),
            seg(Neutral, 10),
        ],
    ));
    v.push((
        "drag_switch",
        vec![
            seg(Neutral, 10),
            moving(Track, Hand::Right, 10),
            moving(Select, Hand::Right, 15),
            seg(SwitchHands, 15),
            moving(Select, Hand::Right, 10),
            moving(Track, Hand::Right, 10),
            seg(Neutral, 10),
        ],
    ));
    v
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).ok_or("usage: gesture_fixtures <out-dir>")?);
    std::fs::create_dir_all(&dir)?;

    let corpus = generate_synthetic_corpus(&SyntheticConfig::new(7, 200));
    let (train, _) = split_corpus(&corpus, 0.8);
    let (model, _) = train_classifier(&train, &TrainParams::default())?;
    std::fs::write(dir.join("model.glm"), encode_model(&model))?;

    let config = MachineConfig::default();
    for (name, script) in scripts() {
        let text = encode_pose_stream(render(&script).iter().map(|f| (f, None)));
        std::fs::write(dir.join(format!("{name}.pose")), &text)?;
        // Trace what the file decodes to, not the unrounded frames.
        let frames: Vec<PoseFrame> = parse_pose_stream(&text)?.into_iter().map(|f| f.frame).collect();
        let events = run_stream(&model, &config, &frames)?;
        std::fs::write(dir.join(format!("{name}.trace")), encode_trace(&events))?;
        println!("{name}: {} frames, {} events", frames.len(), events.len());
    }
    Ok(())
}
