use std::sync::OnceLock;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cartographer_core::gesture::{
    canonical_frame, classify, featurize, generate_synthetic_corpus, run_stream, train_classifier, train_on_features,
    ClassifierModel, EventKind, GestureClass, GestureEngine, Hand, KeypointName, MachineConfig, MachineState, Mode,
    PoseFrame, SyntheticConfig, TrainParams, FEATURE_DIM,
};

fn model() -> &'static ClassifierModel {
    static MODEL: OnceLock<ClassifierModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let corpus = generate_synthetic_corpus(&SyntheticConfig::new(7, 80));
        let model = train_classifier(&corpus, &TrainParams::default()).unwrap().0;
        for class in GestureClass::ALL {
            for hand in [Hand::Left, Hand::Right] {
                let f = featurize(&canonical_frame(class, hand)).unwrap();
                assert_eq!(classify(&model, &f).unwrap().0, class, "{class} {hand:?}");
            }
        }
        model
    })
}

/// `runs` of canonical frames at 30 fps.
fn script(runs: &[(GestureClass, Hand, usize)]) -> Vec<PoseFrame> {
    let mut out = Vec::new();
    for &(class, hand, n) in runs {
        for _ in 0..n {
            let mut f = canonical_frame(class, hand);
            f.timestamp = out.len() as f64 / 30.0;
            out.push(f);
        }
    }
    out
}

fn kinds(frames: &[PoseFrame]) -> Vec<EventKind> {
    run_stream(model(), &MachineConfig::default(), frames).unwrap().into_iter().map(|e| e.kind).collect()
}

#[test]
fn separable_two_class_set_is_learned_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w_true = [1.5, -2.0, 0.5];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    while xs.len() < 200 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s: f64 = x.iter().zip(&w_true).map(|(a, b)| a * b).sum::<f64>() + 0.2;
        if s.abs() > 0.1 {
            ys.push(usize::from(s > 0.0));
            xs.push(x);
        }
    }
    // Perceptron oracle: converges only on separable data.
    let mut w = [0.0; 4];
    let mut converged = false;
    for _ in 0..1000 {
        let mut errors = 0;
        for (x, &y) in xs.iter().zip(&ys) {
            let s = w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + w[3];
            let t = if y == 1 { 1.0 } else { -1.0 };
            if s * t <= 0.0 {
                errors += 1;
                for i in 0..3 {
                    w[i] += t * x[i];
                }
                w[3] += t;
            }
        }
        if errors == 0 {
            converged = true;
            break;
        }
    }
    assert!(converged);

    let params = TrainParams { epochs: 3000, learning_rate: 1.0, l2: 0.0, ..TrainParams::default() };
    let (m, _) = train_on_features(&xs, &ys, 2, &params).unwrap();
    let correct = xs
        .iter()
        .zip(&ys)
        .filter(|(x, &y)| {
            let p = m.probabilities(x).unwrap();
            usize::from(p[1] > p[0]) == y
        })
        .count();
    assert_eq!(correct, xs.len());
}

#[test]
fn duplicated_training_set_gives_the_same_model() {
    let corpus = generate_synthetic_corpus(&SyntheticConfig::new(3, 20));
    let doubled: Vec<_> = corpus.iter().chain(&corpus).cloned().collect();
    let params = TrainParams { epochs: 100, ..TrainParams::default() };
    let (a, _) = train_classifier(&corpus, &params).unwrap();
    let (b, _) = train_classifier(&doubled, &params).unwrap();
    for (x, y) in a.weights.iter().chain(&a.bias).zip(b.weights.iter().chain(&b.bias)) {
        assert!((x - y).abs() < 1e-9, "{x} vs {y}");
    }
}

#[test]
fn probabilities_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..FEATURE_DIM).map(|_| rng.random_range(-3.0..3.0)).collect();
        let p = model().probabilities(&x).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

#[test]
fn ten_zoom_frames_fire_once() {
    let frames = script(&[(GestureClass::ZoomIn, Hand::Right, 10)]);
    assert_eq!(kinds(&frames), vec![EventKind::ZoomIn]);
    // Holding past the rate limit fires again.
    let frames = script(&[(GestureClass::ZoomIn, Hand::Right, 30)]);
    assert_eq!(kinds(&frames), vec![EventKind::ZoomIn, EventKind::ZoomIn]);
}

#[test]
fn track_select_track_gives_one_down_one_up() {
    let r = Hand::Right;
    let frames = script(&[
        (GestureClass::Track, r, 10),
        (GestureClass::Select, r, 8),
        (GestureClass::Select, r, 8),
        (GestureClass::Track, r, 10),
    ]);
    let k = kinds(&frames);
    let selects: Vec<&EventKind> =
        k.iter().filter(|e| matches!(e, EventKind::SelectDown | EventKind::SelectUp)).collect();
    assert_eq!(selects, [&EventKind::SelectDown, &EventKind::SelectUp]);
}

#[test]
fn switch_while_dragging_is_suppressed() {
    let r = Hand::Right;
    let frames = script(&[(GestureClass::Track, r, 8), (GestureClass::Select, r, 8), (GestureClass::SwitchHands, r, 12)]);
    let engine = GestureEngine::new(model(), MachineConfig::default());
    let mut state = MachineState::default();
    let mut events = Vec::new();
    for f in &frames {
        events.extend(engine.step(&mut state, f).unwrap().events.into_iter().map(|e| e.kind));
    }
    assert!(!events.contains(&EventKind::SwitchHands));
    assert_eq!(state.dominant_hand, Hand::Right);
    assert_eq!(state.mode, Mode::Dragging);

    // Outside a drag the same poses do switch.
    let frames = script(&[(GestureClass::SwitchHands, r, 12)]);
    assert_eq!(kinds(&frames), vec![EventKind::SwitchHands]);
}

fn arb_frame() -> impl Strategy<Value = PoseFrame> {
    (0..GestureClass::COUNT, any::<bool>(), -0.2f64..0.2, -0.2f64..0.2, 0.5f64..1.5).prop_map(|(c, left, dx, dy, s)| {
        let hand = if left { Hand::Left } else { Hand::Right };
        canonical_frame(GestureClass::ALL[c], hand).transformed([0.5, 0.45], s, [dx, dy])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn features_ignore_translation_and_scale(frame in arb_frame(), dx in -0.3f64..0.3, dy in -0.3f64..0.3, s in 0.3f64..3.0) {
        let base = featurize(&frame).unwrap();
        let mid = {
            let l = frame.get(KeypointName::LeftShoulder);
            let r = frame.get(KeypointName::RightShoulder);
            [(l.x + r.x) / 2.0, (l.y + r.y) / 2.0]
        };
        let moved = featurize(&frame.transformed(mid, s, [dx, dy])).unwrap();
        for (a, b) in base.iter().zip(&moved) {
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn select_events_alternate_and_outputs_stay_in_range(
        steps in proptest::collection::vec((arb_frame(), 0.005f64..0.2, 0u8..20), 1..400)
    ) {
        let engine = GestureEngine::new(model(), MachineConfig::default());
        let mut state = MachineState::default();
        let mut t = 0.0;
        let mut down = false;
        for (frame, dt, drop) in steps {
            t += dt;
            // One frame in twenty loses every keypoint.
            let mut f = if drop == 0 { PoseFrame::new(0.0) } else { frame };
            f.timestamp = t;
            let out = engine.step(&mut state, &f).unwrap();
            for e in &out.events {
                match e.kind {
                    EventKind::SelectDown => { prop_assert!(!down); down = true; }
                    EventKind::SelectUp => { prop_assert!(down); down = false; }
                    EventKind::CursorMove { x, y } => {
                        prop_assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
                    }
                    _ => {}
                }
                prop_assert!(e.timestamp == t);
            }
            prop_assert_eq!(down, state.mode == Mode::Dragging);
            prop_assert_eq!(state.mode == Mode::Idle, state.cursor.is_none());
            let s = out.sonify;
            prop_assert!((0.0..=1.0).contains(&s.gain) && (0.0..=1.0).contains(&s.pitch));
            prop_assert_eq!(s.texture_index, state.mode.ordinal());
        }
    }
}

#[test]
fn non_increasing_timestamps_are_rejected() {
    let engine = GestureEngine::new(model(), MachineConfig::default());
    let mut state = MachineState::default();
    let mut f = canonical_frame(GestureClass::Neutral, Hand::Right);
    f.timestamp = 1.0;
    engine.step(&mut state, &f).unwrap();
    assert!(engine.step(&mut state, &f).is_err());
    f.timestamp = f64::NAN;
    assert!(engine.step(&mut state, &f).is_err());
}
