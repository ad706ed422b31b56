//! Labeled synthetic pose corpus.
//!
//! Each class has one canonical keypoint configuration in image coordinates
//! (y grows downward, the subject faces the camera so their left side sits at
//! x > 0.5). Hands-to-shoulders, the T-pose and gazing at the passive hand
//! follow the described gestures directly; the other geometries are invented
//! to be mutually distinct. Samples perturb the canonical frame with keypoint
//! noise and a random global scale and shift.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::gesture::machine::Hand;
use crate::gesture::pose::{KeypointName, PoseFrame};
use crate::gesture::GestureClass;

use KeypointName::*;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub per_class: usize,
    /// Per-coordinate Gaussian noise.
    pub sigma: f64,
    /// Random global scale/shift, confidence spread and active side.
    pub jitter: bool,
}

impl SyntheticConfig {
    pub fn new(seed: u64, per_class: usize) -> Self {
        SyntheticConfig {
            seed,
            per_class,
            sigma: 0.02,
            jitter: true,
        }
    }

    /// Exact canonical frames, right hand active.
    pub fn noiseless(per_class: usize) -> Self {
        SyntheticConfig {
            seed: 0,
            per_class,
            sigma: 0.0,
            jitter: false,
        }
    }
}

const SCALE_RANGE: (f64, f64) = (0.8, 1.2);
const SHIFT_RANGE: f64 = 0.1;
const SCALE_CENTER: [f64; 2] = [0.5, 0.45];
const FRAME_RATE: f64 = 30.0;

const ARMS_DOWN: ((f64, f64), (f64, f64)) = ((0.38, 0.50), (0.37, 0.65));
const ARM_LATERAL: ((f64, f64), (f64, f64)) = ((0.30, 0.35), (0.20, 0.35));

fn mirror_x(p: (f64, f64)) -> (f64, f64) {
    (1.0 - p.0, p.1)
}

/// Right arm as given, left arm given in its own (unmirrored) coordinates.
fn set_arms(f: &mut PoseFrame, right: ((f64, f64), (f64, f64)), left: ((f64, f64), (f64, f64))) {
    f.set(RightElbow, right.0 .0, right.0 .1, 1.0);
    f.set(RightWrist, right.1 .0, right.1 .1, 1.0);
    f.set(LeftElbow, left.0 .0, left.0 .1, 1.0);
    f.set(LeftWrist, left.1 .0, left.1 .1, 1.0);
}

fn symmetric_arms(f: &mut PoseFrame, right: ((f64, f64), (f64, f64))) {
    set_arms(f, right, (mirror_x(right.0), mirror_x(right.1)));
}

/// Arm down on the subject's left.
fn left_down() -> ((f64, f64), (f64, f64)) {
    (mirror_x(ARMS_DOWN.0), mirror_x(ARMS_DOWN.1))
}

/// Swap the subject's sides.
fn mirrored(f: &PoseFrame) -> PoseFrame {
    let mut out = f.clone();
    for name in KeypointName::ALL {
        let k = f.get(name);
        out.set(name.mirrored(), 1.0 - k.x, k.y, k.conf);
    }
    out
}

/// Canonical configuration of `class` with `active` as the working hand
/// (for Track, Select and SwitchHands; other classes ignore it).
pub fn canonical_frame(class: GestureClass, active: Hand) -> PoseFrame {
    let mut f = PoseFrame::new(0.0);
    for (name, x, y) in [
        (Nose, 0.5, 0.25),
        (LeftEye, 0.53, 0.22),
        (RightEye, 0.47, 0.22),
        (LeftShoulder, 0.6, 0.35),
        (RightShoulder, 0.4, 0.35),
        (LeftHip, 0.57, 0.65),
        (RightHip, 0.43, 0.65),
    ] {
        f.set(name, x, y, 1.0);
    }
    match class {
        GestureClass::Neutral => symmetric_arms(&mut f, ARMS_DOWN),
        GestureClass::ZoomIn => symmetric_arms(&mut f, ((0.36, 0.47), (0.41, 0.36))),
        GestureClass::ZoomOut => symmetric_arms(&mut f, ARM_LATERAL),
        GestureClass::ScrollUp => symmetric_arms(&mut f, ((0.37, 0.22), (0.42, 0.10))),
        GestureClass::ScrollDown => symmetric_arms(&mut f, ((0.31, 0.50), (0.43, 0.62))),
        GestureClass::AdvanceRight => set_arms(&mut f, ARM_LATERAL, left_down()),
        GestureClass::AdvanceLeft => {
            set_arms(&mut f, ARM_LATERAL, left_down());
            f = mirrored(&f);
        }
        GestureClass::Track => set_arms(&mut f, ((0.34, 0.50), (0.38, 0.42)), left_down()),
        GestureClass::Select => set_arms(&mut f, ((0.40, 0.50), (0.50, 0.45)), left_down()),
        GestureClass::SwitchHands => {
            // Gaze toward the passive (left) hand, held out low.
            set_arms(&mut f, ARMS_DOWN, ((0.68, 0.48), (0.74, 0.55)));
            f.set(Nose, 0.56, 0.25, 1.0);
            f.set(LeftEye, 0.55, 0.22, 1.0);
            f.set(RightEye, 0.49, 0.22, 1.0);
        }
        GestureClass::Refresh => set_arms(&mut f, ((0.38, 0.22), (0.55, 0.12)), ((0.62, 0.22), (0.45, 0.12))),
    }
    let handed = matches!(class, GestureClass::Track | GestureClass::Select | GestureClass::SwitchHands);
    if handed && active == Hand::Left {
        f = mirrored(&f);
    }
    f
}

/// `per_class` frames for every class in class order; timestamps advance at
/// 30 frames per second across the whole corpus.
pub fn generate_synthetic_corpus(config: &SyntheticConfig) -> Vec<(PoseFrame, GestureClass)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.sigma.max(0.0)).expect("finite sigma");
    let mut out = Vec::with_capacity(config.per_class * GestureClass::COUNT);
    for class in GestureClass::ALL {
        for _ in 0..config.per_class {
            let t = out.len() as f64 / FRAME_RATE;
            let side = if config.jitter && rng.random::<bool>() { Hand::Left } else { Hand::Right };
            let mut frame = canonical_frame(class, side);
            if config.jitter {
                let scale = rng.random_range(SCALE_RANGE.0..=SCALE_RANGE.1);
                let shift = [
                    rng.random_range(-SHIFT_RANGE..=SHIFT_RANGE),
                    rng.random_range(-SHIFT_RANGE..=SHIFT_RANGE),
                ];
                frame = frame.transformed(SCALE_CENTER, scale, shift);
            }
            for k in frame.keypoints.iter_mut() {
                if config.sigma > 0.0 {
                    k.x += noise.sample(&mut rng);
                    k.y += noise.sample(&mut rng);
                }
                if config.jitter {
                    k.conf = rng.random_range(0.9..=1.0);
                }
            }
            frame.timestamp = t;
            out.push((frame, class));
        }
    }
    out
}

/// Stratified split: the first `train_fraction` of each class trains.
pub fn split_corpus(
    corpus: &[(PoseFrame, GestureClass)],
    train_fraction: f64,
) -> (Vec<(PoseFrame, GestureClass)>, Vec<(PoseFrame, GestureClass)>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in GestureClass::ALL {
        let members: Vec<_> = corpus.iter().filter(|(_, c)| *c == class).cloned().collect();
        let cut = ((members.len() as f64) * train_fraction).round() as usize;
        let cut = cut.min(members.len());
        let mut members = members.into_iter();
        train.extend(members.by_ref().take(cut));
        test.extend(members);
    }
    (train, test)
}
