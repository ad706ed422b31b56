use crate::gesture::pose::{KeypointName, PoseFrame};

pub const FEATURE_DIM: usize = 22;
pub const FEATURE_SPEC_VERSION: &str = "pose22-v1";
pub const MIN_SHOULDER_CONFIDENCE: f64 = 0.3;

/// Keypoints emitted as coordinates. The left shoulder is left out: after
/// centering on the shoulder midpoint it is exactly the negated right
/// shoulder.
pub const FEATURE_KEYPOINTS: [KeypointName; 10] = [
    KeypointName::Nose,
    KeypointName::LeftEye,
    KeypointName::RightEye,
    KeypointName::RightShoulder,
    KeypointName::LeftElbow,
    KeypointName::RightElbow,
    KeypointName::LeftWrist,
    KeypointName::RightWrist,
    KeypointName::LeftHip,
    KeypointName::RightHip,
];

/// Why a frame could not be featurized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unusable {
    LowShoulderConfidence,
    DegenerateShoulders,
}

fn elbow_cosine(frame: &PoseFrame, shoulder: KeypointName, elbow: KeypointName, wrist: KeypointName) -> f64 {
    let (s, e, w) = (frame.get(shoulder), frame.get(elbow), frame.get(wrist));
    let (ax, ay) = (s.x - e.x, s.y - e.y);
    let (bx, by) = (w.x - e.x, w.y - e.y);
    let norm = (ax * ax + ay * ay).sqrt() * (bx * bx + by * by).sqrt();
    if norm > 0.0 {
        ((ax * bx + ay * by) / norm).clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

/// Pose-invariant features: keypoints relative to the shoulder midpoint in
/// units of shoulder width, followed by the left and right elbow-angle
/// cosines.
pub fn featurize(frame: &PoseFrame) -> Result<[f64; FEATURE_DIM], Unusable> {
    let l = frame.get(KeypointName::LeftShoulder);
    let r = frame.get(KeypointName::RightShoulder);
    if !(l.conf >= MIN_SHOULDER_CONFIDENCE && r.conf >= MIN_SHOULDER_CONFIDENCE) {
        return Err(Unusable::LowShoulderConfidence);
    }
    let width = ((l.x - r.x).powi(2) + (l.y - r.y).powi(2)).sqrt();
    if !(width > 1e-6) {
        return Err(Unusable::DegenerateShoulders);
    }
    let (cx, cy) = ((l.x + r.x) / 2.0, (l.y + r.y) / 2.0);
    let mut f = [0.0; FEATURE_DIM];
    for (i, &name) in FEATURE_KEYPOINTS.iter().enumerate() {
        let k = frame.get(name);
        f[2 * i] = (k.x - cx) / width;
        f[2 * i + 1] = (k.y - cy) / width;
    }
    f[20] = elbow_cosine(frame, KeypointName::LeftShoulder, KeypointName::LeftElbow, KeypointName::LeftWrist);
    f[21] = elbow_cosine(frame, KeypointName::RightShoulder, KeypointName::RightElbow, KeypointName::RightWrist);
    Ok(f)
}
