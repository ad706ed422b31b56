//! Pose frames and the pose-stream text format.
//!
//! One frame per line: `t<TAB>name:x,y,conf;name:x,y,conf;...`, optionally
//! followed by `<TAB>label`. Keypoints absent from a line get confidence 0.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gesture::GestureClass;

pub const KEYPOINT_COUNT: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeypointName {
    Nose,
    LeftEye,
    RightEye,
    LeftShoulder,
    RightShoulder,
    LeftElbow,
    RightElbow,
    LeftWrist,
    RightWrist,
    LeftHip,
    RightHip,
}

impl KeypointName {
    pub const ALL: [KeypointName; KEYPOINT_COUNT] = [
        KeypointName::Nose,
        KeypointName::LeftEye,
        KeypointName::RightEye,
        KeypointName::LeftShoulder,
        KeypointName::RightShoulder,
        KeypointName::LeftElbow,
        KeypointName::RightElbow,
        KeypointName::LeftWrist,
        KeypointName::RightWrist,
        KeypointName::LeftHip,
        KeypointName::RightHip,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KeypointName::Nose => "nose",
            KeypointName::LeftEye => "left_eye",
            KeypointName::RightEye => "right_eye",
            KeypointName::LeftShoulder => "left_shoulder",
            KeypointName::RightShoulder => "right_shoulder",
            KeypointName::LeftElbow => "left_elbow",
            KeypointName::RightElbow => "right_elbow",
            KeypointName::LeftWrist => "left_wrist",
            KeypointName::RightWrist => "right_wrist",
            KeypointName::LeftHip => "left_hip",
            KeypointName::RightHip => "right_hip",
        }
    }

    /// The same body part on the other side.
    pub fn mirrored(self) -> KeypointName {
        use KeypointName::*;
        match self {
            Nose => Nose,
            LeftEye => RightEye,
            RightEye => LeftEye,
            LeftShoulder => RightShoulder,
            RightShoulder => LeftShoulder,
            LeftElbow => RightElbow,
            RightElbow => LeftElbow,
            LeftWrist => RightWrist,
            RightWrist => LeftWrist,
            LeftHip => RightHip,
            RightHip => LeftHip,
        }
    }
}

impl FromStr for KeypointName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        KeypointName::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::parse(format!("unknown keypoint {s:?}")))
    }
}

/// Image-space position in `[0, 1]²` (y down) with a detection confidence.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub conf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub timestamp: f64,
    pub keypoints: [Keypoint; KEYPOINT_COUNT],
}

impl PoseFrame {
    pub fn new(timestamp: f64) -> Self {
        PoseFrame {
            timestamp,
            keypoints: [Keypoint::default(); KEYPOINT_COUNT],
        }
    }

    pub fn get(&self, name: KeypointName) -> Keypoint {
        self.keypoints[name as usize]
    }

    pub fn set(&mut self, name: KeypointName, x: f64, y: f64, conf: f64) {
        self.keypoints[name as usize] = Keypoint { x, y, conf };
    }

    /// Apply `p ↦ center + scale·(p − center) + shift` to every keypoint.
    pub fn transformed(&self, center: [f64; 2], scale: f64, shift: [f64; 2]) -> PoseFrame {
        let mut out = self.clone();
        for k in out.keypoints.iter_mut() {
            k.x = center[0] + scale * (k.x - center[0]) + shift[0];
            k.y = center[1] + scale * (k.y - center[1]) + shift[1];
        }
        out
    }
}

/// A frame with an optional ground-truth label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFrame {
    pub frame: PoseFrame,
    pub label: Option<GestureClass>,
}

fn parse_keypoint(item: &str, line: usize) -> Result<(KeypointName, Keypoint)> {
    let bad = || Error::format(format!("malformed keypoint {item:?}"), Some(line));
    let (name, values) = item.split_once(':').ok_or_else(bad)?;
    let name: KeypointName = name.trim().parse().map_err(|_| bad())?;
    let v: Vec<f64> = values.split(',').map(|s| s.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
    if v.len() != 3 || v.iter().any(|x| !x.is_finite()) {
        return Err(bad());
    }
    Ok((name, Keypoint { x: v[0], y: v[1], conf: v[2] }))
}

/// Parse one stream line (1-based `line` is used in errors).
pub fn parse_frame_line(text: &str, line: usize) -> Result<LabeledFrame> {
    let mut cols = text.split('\t');
    let t = cols.next().unwrap_or("");
    let timestamp: f64 = t
        .trim()
        .parse()
        .ok()
        .filter(|t: &f64| t.is_finite())
        .ok_or_else(|| Error::format(format!("bad timestamp {t:?}"), Some(line)))?;
    let mut frame = PoseFrame::new(timestamp);
    if let Some(points) = cols.next() {
        for item in points.split(';').filter(|s| !s.trim().is_empty()) {
            let (name, kp) = parse_keypoint(item, line)?;
            frame.keypoints[name as usize] = kp;
        }
    }
    let label = match cols.next() {
        Some(l) => Some(l.trim().parse().map_err(|_| Error::format(format!("unknown label {l:?}"), Some(line)))?),
        None => None,
    };
    if cols.next().is_some() {
        return Err(Error::format("too many columns", Some(line)));
    }
    Ok(LabeledFrame { frame, label })
}

/// Parse a whole stream. Blank lines and lines starting with `#` are skipped.
pub fn parse_pose_stream(text: &str) -> Result<Vec<LabeledFrame>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| parse_frame_line(l, i + 1))
        .collect()
}

pub fn encode_frame(frame: &PoseFrame, label: Option<GestureClass>) -> String {
    let mut s = format!("{:.6}\t", frame.timestamp);
    for (i, name) in KeypointName::ALL.iter().enumerate() {
        let k = frame.keypoints[i];
        if i > 0 {
            s.push(';');
        }
        let _ = write!(s, "{}:{:.6},{:.6},{:.3}", name.as_str(), k.x, k.y, k.conf);
    }
    if let Some(l) = label {
        let _ = write!(s, "\t{l}");
    }
    s
}

pub fn encode_pose_stream<'a>(frames: impl IntoIterator<Item = (&'a PoseFrame, Option<GestureClass>)>) -> String {
    frames.into_iter().map(|(f, l)| encode_frame(f, l) + "\n").collect()
}
