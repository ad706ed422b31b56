//! Touchless interface engine: pose keypoints → features → gesture class →
//! smoothed interface events and sonification parameters.

mod classifier;
mod features;
mod machine;
mod pose;
mod synth;

use std::fmt;
use std::str::FromStr;

pub use classifier::{
    classify, decode_model, encode_model, evaluate, gradient, loss, read_model, train_classifier,
    train_on_features, write_model, ClassifierModel, TrainParams, TrainReport, MODEL_MAGIC,
};
pub use features::{featurize, Unusable, FEATURE_DIM, FEATURE_KEYPOINTS, FEATURE_SPEC_VERSION, MIN_SHOULDER_CONFIDENCE};
pub use machine::{
    decode_trace, encode_event, encode_trace, parse_event, run_stream, EventKind, GestureEngine, Hand,
    InterfaceEvent, MachineConfig, MachineState, Mode, SonificationParams, StepOutput,
};
pub use pose::{
    encode_frame, encode_pose_stream, parse_frame_line, parse_pose_stream, Keypoint, KeypointName, LabeledFrame,
    PoseFrame, KEYPOINT_COUNT,
};
pub use synth::{canonical_frame, generate_synthetic_corpus, split_corpus, SyntheticConfig};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GestureClass {
    Neutral,
    ZoomIn,
    ZoomOut,
    ScrollDown,
    ScrollUp,
    AdvanceRight,
    AdvanceLeft,
    Track,
    Select,
    SwitchHands,
    Refresh,
}

impl GestureClass {
    pub const COUNT: usize = 11;

    pub const ALL: [GestureClass; Self::COUNT] = [
        GestureClass::Neutral,
        GestureClass::ZoomIn,
        GestureClass::ZoomOut,
        GestureClass::ScrollDown,
        GestureClass::ScrollUp,
        GestureClass::AdvanceRight,
        GestureClass::AdvanceLeft,
        GestureClass::Track,
        GestureClass::Select,
        GestureClass::SwitchHands,
        GestureClass::Refresh,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            GestureClass::Neutral => "Neutral",
            GestureClass::ZoomIn => "ZoomIn",
            GestureClass::ZoomOut => "ZoomOut",
            GestureClass::ScrollDown => "ScrollDown",
            GestureClass::ScrollUp => "ScrollUp",
            GestureClass::AdvanceRight => "AdvanceRight",
            GestureClass::AdvanceLeft => "AdvanceLeft",
            GestureClass::Track => "Track",
            GestureClass::Select => "Select",
            GestureClass::SwitchHands => "SwitchHands",
            GestureClass::Refresh => "Refresh",
        }
    }

    /// Classes that fire a single rate-limited event.
    pub fn is_discrete(self) -> bool {
        !matches!(self, GestureClass::Neutral | GestureClass::Track | GestureClass::Select)
    }
}

impl fmt::Display for GestureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GestureClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        GestureClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::parse(format!("unknown gesture {s:?}")))
    }
}
