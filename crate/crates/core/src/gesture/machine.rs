//! Hysteresis state machine turning per-frame classifications into
//! interface events.
//!
//! Each frame's label joins a short buffer and the buffer's majority becomes
//! the effective label. Discrete gestures fire when they become effective
//! and then at most once per rate-limit window while held. Track moves a
//! smoothed cursor, Select while tracking starts a drag, and any label other
//! than Select or SwitchHands ends it. SwitchHands is ignored during a drag.

use std::collections::VecDeque;
use std::fmt;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::gesture::classifier::{classify, ClassifierModel};
use crate::gesture::features::{featurize, MIN_SHOULDER_CONFIDENCE};
use crate::gesture::pose::{KeypointName, PoseFrame};
use crate::gesture::GestureClass;

#[derive(Debug, Clone, PartialEq)]
pub struct MachineConfig {
    pub buffer_len: usize,
    /// Seconds between repeated firings of a held discrete gesture.
    pub rate_limit: f64,
    /// Exponential smoothing factor applied to the cursor each frame.
    pub cursor_alpha: f64,
    /// Image-space box `[x0, y0, x1, y1]` mapped onto the unit screen.
    pub calibration: [f64; 4],
    /// Wrist acceleration (normalized units/s²) giving full gain.
    pub accel_full_scale: f64,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            buffer_len: 5,
            rate_limit: 0.7,
            cursor_alpha: 0.4,
            calibration: [0.1, 0.1, 0.9, 0.9],
            accel_full_scale: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    fn wrist(self) -> KeypointName {
        match self {
            Hand::Left => KeypointName::LeftWrist,
            Hand::Right => KeypointName::RightWrist,
        }
    }

    fn other(self) -> Hand {
        match self {
            Hand::Left => Hand::Right,
            Hand::Right => Hand::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Idle,
    Tracking,
    Dragging,
}

impl Mode {
    pub fn ordinal(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    ZoomIn,
    ZoomOut,
    ScrollUp,
    ScrollDown,
    AdvanceLeft,
    AdvanceRight,
    CursorMove { x: f64, y: f64 },
    SelectDown,
    SelectUp,
    SwitchHands,
    Refresh,
}

impl EventKind {
    fn for_gesture(g: GestureClass) -> Option<EventKind> {
        Some(match g {
            GestureClass::ZoomIn => EventKind::ZoomIn,
            GestureClass::ZoomOut => EventKind::ZoomOut,
            GestureClass::ScrollUp => EventKind::ScrollUp,
            GestureClass::ScrollDown => EventKind::ScrollDown,
            GestureClass::AdvanceLeft => EventKind::AdvanceLeft,
            GestureClass::AdvanceRight => EventKind::AdvanceRight,
            GestureClass::SwitchHands => EventKind::SwitchHands,
            GestureClass::Refresh => EventKind::Refresh,
            _ => return None,
        })
    }

    /// Magnitude carried by each firing.
    fn default_magnitude(self) -> f64 {
        match self {
            EventKind::ZoomIn
            | EventKind::ZoomOut
            | EventKind::ScrollUp
            | EventKind::ScrollDown
            | EventKind::AdvanceLeft
            | EventKind::AdvanceRight => 1.0,
            _ => 0.0,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::CursorMove { x, y } => write!(f, "CursorMove({x:.6},{y:.6})"),
            other => write!(f, "{other:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceEvent {
    pub kind: EventKind,
    pub magnitude: f64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SonificationParams {
    pub gain: f64,
    pub pitch: f64,
    pub texture_index: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineState {
    pub dominant_hand: Hand,
    pub mode: Mode,
    pub buffer: VecDeque<GestureClass>,
    pub effective: GestureClass,
    /// Unit-square screen position; `None` while idle.
    pub cursor: Option<[f64; 2]>,
    /// Last firing time per discrete gesture, indexed by class.
    pub last_fired: [Option<f64>; GestureClass::COUNT],
    pub last_timestamp: Option<f64>,
    /// Recent dominant-wrist samples `(t, x, y)`, newest last.
    pub wrist_history: VecDeque<(f64, f64, f64)>,
}

impl Default for MachineState {
    fn default() -> Self {
        MachineState {
            dominant_hand: Hand::Right,
            mode: Mode::Idle,
            buffer: VecDeque::new(),
            effective: GestureClass::Neutral,
            cursor: None,
            last_fired: [None; GestureClass::COUNT],
            last_timestamp: None,
            wrist_history: VecDeque::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// This frame's own classification (Neutral for unusable frames).
    pub label: GestureClass,
    pub effective: GestureClass,
    pub events: Vec<InterfaceEvent>,
    pub sonify: SonificationParams,
}

fn clamp01(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Most frequent label; ties keep `previous`.
fn majority(buffer: &VecDeque<GestureClass>, previous: GestureClass) -> GestureClass {
    let mut counts = [0usize; GestureClass::COUNT];
    buffer.iter().for_each(|g| counts[g.index()] += 1);
    let top = counts.iter().copied().max().unwrap_or(0);
    let mut leaders = GestureClass::ALL.iter().filter(|g| counts[g.index()] == top);
    match (leaders.next(), leaders.next()) {
        (Some(&only), None) if top > 0 => only,
        _ => previous,
    }
}

pub struct GestureEngine<'m> {
    pub model: &'m ClassifierModel,
    pub config: MachineConfig,
}

impl<'m> GestureEngine<'m> {
    pub fn new(model: &'m ClassifierModel, config: MachineConfig) -> Self {
        GestureEngine { model, config }
    }

    fn screen_point(&self, x: f64, y: f64) -> [f64; 2] {
        let [x0, y0, x1, y1] = self.config.calibration;
        [clamp01((x - x0) / (x1 - x0)), clamp01((y - y0) / (y1 - y0))]
    }

    /// Advance the machine by one frame.
    pub fn step(&self, state: &mut MachineState, frame: &PoseFrame) -> Result<StepOutput> {
        let t = frame.timestamp;
        if !t.is_finite() {
            return Err(Error::Stream(format!("non-finite timestamp {t}")));
        }
        if let Some(prev) = state.last_timestamp {
            if t <= prev {
                return Err(Error::Stream(format!("timestamp {t} does not follow {prev}")));
            }
        }
        state.last_timestamp = Some(t);

        let label = match featurize(frame) {
            Ok(f) => classify(self.model, &f)?.0,
            Err(_) => GestureClass::Neutral,
        };
        state.buffer.push_back(label);
        while state.buffer.len() > self.config.buffer_len.max(1) {
            state.buffer.pop_front();
        }
        let previous = state.effective;
        let effective = majority(&state.buffer, previous);
        state.effective = effective;

        let mut events = Vec::new();
        let mut emit = |kind: EventKind| {
            events.push(InterfaceEvent {
                kind,
                magnitude: kind.default_magnitude(),
                timestamp: t,
            })
        };

        if state.mode == Mode::Dragging && !matches!(effective, GestureClass::Select | GestureClass::SwitchHands) {
            emit(EventKind::SelectUp);
            state.mode = Mode::Tracking;
        }
        match effective {
            GestureClass::Neutral => {
                state.mode = Mode::Idle;
                state.cursor = None;
            }
            GestureClass::Track => {
                if state.mode == Mode::Idle {
                    state.mode = Mode::Tracking;
                }
            }
            GestureClass::Select => {
                if state.mode == Mode::Tracking {
                    emit(EventKind::SelectDown);
                    state.mode = Mode::Dragging;
                }
            }
            g => {
                let suppressed = g == GestureClass::SwitchHands && state.mode == Mode::Dragging;
                let due = g != previous
                    || state.last_fired[g.index()].is_none_or(|last| t - last >= self.config.rate_limit);
                if !suppressed && due {
                    emit(EventKind::for_gesture(g).expect("discrete gesture"));
                    state.last_fired[g.index()] = Some(t);
                    if g == GestureClass::SwitchHands {
                        state.dominant_hand = state.dominant_hand.other();
                        state.wrist_history.clear();
                    }
                }
            }
        }

        let wrist = frame.get(state.dominant_hand.wrist());
        if state.mode != Mode::Idle
            && matches!(effective, GestureClass::Track | GestureClass::Select)
            && wrist.conf >= MIN_SHOULDER_CONFIDENCE
        {
            let target = self.screen_point(wrist.x, wrist.y);
            let a = self.config.cursor_alpha;
            let next = match state.cursor {
                None => target,
                Some(c) => [c[0] + a * (target[0] - c[0]), c[1] + a * (target[1] - c[1])],
            };
            state.cursor = Some(next);
            emit(EventKind::CursorMove { x: next[0], y: next[1] });
        }
        if state.mode != Mode::Idle && state.cursor.is_none() {
            // Tracking began on a frame with no trustworthy wrist.
            state.cursor = Some([0.5, 0.5]);
        }

        state.wrist_history.push_back((t, wrist.x, wrist.y));
        while state.wrist_history.len() > 3 {
            state.wrist_history.pop_front();
        }
        let gain = if state.wrist_history.len() == 3 {
            let (t1, x1, y1) = state.wrist_history[0];
            let (t2, x2, y2) = state.wrist_history[1];
            let (t3, x3, y3) = state.wrist_history[2];
            let half_span = (t3 - t1) / 2.0;
            let ax = ((x3 - x2) / (t3 - t2) - (x2 - x1) / (t2 - t1)) / half_span;
            let ay = ((y3 - y2) / (t3 - t2) - (y2 - y1) / (t2 - t1)) / half_span;
            clamp01((ax * ax + ay * ay).sqrt() / self.config.accel_full_scale)
        } else {
            0.0
        };
        let sonify = SonificationParams {
            gain,
            pitch: 1.0 - clamp01(wrist.y),
            texture_index: state.mode.ordinal(),
        };
        Ok(StepOutput {
            label,
            effective,
            events,
            sonify,
        })
    }
}

/// Replay a whole stream from the initial state.
pub fn run_stream(model: &ClassifierModel, config: &MachineConfig, frames: &[PoseFrame]) -> Result<Vec<InterfaceEvent>> {
    let engine = GestureEngine::new(model, config.clone());
    let mut state = MachineState::default();
    let mut events = Vec::new();
    for frame in frames {
        events.extend(engine.step(&mut state, frame)?.events);
    }
    Ok(events)
}

/// `t<TAB>kind<TAB>magnitude`.
pub fn encode_event(e: &InterfaceEvent) -> String {
    format!("{:.6}\t{}\t{:.6}", e.timestamp, e.kind, e.magnitude)
}

pub fn encode_trace(events: &[InterfaceEvent]) -> String {
    let mut s = String::new();
    for e in events {
        let _ = writeln!(s, "{}", encode_event(e));
    }
    s
}

fn parse_kind(s: &str) -> Option<EventKind> {
    if let Some(args) = s.strip_prefix("CursorMove(").and_then(|r| r.strip_suffix(')')) {
        let (x, y) = args.split_once(',')?;
        return Some(EventKind::CursorMove {
            x: x.parse().ok()?,
            y: y.parse().ok()?,
        });
    }
    Some(match s {
        "ZoomIn" => EventKind::ZoomIn,
        "ZoomOut" => EventKind::ZoomOut,
        "ScrollUp" => EventKind::ScrollUp,
        "ScrollDown" => EventKind::ScrollDown,
        "AdvanceLeft" => EventKind::AdvanceLeft,
        "AdvanceRight" => EventKind::AdvanceRight,
        "SelectDown" => EventKind::SelectDown,
        "SelectUp" => EventKind::SelectUp,
        "SwitchHands" => EventKind::SwitchHands,
        "Refresh" => EventKind::Refresh,
        _ => return None,
    })
}

pub fn parse_event(line: &str) -> Result<InterfaceEvent> {
    let bad = || Error::parse(format!("malformed event line {line:?}"));
    let mut cols = line.split('\t');
    let (t, kind, mag) = (cols.next(), cols.next(), cols.next());
    if cols.next().is_some() {
        return Err(bad());
    }
    let timestamp: f64 = t.and_then(|t| t.parse().ok()).filter(|t: &f64| t.is_finite()).ok_or_else(bad)?;
    let kind = kind.and_then(parse_kind).ok_or_else(bad)?;
    let magnitude: f64 = mag.and_then(|m| m.parse().ok()).filter(|m: &f64| m.is_finite()).ok_or_else(bad)?;
    Ok(InterfaceEvent {
        kind,
        magnitude,
        timestamp,
    })
}

pub fn decode_trace(text: &str) -> Result<Vec<InterfaceEvent>> {
    text.lines().filter(|l| !l.is_empty()).map(parse_event).collect()
}
