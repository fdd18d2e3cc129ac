//! Scenario files: a duration and a time-ordered list of biker events.
//!
//! ```toml
//! version = 1
//! duration_s = 20.0
//!
//! [[events]]
//! type = "join"
//! biker = 1
//! t = 0.0
//!
//! [[events]]
//! type = "cadence_profile"
//! biker = 1
//! segments = [{ from = 0.0, to = 10.0, rpm = 60.0 }]
//! ```
//!
//! Event types: `join`, `leave`, `pedal` (one crank pulse at `t`) and
//! `cadence_profile`, whose piecewise-constant segments expand to pulses
//! spaced exactly `60 / rpm` apart from each segment's start.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sync::BikerId;

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub struct ScenarioError {
    pub line: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("scenario error")?;
        if let Some(line) = self.line {
            write!(f, " at line {line}")?;
        }
        if let Some(field) = &self.field {
            write!(f, ", field `{field}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl ScenarioError {
    fn new(line: Option<usize>, field: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            line,
            field: field.map(str::to_owned),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub from: f64,
    pub to: f64,
    pub rpm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioEvent {
    Join { biker: BikerId, t: f64 },
    Leave { biker: BikerId, t: f64 },
    Pedal { biker: BikerId, t: f64 },
    CadenceProfile { biker: BikerId, segments: Vec<Segment> },
}

impl ScenarioEvent {
    pub fn biker(&self) -> BikerId {
        match self {
            ScenarioEvent::Join { biker, .. }
            | ScenarioEvent::Leave { biker, .. }
            | ScenarioEvent::Pedal { biker, .. }
            | ScenarioEvent::CadenceProfile { biker, .. } => *biker,
        }
    }

    /// When the event starts; a profile starts at its first segment.
    pub fn start_time(&self) -> f64 {
        match self {
            ScenarioEvent::Join { t, .. }
            | ScenarioEvent::Leave { t, .. }
            | ScenarioEvent::Pedal { t, .. } => *t,
            ScenarioEvent::CadenceProfile { segments, .. } => {
                segments.first().map_or(0.0, |s| s.from)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Join,
    Leave,
    Pedal,
}

/// One timestamped engine input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Input {
    pub t: f64,
    pub biker: BikerId,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_version")]
    pub version: u32,
    pub duration_s: f64,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
}

fn default_version() -> u32 {
    SCENARIO_VERSION
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default = "default_version")]
    version: u32,
    duration_s: toml::Spanned<f64>,
    #[serde(default)]
    events: Vec<toml::Spanned<ScenarioEvent>>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

impl Scenario {
    pub fn new(duration_s: f64) -> Self {
        Self {
            version: SCENARIO_VERSION,
            duration_s,
            events: Vec::new(),
        }
    }

    pub fn join(mut self, biker: u32, t: f64) -> Self {
        self.events.push(ScenarioEvent::Join {
            biker: BikerId(biker),
            t,
        });
        self
    }

    pub fn leave(mut self, biker: u32, t: f64) -> Self {
        self.events.push(ScenarioEvent::Leave {
            biker: BikerId(biker),
            t,
        });
        self
    }

    pub fn pedal(mut self, biker: u32, t: f64) -> Self {
        self.events.push(ScenarioEvent::Pedal {
            biker: BikerId(biker),
            t,
        });
        self
    }

    /// `segments` are `(from, to, rpm)` triples.
    pub fn profile(mut self, biker: u32, segments: &[(f64, f64, f64)]) -> Self {
        self.events.push(ScenarioEvent::CadenceProfile {
            biker: BikerId(biker),
            segments: segments
                .iter()
                .map(|&(from, to, rpm)| Segment { from, to, rpm })
                .collect(),
        });
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| {
            ScenarioError::new(e.span().map(|s| line_of(text, s.start)), None, e.message())
        })?;
        let scenario = Scenario {
            version: raw.version,
            duration_s: *raw.duration_s.get_ref(),
            events: raw.events.iter().map(|e| e.get_ref().clone()).collect(),
        };
        let lines: Vec<usize> = raw.events.iter().map(|e| line_of(text, e.span().start)).collect();
        if !(scenario.duration_s > 0.0 && scenario.duration_s.is_finite()) {
            return Err(ScenarioError::new(
                Some(line_of(text, raw.duration_s.span().start)),
                Some("duration_s"),
                "must be a positive number of seconds",
            ));
        }
        scenario.expand_with_lines(Some(&lines))?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            ScenarioError::new(None, None, format!("reading {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario is always representable as TOML")
    }

    /// Validate and flatten into time-ordered engine inputs.
    pub fn expand(&self) -> Result<Vec<Input>, ScenarioError> {
        self.expand_with_lines(None)
    }

    fn expand_with_lines(&self, lines: Option<&[usize]>) -> Result<Vec<Input>, ScenarioError> {
        let line = |i: usize| lines.and_then(|l| l.get(i).copied());
        let err = |i: usize, field: &str, msg: String| ScenarioError::new(line(i), Some(field), msg);

        if self.version != SCENARIO_VERSION {
            return Err(ScenarioError::new(
                None,
                Some("version"),
                format!("unsupported version {}, expected {SCENARIO_VERSION}", self.version),
            ));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(ScenarioError::new(None, Some("duration_s"), "must be > 0"));
        }

        // (time, event index, action)
        let mut timed: Vec<(f64, usize, Input)> = Vec::new();
        let mut last_start = f64::NEG_INFINITY;
        for (i, ev) in self.events.iter().enumerate() {
            let biker = ev.biker();
            let check_t = |t: f64, field: &str| -> Result<(), ScenarioError> {
                if !(t.is_finite() && t >= 0.0 && t <= self.duration_s) {
                    return Err(err(i, field, format!("time {t} outside [0, {}]", self.duration_s)));
                }
                Ok(())
            };
            match ev {
                ScenarioEvent::Join { t, .. } | ScenarioEvent::Leave { t, .. } | ScenarioEvent::Pedal { t, .. } => {
                    check_t(*t, "t")?;
                    let action = match ev {
                        ScenarioEvent::Join { .. } => Action::Join,
                        ScenarioEvent::Leave { .. } => Action::Leave,
                        _ => Action::Pedal,
                    };
                    timed.push((*t, i, Input { t: *t, biker, action }));
                }
                ScenarioEvent::CadenceProfile { segments, .. } => {
                    if segments.is_empty() {
                        return Err(err(i, "segments", "profile needs at least one segment".into()));
                    }
                    let mut prev_to = f64::NEG_INFINITY;
                    for seg in segments {
                        check_t(seg.from, "segments.from")?;
                        check_t(seg.to, "segments.to")?;
                        if !(seg.from < seg.to) {
                            return Err(err(i, "segments", format!("segment {} -> {} is empty", seg.from, seg.to)));
                        }
                        if seg.from < prev_to {
                            return Err(err(i, "segments", "segments overlap or are out of order".into()));
                        }
                        if !(seg.rpm.is_finite() && seg.rpm >= 0.0) {
                            return Err(err(i, "segments.rpm", format!("rpm {} must be >= 0", seg.rpm)));
                        }
                        prev_to = seg.to;
                        if seg.rpm == 0.0 {
                            continue;
                        }
                        let spacing = 60.0 / seg.rpm;
                        let mut j = 0u64;
                        loop {
                            let t = seg.from + j as f64 * spacing;
                            if t >= seg.to {
                                break;
                            }
                            timed.push((t, i, Input { t, biker, action: Action::Pedal }));
                            j += 1;
                        }
                    }
                }
            }
            let start = ev.start_time();
            if start < last_start {
                return Err(err(i, "t", format!("event at {start} s listed after an event at {last_start} s")));
            }
            last_start = start;
        }
        // Stable: equal times keep file order.
        timed.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut joined: BTreeSet<BikerId> = BTreeSet::new();
        let mut last_pulse: BTreeMap<BikerId, f64> = BTreeMap::new();
        for (t, i, input) in &timed {
            let b = input.biker;
            match input.action {
                Action::Join => {
                    if !joined.insert(b) {
                        return Err(err(*i, "biker", format!("biker {b} joined twice")));
                    }
                }
                Action::Leave => {
                    if !joined.remove(&b) {
                        return Err(err(*i, "biker", format!("biker {b} leaves without having joined")));
                    }
                }
                Action::Pedal => {
                    if !joined.contains(&b) {
                        return Err(err(*i, "biker", format!("biker {b} pedals at {t} s before joining")));
                    }
                    if let Some(prev) = last_pulse.insert(b, *t) {
                        if *t <= prev {
                            return Err(err(*i, "t", format!("biker {b} pulse at {t} s does not follow {prev} s")));
                        }
                    }
                }
            }
        }
        Ok(timed.into_iter().map(|(_, _, input)| input).collect())
    }
}
