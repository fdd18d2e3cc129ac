//! Mode state machine and per-leaf gesture assignment.
//!
//! ```text
//!   Idle <-> Solo <-> Multi        (and Idle <-> Multi directly)
//!                      |
//!                      +-- overlay: Interrupt(remaining) | Reward(elapsed)
//! ```
//!
//! The base mode follows the number of active bikers, debounced. Overlays
//! only live in `Multi` and are started by edges of the sync status.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{GestureKind, GestureParams, Grammar};
use crate::sync::{SyncState, SyncStatus, DWELL_EPS};

pub const LEAF_COUNT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    Idle,
    Solo,
    Multi,
}

impl Mode {
    pub fn for_active(active_bikers: usize) -> Self {
        match active_bikers {
            0 => Mode::Idle,
            1 => Mode::Solo,
            _ => Mode::Multi,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Idle => "Idle",
            Mode::Solo => "Solo",
            Mode::Multi => "Multi",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Overlay {
    Interrupt { remaining_s: f64 },
    Reward { elapsed_s: f64 },
}

impl Overlay {
    pub fn as_str(&self) -> &'static str {
        match self {
            Overlay::Interrupt { .. } => "Interrupt",
            Overlay::Reward { .. } => "Reward",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid scheduler config: {0}")]
pub struct SchedulerConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    /// How long the target mode must differ from the current one before switching.
    pub mode_debounce_s: f64,
    pub interrupt_s: f64,
    pub reward_s: f64,
    /// Cadence at or above which a biker counts as active.
    pub active_min_rpm: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            mode_debounce_s: 2.0,
            interrupt_s: 4.0,
            reward_s: 5.0,
            active_min_rpm: 20.0,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), SchedulerConfigError> {
        let checks = [
            ("mode_debounce_s", self.mode_debounce_s >= 0.0),
            ("interrupt_s", self.interrupt_s > 0.0),
            ("reward_s", self.reward_s > 0.0),
            ("active_min_rpm", self.active_min_rpm >= 0.0),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(SchedulerConfigError(format!("{name} out of range"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineMode {
    pub mode: Mode,
    pub overlay: Option<Overlay>,
    /// Time the target mode has differed from `mode`.
    pub transition_dwell_s: f64,
    /// Sync status seen on the previous step, for edge detection.
    pub last_sync: SyncStatus,
}

impl Default for EngineMode {
    fn default() -> Self {
        Self {
            mode: Mode::Idle,
            overlay: None,
            transition_dwell_s: 0.0,
            last_sync: SyncStatus::Indeterminate,
        }
    }
}

impl EngineMode {
    pub fn overlay_name(&self) -> Option<&'static str> {
        self.overlay.as_ref().map(Overlay::as_str)
    }
}

pub fn step_mode(
    cfg: &SchedulerConfig,
    prev: EngineMode,
    active_bikers: usize,
    sync: &SyncState,
    dt_s: f64,
) -> EngineMode {
    let target = Mode::for_active(active_bikers);
    let mut next = prev;

    if target == prev.mode {
        next.transition_dwell_s = 0.0;
    } else {
        next.transition_dwell_s = prev.transition_dwell_s + dt_s;
        if next.transition_dwell_s + DWELL_EPS >= cfg.mode_debounce_s {
            next.mode = target;
            next.transition_dwell_s = 0.0;
        }
    }

    if next.mode != Mode::Multi || active_bikers < 2 {
        // Social gestures need two bikers actually pedalling.
        next.overlay = None;
    } else {
        next.overlay = match prev.overlay {
            Some(Overlay::Interrupt { remaining_s }) => {
                let left = remaining_s - dt_s;
                (left > DWELL_EPS).then_some(Overlay::Interrupt { remaining_s: left })
            }
            Some(Overlay::Reward { elapsed_s }) => {
                let e = elapsed_s + dt_s;
                (e + DWELL_EPS < cfg.reward_s).then_some(Overlay::Reward { elapsed_s: e })
            }
            None => None,
        };
        if sync.status != prev.last_sync {
            match sync.status {
                SyncStatus::OutOfSync => {
                    next.overlay = Some(Overlay::Interrupt {
                        remaining_s: cfg.interrupt_s,
                    });
                }
                SyncStatus::InSync => {
                    // A reward never cuts an interrupt short.
                    if !matches!(next.overlay, Some(Overlay::Interrupt { .. })) {
                        next.overlay = Some(Overlay::Reward { elapsed_s: 0.0 });
                    }
                }
                SyncStatus::Indeterminate => {}
            }
        }
    }
    next.last_sync = sync.status;
    next
}

/// Cadence and effort of one active biker, as seen by the scheduler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveBiker {
    pub rpm: f64,
    pub effort_frac: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafSlot {
    pub kind: GestureKind,
    pub params: GestureParams,
    /// Time since the current cycle started.
    pub phase_s: f64,
    /// Set when the last `advance` wrapped into a new cycle.
    pub cycle_wrapped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafAssignment {
    pub leaves: [LeafSlot; LEAF_COUNT],
}

impl LeafAssignment {
    /// All leaves at rest; the next assignment starts fresh cycles.
    pub fn at_rest() -> Self {
        let slot = LeafSlot {
            kind: GestureKind::Motivational,
            params: GestureParams::rest(1.0),
            phase_s: 0.0,
            cycle_wrapped: false,
        };
        Self {
            leaves: [slot; LEAF_COUNT],
        }
    }

    /// Move every leaf's phase forward, wrapping at the end of each cycle.
    pub fn advance(&mut self, dt_s: f64) {
        for slot in &mut self.leaves {
            slot.phase_s += dt_s;
            let cycle = slot.params.cycle_length_s();
            slot.cycle_wrapped = slot.phase_s + DWELL_EPS >= cycle;
            if slot.cycle_wrapped {
                slot.phase_s = (slot.phase_s - cycle).max(0.0);
                if slot.phase_s + DWELL_EPS >= cycle {
                    slot.phase_s %= cycle;
                }
            }
        }
    }

    pub fn kinds(&self) -> [GestureKind; LEAF_COUNT] {
        self.leaves.map(|s| s.kind)
    }
}

/// Pick the gesture each leaf plays this tick.
///
/// `prev` carries phases forward: a leaf's phase restarts only when its
/// gesture kind changes. Recruitment recipes are redrawn per leaf at the
/// start of each cycle.
pub fn assign_gestures<R: Rng + ?Sized>(
    grammar: &Grammar,
    mode: &EngineMode,
    active: &[ActiveBiker],
    prev: &LeafAssignment,
    rng: &mut R,
) -> LeafAssignment {
    let mut next = *prev;
    if mode.mode == Mode::Idle {
        for slot in &mut next.leaves {
            if slot.kind != GestureKind::Recruitment {
                slot.kind = GestureKind::Recruitment;
                slot.phase_s = 0.0;
                slot.params = grammar.recruitment_params(rng);
            } else if slot.cycle_wrapped {
                slot.params = grammar.recruitment_params(rng);
            }
        }
        return next;
    }

    let (kind, params) = shared_gesture(grammar, mode, active);
    for slot in &mut next.leaves {
        if slot.kind != kind {
            slot.kind = kind;
            slot.phase_s = 0.0;
        }
        slot.params = params;
    }
    next
}

fn shared_gesture(
    grammar: &Grammar,
    mode: &EngineMode,
    active: &[ActiveBiker],
) -> (GestureKind, GestureParams) {
    let rest = (
        GestureKind::Motivational,
        GestureParams::rest(grammar.config.motivational_period_s[1]),
    );
    if mode.mode == Mode::Multi && active.len() >= 2 {
        match mode.overlay {
            Some(Overlay::Interrupt { .. }) => {
                return (GestureKind::SocialInterrupt, grammar.social_interrupt_params());
            }
            Some(Overlay::Reward { elapsed_s }) => {
                return (GestureKind::SocialReward, grammar.social_reward_params(elapsed_s));
            }
            None => {}
        }
    }
    if active.is_empty() {
        return rest;
    }
    let n = active.len() as f64;
    let rpm = active.iter().map(|b| b.rpm).sum::<f64>() / n;
    let effort = active.iter().map(|b| b.effort_frac).sum::<f64>() / n;
    match grammar.motivational_params(rpm, effort) {
        Ok(p) => (GestureKind::Motivational, p),
        Err(_) => rest,
    }
}
