//! Motion-gesture grammar.
//!
//! A gesture is described by three kinetic variables: how far the leaf
//! travels (`amplitude_frac`), how long one rise-and-return cycle takes
//! (`cycle_period_s`) and how long the leaf rests between cycles
//! (`interval_s`). Each gesture family has a recipe generator here, and
//! [`target_waveform`] turns a recipe plus a cycle phase into a target
//! deflection.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("cadence must be finite and non-negative, got {0}")]
    InvalidCadence(f64),
    #[error("amplitude_frac {0} outside [0, 1]")]
    Amplitude(f64),
    #[error("cycle_period_s must be > 0, got {0}")]
    Period(f64),
    #[error("interval_s must be >= 0, got {0}")]
    Interval(f64),
    #[error("invalid period ramp: {0}")]
    Ramp(String),
    #[error("invalid grammar config: {0}")]
    Config(String),
}

/// Linear change of the cycle period over time ("increasing velocity").
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodRamp {
    pub start_period_s: f64,
    pub end_period_s: f64,
    pub ramp_duration_s: f64,
}

impl PeriodRamp {
    pub fn period_at(&self, elapsed_s: f64) -> f64 {
        let progress = elapsed_s.clamp(0.0, self.ramp_duration_s) / self.ramp_duration_s;
        self.start_period_s + (self.end_period_s - self.start_period_s) * progress
    }

    fn validate(&self) -> Result<(), GrammarError> {
        let ok = self.start_period_s > 0.0
            && self.end_period_s > 0.0
            && self.ramp_duration_s > 0.0
            && self.start_period_s.is_finite()
            && self.end_period_s.is_finite()
            && self.ramp_duration_s.is_finite();
        if ok {
            Ok(())
        } else {
            Err(GrammarError::Ramp(format!("{self:?}")))
        }
    }
}

/// One actuation recipe: amplitude, cycle duration and pause.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GestureParams {
    pub amplitude_frac: f64,
    /// Duration of one full rise-and-return cycle. Small period = high velocity.
    pub cycle_period_s: f64,
    pub interval_s: f64,
    pub period_ramp: Option<PeriodRamp>,
}

/// Interval below which a gesture counts as smooth.
pub const SMOOTH_EPSILON_S: f64 = 0.05;

impl GestureParams {
    pub const fn rest(cycle_period_s: f64) -> Self {
        Self {
            amplitude_frac: 0.0,
            cycle_period_s,
            interval_s: 0.0,
            period_ramp: None,
        }
    }

    pub fn validate(&self) -> Result<(), GrammarError> {
        if !(0.0..=1.0).contains(&self.amplitude_frac) {
            return Err(GrammarError::Amplitude(self.amplitude_frac));
        }
        if !(self.cycle_period_s > 0.0 && self.cycle_period_s.is_finite()) {
            return Err(GrammarError::Period(self.cycle_period_s));
        }
        if !(self.interval_s >= 0.0 && self.interval_s.is_finite()) {
            return Err(GrammarError::Interval(self.interval_s));
        }
        if let Some(ramp) = &self.period_ramp {
            ramp.validate()?;
        }
        Ok(())
    }

    pub fn is_smooth(&self) -> bool {
        self.interval_s < SMOOTH_EPSILON_S
    }

    /// Length of one cycle including the trailing pause.
    pub fn cycle_length_s(&self) -> f64 {
        self.cycle_period_s + self.interval_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GestureKind {
    Recruitment,
    Motivational,
    SocialInterrupt,
    SocialReward,
}

impl GestureKind {
    pub const ALL: [GestureKind; 4] = [
        GestureKind::Recruitment,
        GestureKind::Motivational,
        GestureKind::SocialInterrupt,
        GestureKind::SocialReward,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            GestureKind::Recruitment => "Recruitment",
            GestureKind::Motivational => "Motivational",
            GestureKind::SocialInterrupt => "SocialInterrupt",
            GestureKind::SocialReward => "SocialReward",
        }
    }

    pub fn is_social(&self) -> bool {
        matches!(self, GestureKind::SocialInterrupt | GestureKind::SocialReward)
    }
}

impl fmt::Display for GestureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tunable numbers behind each recipe. Defaults are the shipped recipes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrammarConfig {
    pub recruitment_amplitude: [f64; 2],
    pub recruitment_period_s: [f64; 2],

    pub motivational_period_s: [f64; 2],
    pub motivational_min_amplitude: f64,
    pub motivational_min_rpm: f64,

    pub interrupt_amplitude: f64,
    pub interrupt_period_s: f64,
    pub interrupt_interval_s: f64,

    pub reward_amplitude: f64,
    pub reward_ramp: PeriodRamp,
}

impl Default for GrammarConfig {
    fn default() -> Self {
        Self {
            recruitment_amplitude: [0.7, 1.0],
            recruitment_period_s: [0.5, 1.0],
            motivational_period_s: [0.4, 4.0],
            motivational_min_amplitude: 0.1,
            motivational_min_rpm: 20.0,
            interrupt_amplitude: 1.0,
            interrupt_period_s: 0.6,
            interrupt_interval_s: 2.0,
            reward_amplitude: 0.2,
            reward_ramp: PeriodRamp {
                start_period_s: 1.2,
                end_period_s: 0.4,
                ramp_duration_s: 5.0,
            },
        }
    }
}

impl GrammarConfig {
    pub fn validate(&self) -> Result<(), GrammarError> {
        let range_ok = |r: [f64; 2], lo: f64, hi: f64| r[0] <= r[1] && r[0] >= lo && r[1] <= hi;
        if !range_ok(self.recruitment_amplitude, 0.0, 1.0) {
            return Err(GrammarError::Config("recruitment_amplitude".into()));
        }
        if !range_ok(self.recruitment_period_s, f64::MIN_POSITIVE, f64::MAX) {
            return Err(GrammarError::Config("recruitment_period_s".into()));
        }
        if !range_ok(self.motivational_period_s, f64::MIN_POSITIVE, f64::MAX) {
            return Err(GrammarError::Config("motivational_period_s".into()));
        }
        if !(0.0..=1.0).contains(&self.motivational_min_amplitude) {
            return Err(GrammarError::Config("motivational_min_amplitude".into()));
        }
        if !(self.motivational_min_rpm >= 0.0) {
            return Err(GrammarError::Config("motivational_min_rpm".into()));
        }
        GestureParams {
            amplitude_frac: self.interrupt_amplitude,
            cycle_period_s: self.interrupt_period_s,
            interval_s: self.interrupt_interval_s,
            period_ramp: None,
        }
        .validate()?;
        if !(0.0..=1.0).contains(&self.reward_amplitude) {
            return Err(GrammarError::Config("reward_amplitude".into()));
        }
        self.reward_ramp.validate()
    }
}

/// Recipe generators for each gesture family.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grammar {
    pub config: GrammarConfig,
}

impl Grammar {
    pub fn new(config: GrammarConfig) -> Result<Self, GrammarError> {
        config.validate()?;
        Ok(Self { config })
    }

    /// Erratic rising: big amplitude, short period, no pause. Drawn fresh
    /// for every leaf and every cycle.
    pub fn recruitment_params<R: Rng + ?Sized>(&self, rng: &mut R) -> GestureParams {
        let [a_lo, a_hi] = self.config.recruitment_amplitude;
        let [p_lo, p_hi] = self.config.recruitment_period_s;
        let amplitude_frac = if a_lo < a_hi { rng.gen_range(a_lo..=a_hi) } else { a_lo };
        let cycle_period_s = if p_lo < p_hi { rng.gen_range(p_lo..=p_hi) } else { p_lo };
        GestureParams {
            amplitude_frac,
            cycle_period_s,
            interval_s: 0.0,
            period_ramp: None,
        }
    }

    /// One leaf cycle per pedal revolution, amplitude following effort.
    pub fn motivational_params(
        &self,
        cadence_rpm: f64,
        effort_frac: f64,
    ) -> Result<GestureParams, GrammarError> {
        if !(cadence_rpm.is_finite() && cadence_rpm >= 0.0) {
            return Err(GrammarError::InvalidCadence(cadence_rpm));
        }
        let [p_lo, p_hi] = self.config.motivational_period_s;
        // 60 / 0 is +inf, which the clamp folds onto the slowest period.
        let cycle_period_s = (60.0 / cadence_rpm).clamp(p_lo, p_hi);
        if cadence_rpm < self.config.motivational_min_rpm {
            return Ok(GestureParams::rest(cycle_period_s));
        }
        let effort = if effort_frac.is_nan() { 0.0 } else { effort_frac };
        Ok(GestureParams {
            amplitude_frac: effort.clamp(self.config.motivational_min_amplitude, 1.0),
            cycle_period_s,
            interval_s: 0.0,
            period_ramp: None,
        })
    }

    /// Large, fast, with a long pause: the rhythm breaks when bikers drift apart.
    pub fn social_interrupt_params(&self) -> GestureParams {
        GestureParams {
            amplitude_frac: self.config.interrupt_amplitude,
            cycle_period_s: self.config.interrupt_period_s,
            interval_s: self.config.interrupt_interval_s,
            period_ramp: None,
        }
    }

    /// Small and accelerating: the leaves "ring up" while bikers stay in sync.
    pub fn social_reward_params(&self, elapsed_s: f64) -> GestureParams {
        let ramp = self.config.reward_ramp;
        GestureParams {
            amplitude_frac: self.config.reward_amplitude,
            cycle_period_s: ramp.period_at(elapsed_s.max(0.0)),
            interval_s: 0.0,
            period_ramp: Some(ramp),
        }
    }
}

/// Target deflection fraction at `phase_s` seconds into the gesture.
///
/// Half-sine rise and return over the cycle period, then zero for the pause.
pub fn target_waveform(params: &GestureParams, phase_s: f64) -> f64 {
    let period = params.cycle_period_s;
    let cycle = params.cycle_length_s();
    let tau = phase_s.max(0.0) % cycle;
    if tau <= period {
        (params.amplitude_frac * (PI * tau / period).sin()).clamp(0.0, params.amplitude_frac)
    } else {
        0.0
    }
}
