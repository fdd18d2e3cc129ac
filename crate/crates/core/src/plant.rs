//! Leaf dynamics and actuation.
//!
//! Each leaf is a single-degree-of-freedom damped rotational spring driven
//! by aerodynamic torque from its fans:
//!
//! ```text
//! I·θ'' = C·v² − k·θ − c·θ'
//! ```
//!
//! integrated with semi-implicit Euler at the engine tick. Airspeed comes
//! from the fan duty and the stepper angle that aims the fans at the leaf.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FANS_PER_LEAF: usize = 4;

/// Soft stops on deflection, as fractions of `theta_max`.
pub const STOP_LOW_FRAC: f64 = -0.05;
pub const STOP_HIGH_FRAC: f64 = 1.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("leaf {leaf} state became non-finite (theta={theta}, omega={omega}, v_eff={v_eff})")]
    NonFinite {
        leaf: usize,
        theta: f64,
        omega: f64,
        v_eff: f64,
    },
    #[error("invalid plant config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafParams {
    pub inertia: f64,
    pub stiffness: f64,
    pub damping: f64,
    /// Torque per squared airspeed; set by [`calibrate`].
    pub aero_gain: f64,
    pub theta_max_rad: f64,
    /// Multiplicative stiffness perturbation of this particular leaf.
    pub jitter_frac: f64,
}

impl LeafParams {
    pub fn effective_stiffness(&self) -> f64 {
        self.stiffness * (1.0 + self.jitter_frac)
    }

    pub fn natural_period_s(&self) -> f64 {
        2.0 * std::f64::consts::PI * (self.inertia / self.effective_stiffness()).sqrt()
    }

    /// Deflection the leaf settles at under constant airspeed.
    pub fn steady_state_theta(&self, v_eff: f64) -> f64 {
        self.aero_gain * v_eff * v_eff / self.effective_stiffness()
    }

    /// Kinetic plus spring energy.
    pub fn energy(&self, state: &LeafState) -> f64 {
        0.5 * self.inertia * state.omega_rad_s * state.omega_rad_s
            + 0.5 * self.effective_stiffness() * state.theta_rad * state.theta_rad
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub inertia: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub theta_max_rad: f64,
    /// Airspeed at the leaf with all fans at full duty, aimed straight on.
    pub v_max_m_s: f64,
    /// Half-width of the uniform per-leaf stiffness jitter.
    pub jitter_range: f64,
    pub stepper_slew_rad_s: f64,
    /// Pauses longer than this swing the fans away from the leaf.
    pub redirect_pause_s: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            inertia: 0.01,
            stiffness: 0.5,
            damping: 0.08,
            theta_max_rad: 1.0,
            v_max_m_s: 4.0,
            jitter_range: 0.1,
            stepper_slew_rad_s: 2.0 * std::f64::consts::PI,
            redirect_pause_s: 1.0,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self, dt_s: f64) -> Result<(), PlantError> {
        let positive = [
            ("inertia", self.inertia),
            ("stiffness", self.stiffness),
            ("damping", self.damping),
            ("theta_max_rad", self.theta_max_rad),
            ("v_max_m_s", self.v_max_m_s),
            ("stepper_slew_rad_s", self.stepper_slew_rad_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PlantError::Config(format!("{name} must be finite and > 0")));
            }
        }
        if !(0.0..=0.1).contains(&self.jitter_range) {
            return Err(PlantError::Config("jitter_range must lie in [0, 0.1]".into()));
        }
        if !(self.redirect_pause_s >= 0.0) {
            return Err(PlantError::Config("redirect_pause_s must be >= 0".into()));
        }
        let stiffest = self.stiffness * (1.0 + self.jitter_range);
        let period = 2.0 * std::f64::consts::PI * (self.inertia / stiffest).sqrt();
        if dt_s >= 0.5 * period {
            return Err(PlantError::Config(format!(
                "tick {dt_s} s is not below half the natural period {period:.4} s"
            )));
        }
        Ok(())
    }

    /// Leaf parameters with the given jitter, calibrated on the nominal leaf.
    pub fn leaf(&self, jitter_frac: f64) -> LeafParams {
        let mut p = LeafParams {
            inertia: self.inertia,
            stiffness: self.stiffness,
            damping: self.damping,
            aero_gain: 0.0,
            theta_max_rad: self.theta_max_rad,
            jitter_frac: 0.0,
        };
        p.aero_gain = calibrate(&p, self.v_max_m_s);
        p.jitter_frac = jitter_frac;
        p
    }

    /// Draw one leaf's jitter once at start-up.
    pub fn draw_leaf<R: Rng + ?Sized>(&self, rng: &mut R) -> LeafParams {
        let jitter = if self.jitter_range > 0.0 {
            rng.gen_range(-self.jitter_range..=self.jitter_range)
        } else {
            0.0
        };
        self.leaf(jitter)
    }
}

/// Aero gain that makes full duty settle at exactly `theta_max` on the
/// unjittered leaf.
pub fn calibrate(params: &LeafParams, v_max_m_s: f64) -> f64 {
    params.stiffness * params.theta_max_rad / (v_max_m_s * v_max_m_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LeafState {
    pub theta_rad: f64,
    pub omega_rad_s: f64,
    pub deflection_frac: f64,
}

impl LeafState {
    pub fn new(theta_rad: f64, omega_rad_s: f64, theta_max_rad: f64) -> Self {
        Self {
            theta_rad,
            omega_rad_s,
            deflection_frac: theta_rad / theta_max_rad,
        }
    }
}

pub fn effective_airspeed(v_max_m_s: f64, duty: f64, stepper_angle_rad: f64) -> f64 {
    v_max_m_s * duty.clamp(0.0, 1.0) * stepper_angle_rad.cos().max(0.0)
}

/// One semi-implicit Euler step, followed by the soft stops.
pub fn step_leaf(
    state: &LeafState,
    params: &LeafParams,
    v_eff: f64,
    dt_s: f64,
) -> Result<LeafState, PlantError> {
    let torque = params.aero_gain * v_eff * v_eff
        - params.effective_stiffness() * state.theta_rad
        - params.damping * state.omega_rad_s;
    let mut omega = state.omega_rad_s + torque / params.inertia * dt_s;
    let mut theta = state.theta_rad + omega * dt_s;

    let lo = STOP_LOW_FRAC * params.theta_max_rad;
    let hi = STOP_HIGH_FRAC * params.theta_max_rad;
    if theta > hi {
        theta = hi;
        omega = omega.min(0.0);
    } else if theta < lo {
        theta = lo;
        omega = omega.max(0.0);
    }
    if !(theta.is_finite() && omega.is_finite()) {
        return Err(PlantError::NonFinite {
            leaf: usize::MAX,
            theta,
            omega,
            v_eff,
        });
    }
    Ok(LeafState::new(theta, omega, params.theta_max_rad))
}

/// Per-leaf actuator setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafCommand {
    /// All four fans of a leaf run at the same duty.
    pub fan_duty: [f64; FANS_PER_LEAF],
    /// Where the stepper should point; 0 aims the fans at the leaf.
    pub stepper_angle_rad: f64,
}

impl LeafCommand {
    pub fn duty(&self) -> f64 {
        self.fan_duty[0]
    }

    pub fn scaled(&self, scale: f64) -> Self {
        Self {
            fan_duty: self.fan_duty.map(|d| d * scale),
            stepper_angle_rad: self.stepper_angle_rad,
        }
    }
}

/// Feed-forward command for a target deflection fraction.
///
/// Steady deflection grows with the square of airspeed, and airspeed is
/// linear in duty, so the duty is the square root of the target.
/// `redirect` swings the fans away from the leaf.
pub fn command_from_target(target_frac: f64, redirect: bool) -> LeafCommand {
    let duty = target_frac.clamp(0.0, 1.0).sqrt();
    LeafCommand {
        fan_duty: [duty; FANS_PER_LEAF],
        stepper_angle_rad: if redirect { FRAC_PI_2 } else { 0.0 },
    }
}

/// Stepper that rotates a leaf's fan bank at a bounded slew rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stepper {
    pub angle_rad: f64,
}

impl Stepper {
    /// Move toward `target`; returns whether the stepper moved this tick.
    pub fn slew_toward(&mut self, target_rad: f64, max_rate_rad_s: f64, dt_s: f64) -> bool {
        let target = target_rad.clamp(-FRAC_PI_2, FRAC_PI_2);
        let delta = target - self.angle_rad;
        if delta == 0.0 {
            return false;
        }
        let max_step = max_rate_rad_s * dt_s;
        self.angle_rad = if delta.abs() <= max_step {
            target
        } else {
            self.angle_rad + max_step.copysign(delta)
        };
        true
    }
}
