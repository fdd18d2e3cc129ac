//! Human power supply, electrical demand and the energy reservoir.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{LeafCommand, FANS_PER_LEAF};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid power config: {0}")]
pub struct PowerConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    /// Draw of one fan at full duty.
    pub fan_power_w: f64,
    pub fans_per_leaf: usize,
    pub leaf_budget_w: f64,
    /// Draw of one stepper while it is slewing.
    pub stepper_power_w: f64,
    pub controller_overhead_w: f64,
    pub biker_coeff_w_per_rpm: f64,
    pub biker_cap_w: f64,
    pub reservoir_capacity_wh: f64,
    pub reservoir_initial_frac: f64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            fan_power_w: 1.68,
            fans_per_leaf: 4,
            leaf_budget_w: 9.0,
            stepper_power_w: 0.5,
            controller_overhead_w: 0.3,
            // 60 rpm maps to 50 W
            biker_coeff_w_per_rpm: 50.0 / 60.0,
            biker_cap_w: 60.0,
            reservoir_capacity_wh: 5.0,
            reservoir_initial_frac: 0.5,
        }
    }
}

impl PowerConfig {
    pub fn validate(&self) -> Result<(), PowerConfigError> {
        let non_negative = [
            ("fan_power_w", self.fan_power_w),
            ("stepper_power_w", self.stepper_power_w),
            ("controller_overhead_w", self.controller_overhead_w),
            ("biker_coeff_w_per_rpm", self.biker_coeff_w_per_rpm),
            ("biker_cap_w", self.biker_cap_w),
            ("reservoir_capacity_wh", self.reservoir_capacity_wh),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(PowerConfigError(format!("{name} must be finite and >= 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.reservoir_initial_frac) {
            return Err(PowerConfigError("reservoir_initial_frac outside [0, 1]".into()));
        }
        if self.fans_per_leaf != FANS_PER_LEAF {
            return Err(PowerConfigError(format!("fans_per_leaf must be {FANS_PER_LEAF}")));
        }
        if self.leaf_worst_case_w() > self.leaf_budget_w {
            return Err(PowerConfigError(format!(
                "worst-case leaf draw {} W exceeds the {} W leaf budget",
                self.leaf_worst_case_w(),
                self.leaf_budget_w
            )));
        }
        Ok(())
    }

    /// All fans at full duty with the stepper slewing.
    pub fn leaf_worst_case_w(&self) -> f64 {
        leaf_demand(self, &[1.0; FANS_PER_LEAF], true)
    }

    pub fn initial_reservoir_wh(&self) -> f64 {
        self.reservoir_capacity_wh * self.reservoir_initial_frac
    }

    pub fn biker_power_w(&self, rpm: f64) -> f64 {
        (self.biker_coeff_w_per_rpm * rpm).clamp(0.0, self.biker_cap_w)
    }
}

/// Accounting snapshot for one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLedger {
    pub supply_w: f64,
    pub demand_w: f64,
    pub brownout_scale: f64,
    pub reservoir_wh: f64,
}

/// Summed output of all bikers, each capped individually.
pub fn supply_from_bikers(cfg: &PowerConfig, rpms: &[f64]) -> f64 {
    rpms.iter().map(|&rpm| cfg.biker_power_w(rpm)).sum()
}

fn leaf_demand(cfg: &PowerConfig, duties: &[f64], slewing: bool) -> f64 {
    let mut w = 0.0;
    for d in duties {
        w += d.clamp(0.0, 1.0) * cfg.fan_power_w;
    }
    if slewing {
        w += cfg.stepper_power_w;
    }
    w + cfg.controller_overhead_w
}

/// Electrical draw of the commanded duties plus steppers and controllers.
pub fn demand(cfg: &PowerConfig, commands: &[LeafCommand], steppers_slewing: &[bool]) -> f64 {
    commands
        .iter()
        .zip(steppers_slewing)
        .map(|(c, &slewing)| leaf_demand(cfg, &c.fan_duty, slewing))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settlement {
    pub brownout_scale: f64,
    pub reservoir_wh: f64,
    /// Energy actually delivered to the loads this tick.
    pub consumed_wh: f64,
    /// Surplus that did not fit in the reservoir.
    pub spilled_wh: f64,
}

/// Balance one tick of supply against demand through the reservoir.
pub fn settle(
    cfg: &PowerConfig,
    supply_w: f64,
    demand_w: f64,
    reservoir_wh: f64,
    dt_s: f64,
) -> Settlement {
    let hours = dt_s / 3600.0;
    let surplus_w = supply_w - demand_w;
    if surplus_w >= 0.0 {
        let filled = reservoir_wh + surplus_w * hours;
        let reservoir = filled.min(cfg.reservoir_capacity_wh);
        return Settlement {
            brownout_scale: 1.0,
            reservoir_wh: reservoir,
            consumed_wh: demand_w * hours,
            spilled_wh: filled - reservoir,
        };
    }
    let needed_wh = -surplus_w * hours;
    if reservoir_wh >= needed_wh {
        return Settlement {
            brownout_scale: 1.0,
            reservoir_wh: reservoir_wh - needed_wh,
            consumed_wh: demand_w * hours,
            spilled_wh: 0.0,
        };
    }
    // Spend what is left of the reservoir and scale the loads to fit.
    let available_w = supply_w + reservoir_wh / hours;
    let scale = (available_w / demand_w).clamp(0.0, 1.0);
    Settlement {
        brownout_scale: scale,
        reservoir_wh: 0.0,
        consumed_wh: scale * demand_w * hours,
        spilled_wh: 0.0,
    }
}
