use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::config::EngineConfig;
use super::scenario::{Action, Input};
use super::telemetry::{OverlayKind, TelemetryRecord};
use crate::grammar::{target_waveform, GestureKind, Grammar};
use crate::plant::{
    command_from_target, effective_airspeed, step_leaf, LeafCommand, LeafParams, LeafState,
    PlantError, Stepper,
};
use crate::power::{demand, settle, supply_from_bikers};
use crate::scheduler::{
    assign_gestures, step_mode, ActiveBiker, EngineMode, LeafAssignment, Overlay, LEAF_COUNT,
};
use crate::sync::{
    sync_spread, update_sync_status, BikerId, CadenceEstimate, CadenceTracker, SyncError,
    SyncState,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{0}")]
    Config(#[from] super::config::ConfigError),
    #[error("biker {0} is not joined")]
    UnknownBiker(BikerId),
    #[error("biker {0} is already joined")]
    AlreadyJoined(BikerId),
    #[error(transparent)]
    Pulse(#[from] SyncError),
    #[error("simulation fault at tick {tick}: {source}")]
    Plant { tick: u64, source: PlantError },
}

// Independent random streams derived from the one seed.
const STREAM_JITTER: u64 = 1;
const STREAM_GESTURES: u64 = 2;

/// The full control pipeline plus the simulated leaves.
///
/// One `step` is one tick; nothing inside reads the wall clock.
pub struct Engine {
    config: EngineConfig,
    grammar: Grammar,
    tick: u64,
    trackers: BTreeMap<BikerId, CadenceTracker>,
    estimates: Vec<CadenceEstimate>,
    sync: SyncState,
    mode: EngineMode,
    assignment: LeafAssignment,
    leaf_params: [LeafParams; LEAF_COUNT],
    leaves: [LeafState; LEAF_COUNT],
    steppers: [Stepper; LEAF_COUNT],
    reservoir_wh: f64,
    gesture_rng: ChaCha8Rng,
}

/// What happened during one tick besides the record itself.
#[derive(Debug, Clone, Default)]
pub struct TickEvents {
    pub overlay_started: Option<OverlayKind>,
    /// Gesture cycles that began this tick, per kind.
    pub cycles_started: Vec<GestureKind>,
    pub supplied_wh: f64,
    pub consumed_wh: f64,
    pub spilled_wh: f64,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let grammar = Grammar {
            config: config.grammar.clone(),
        };
        let mut jitter_rng = ChaCha8Rng::seed_from_u64(config.seed);
        jitter_rng.set_stream(STREAM_JITTER);
        let leaf_params = [(); LEAF_COUNT].map(|_| config.plant.draw_leaf(&mut jitter_rng));
        let mut gesture_rng = ChaCha8Rng::seed_from_u64(config.seed);
        gesture_rng.set_stream(STREAM_GESTURES);
        let theta_max = config.plant.theta_max_rad;
        Ok(Self {
            reservoir_wh: config.power.initial_reservoir_wh(),
            grammar,
            tick: 0,
            trackers: BTreeMap::new(),
            estimates: Vec::new(),
            sync: SyncState::default(),
            mode: EngineMode::default(),
            assignment: LeafAssignment::at_rest(),
            leaf_params,
            leaves: [LeafState::new(0.0, 0.0, theta_max); LEAF_COUNT],
            steppers: [Stepper::default(); LEAF_COUNT],
            gesture_rng,
            config,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// Time of the tick that the next `step` will compute.
    pub fn now_s(&self) -> f64 {
        self.tick as f64 / self.config.tick_hz as f64
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn mode(&self) -> &EngineMode {
        &self.mode
    }

    pub fn sync_state(&self) -> &SyncState {
        &self.sync
    }

    pub fn leaf_params(&self) -> &[LeafParams; LEAF_COUNT] {
        &self.leaf_params
    }

    pub fn leaf_states(&self) -> &[LeafState; LEAF_COUNT] {
        &self.leaves
    }

    pub fn reservoir_wh(&self) -> f64 {
        self.reservoir_wh
    }

    pub fn is_joined(&self, biker: BikerId) -> bool {
        self.trackers.contains_key(&biker)
    }

    pub fn bikers(&self) -> impl Iterator<Item = BikerId> + '_ {
        self.trackers.keys().copied()
    }

    /// Cadence estimates from the most recent tick, in biker id order.
    pub fn cadences(&self) -> &[CadenceEstimate] {
        &self.estimates
    }

    /// Apply one input. Pedal pulses must not be later than the tick they
    /// are applied in.
    pub fn apply(&mut self, input: &Input) -> Result<(), EngineError> {
        let window = self.config.sync.window_s;
        match input.action {
            Action::Join => {
                if self.trackers.contains_key(&input.biker) {
                    return Err(EngineError::AlreadyJoined(input.biker));
                }
                self.trackers
                    .insert(input.biker, CadenceTracker::new(input.biker, window));
            }
            Action::Leave => {
                self.trackers
                    .remove(&input.biker)
                    .ok_or(EngineError::UnknownBiker(input.biker))?;
            }
            Action::Pedal => {
                self.trackers
                    .get_mut(&input.biker)
                    .ok_or(EngineError::UnknownBiker(input.biker))?
                    .push(input.t)?;
            }
        }
        Ok(())
    }

    /// Advance one tick: sync, scheduler, grammar, commands, power, plant.
    pub fn step(&mut self) -> Result<(TelemetryRecord, TickEvents), EngineError> {
        let cfg = &self.config;
        let dt = cfg.dt_s();
        let now = self.now_s();
        let mut events = TickEvents::default();

        self.estimates = self.trackers.values_mut().map(|t| t.estimate(now)).collect();
        let valid_rpms: Vec<f64> = self
            .estimates
            .iter()
            .filter(|e| e.valid)
            .map(|e| e.rpm)
            .collect();
        let active: Vec<ActiveBiker> = valid_rpms
            .iter()
            .filter(|&&rpm| rpm >= cfg.scheduler.active_min_rpm)
            .map(|&rpm| ActiveBiker {
                rpm,
                effort_frac: cfg.power.biker_power_w(rpm) / cfg.power.biker_cap_w,
            })
            .collect();

        self.sync = update_sync_status(&cfg.sync, self.sync, sync_spread(&valid_rpms), dt);
        let prev_overlay = self.mode.overlay;
        self.mode = step_mode(&cfg.scheduler, self.mode, active.len(), &self.sync, dt);
        events.overlay_started = overlay_start(prev_overlay, self.mode.overlay, cfg.scheduler.interrupt_s);

        let prev_kinds = self.assignment.kinds();
        self.assignment = assign_gestures(
            &self.grammar,
            &self.mode,
            &active,
            &self.assignment,
            &mut self.gesture_rng,
        );
        for (slot, prev_kind) in self.assignment.leaves.iter().zip(prev_kinds) {
            if slot.kind != prev_kind || slot.cycle_wrapped || self.tick == 0 {
                events.cycles_started.push(slot.kind);
            }
        }

        let return_time_s = FRAC_PI_2 / cfg.plant.stepper_slew_rad_s;
        let mut commands = [command_from_target(0.0, false); LEAF_COUNT];
        let mut targets = [0.0; LEAF_COUNT];
        let mut slewing = [false; LEAF_COUNT];
        for (i, slot) in self.assignment.leaves.iter().enumerate() {
            let p = &slot.params;
            targets[i] = target_waveform(p, slot.phase_s);
            let tau = slot.phase_s % p.cycle_length_s();
            // Swing the fans away during long pauses, and back in time for the next rise.
            let redirect = p.interval_s > cfg.plant.redirect_pause_s
                && tau > p.cycle_period_s
                && p.cycle_length_s() - tau > return_time_s;
            commands[i] = command_from_target(targets[i], redirect);
            slewing[i] = self.steppers[i].slew_toward(
                commands[i].stepper_angle_rad,
                cfg.plant.stepper_slew_rad_s,
                dt,
            );
        }

        let supply_w = supply_from_bikers(&cfg.power, &valid_rpms);
        let demand_w = demand(&cfg.power, &commands, &slewing);
        let settlement = settle(&cfg.power, supply_w, demand_w, self.reservoir_wh, dt);
        self.reservoir_wh = settlement.reservoir_wh;
        events.supplied_wh = supply_w * dt / 3600.0;
        events.consumed_wh = settlement.consumed_wh;
        events.spilled_wh = settlement.spilled_wh;

        for (i, command) in commands.iter().enumerate() {
            let applied: LeafCommand = command.scaled(settlement.brownout_scale);
            let v = effective_airspeed(cfg.plant.v_max_m_s, applied.duty(), self.steppers[i].angle_rad);
            self.leaves[i] = step_leaf(&self.leaves[i], &self.leaf_params[i], v, dt).map_err(|e| {
                let source = match e {
                    PlantError::NonFinite { theta, omega, v_eff, .. } => PlantError::NonFinite {
                        leaf: i,
                        theta,
                        omega,
                        v_eff,
                    },
                    other => other,
                };
                EngineError::Plant {
                    tick: self.tick,
                    source,
                }
            })?;
        }

        let record = TelemetryRecord {
            tick: self.tick,
            time_s: now,
            mode: self.mode.mode,
            overlay: self.mode.overlay.map(|o| match o {
                Overlay::Interrupt { .. } => OverlayKind::Interrupt,
                Overlay::Reward { .. } => OverlayKind::Reward,
            }),
            deflection: self.leaves.map(|l| l.deflection_frac),
            kinds: self.assignment.kinds(),
            commanded_duty: commands.map(|c| c.duty()),
            supply_w,
            demand_w,
            brownout_scale: settlement.brownout_scale,
            reservoir_wh: self.reservoir_wh,
            sync_status: self.sync.status,
            spread_frac: self.sync.spread_frac,
            active_bikers: active.len(),
        };

        self.assignment.advance(dt);
        self.tick += 1;
        Ok((record, events))
    }
}

fn overlay_start(prev: Option<Overlay>, next: Option<Overlay>, interrupt_s: f64) -> Option<OverlayKind> {
    match (prev, next) {
        (_, Some(Overlay::Interrupt { remaining_s })) if remaining_s == interrupt_s => {
            Some(OverlayKind::Interrupt)
        }
        (Some(Overlay::Reward { .. }), Some(Overlay::Reward { .. })) => None,
        (_, Some(Overlay::Reward { elapsed_s: 0.0 })) => Some(OverlayKind::Reward),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::Mode;

    fn pedal(biker: u32, t: f64) -> Input {
        Input {
            t,
            biker: BikerId(biker),
            action: Action::Pedal,
        }
    }

    fn join(biker: u32) -> Input {
        Input {
            t: 0.0,
            biker: BikerId(biker),
            action: Action::Join,
        }
    }

    #[test]
    fn idle_engine_recruits() {
        let mut e = Engine::new(EngineConfig::default()).unwrap();
        let (r, ev) = e.step().unwrap();
        assert_eq!(r.mode, Mode::Idle);
        assert!(r.kinds.iter().all(|k| *k == GestureKind::Recruitment));
        assert_eq!(ev.cycles_started.len(), 3);
        assert_eq!(r.tick, 0);
        assert_eq!(e.now_s(), 0.02);
    }

    #[test]
    fn apply_rejects_unknown_and_duplicate_bikers() {
        let mut e = Engine::new(EngineConfig::default()).unwrap();
        assert!(matches!(e.apply(&pedal(1, 0.0)), Err(EngineError::UnknownBiker(_))));
        e.apply(&join(1)).unwrap();
        assert!(matches!(e.apply(&join(1)), Err(EngineError::AlreadyJoined(_))));
        e.apply(&pedal(1, 0.0)).unwrap();
        assert!(matches!(e.apply(&pedal(1, 0.0)), Err(EngineError::Pulse(_))));
    }

    #[test]
    fn jitter_depends_on_seed() {
        let a = Engine::new(EngineConfig::default()).unwrap();
        let b = Engine::new(EngineConfig {
            seed: 1,
            ..EngineConfig::default()
        })
        .unwrap();
        let ja: Vec<f64> = a.leaf_params().iter().map(|p| p.jitter_frac).collect();
        let jb: Vec<f64> = b.leaf_params().iter().map(|p| p.jitter_frac).collect();
        assert_ne!(ja, jb);
        assert!(ja.iter().chain(&jb).all(|j| j.abs() <= 0.1));
        assert_ne!(ja[0], ja[1]);
    }

    #[test]
    fn overlay_start_detection() {
        let int = |r| Some(Overlay::Interrupt { remaining_s: r });
        let rew = |e| Some(Overlay::Reward { elapsed_s: e });
        assert_eq!(overlay_start(None, int(4.0), 4.0), Some(OverlayKind::Interrupt));
        assert_eq!(overlay_start(int(3.98), int(4.0), 4.0), Some(OverlayKind::Interrupt));
        assert_eq!(overlay_start(int(4.0), int(3.98), 4.0), None);
        assert_eq!(overlay_start(None, rew(0.0), 4.0), Some(OverlayKind::Reward));
        assert_eq!(overlay_start(rew(1.0), int(4.0), 4.0), Some(OverlayKind::Interrupt));
        assert_eq!(overlay_start(rew(0.0), rew(0.02), 4.0), None);
    }
}
