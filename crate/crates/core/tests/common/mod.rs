//! Test-side oracles. Each recomputes its quantity from scratch, without the
//! streaming state the library keeps, so the two can be compared tick by tick.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use kinetree::harness::{Action, EngineConfig, Input, OverlayKind, Scenario};
use kinetree::scheduler::Mode;
use kinetree::sync::{BikerId, SyncStatus};
use rand::Rng;

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

/// Every shipped scenario, sorted by file name.
pub fn suite() -> Vec<(String, PathBuf, Scenario)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .expect("scenario dir")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let s = Scenario::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            (name, p, s)
        })
        .collect()
}

pub fn load(name: &str) -> Scenario {
    Scenario::load(scenario_dir().join(format!("{name}.toml"))).expect("scenario")
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
}

/// Cadence from the full pulse log of one session: 60 over the mean interval
/// of the pulses inside `(now - window, now]`.
pub fn brute_cadence(log: &[f64], now: f64, window: f64) -> Option<f64> {
    let lo = log.partition_point(|&t| t <= now - window);
    let hi = log.partition_point(|&t| t <= now);
    let inside = &log[lo..hi];
    if inside.len() < 2 {
        return None;
    }
    let mean_interval = (inside[inside.len() - 1] - inside[0]) / (inside.len() - 1) as f64;
    Some(60.0 / mean_interval)
}

/// Same cadence, summing each interval instead. Agrees with `brute_cadence`
/// to a few ulps.
pub fn interval_sum_cadence(log: &[f64], now: f64, window: f64) -> Option<f64> {
    let lo = log.partition_point(|&t| t <= now - window);
    let hi = log.partition_point(|&t| t <= now);
    let inside = &log[lo..hi];
    if inside.len() < 2 {
        return None;
    }
    let total: f64 = inside.windows(2).map(|w| w[1] - w[0]).sum();
    Some(60.0 * (inside.len() - 1) as f64 / total)
}

/// Coefficient of variation via the pairwise-difference form of the variance.
pub fn brute_spread(rpms: &[f64]) -> Option<f64> {
    let n = rpms.len();
    if n < 2 {
        return None;
    }
    let mean = rpms.iter().sum::<f64>() / n as f64;
    if mean <= 0.0 {
        return None;
    }
    let mut pair_sq = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            pair_sq += (rpms[i] - rpms[j]).powi(2);
        }
    }
    let var = pair_sq / (n * n) as f64;
    Some(var.sqrt() / mean)
}

/// Sync hysteresis counted in whole ticks.
#[derive(Debug, Clone)]
pub struct HysteresisOracle {
    pub status: SyncStatus,
    out_ticks: u64,
    in_ticks: u64,
    need_out: u64,
    need_in: u64,
    out_threshold: f64,
    in_threshold: f64,
}

impl HysteresisOracle {
    pub fn new(cfg: &EngineConfig) -> Self {
        let hz = cfg.tick_hz as f64;
        Self {
            status: SyncStatus::Indeterminate,
            out_ticks: 0,
            in_ticks: 0,
            need_out: (cfg.sync.out_dwell_s * hz).round() as u64,
            need_in: (cfg.sync.in_dwell_s * hz).round() as u64,
            out_threshold: cfg.sync.out_threshold,
            in_threshold: cfg.sync.in_threshold,
        }
    }

    pub fn step(&mut self, spread: Option<f64>) -> SyncStatus {
        let Some(s) = spread else {
            self.status = SyncStatus::Indeterminate;
            self.out_ticks = 0;
            self.in_ticks = 0;
            return self.status;
        };
        let raw_out = s > self.out_threshold;
        let raw_in = s < self.in_threshold;
        self.out_ticks = if raw_out && self.status != SyncStatus::OutOfSync {
            self.out_ticks + 1
        } else {
            0
        };
        self.in_ticks = if raw_in && self.status != SyncStatus::InSync {
            self.in_ticks + 1
        } else {
            0
        };
        if self.out_ticks >= self.need_out {
            self.status = SyncStatus::OutOfSync;
            self.out_ticks = 0;
        }
        if self.in_ticks >= self.need_in {
            self.status = SyncStatus::InSync;
            self.in_ticks = 0;
        }
        self.status
    }
}

/// Mode debounce and overlays counted in whole ticks.
#[derive(Debug, Clone)]
pub struct ModeOracle {
    pub mode: Mode,
    pending: u64,
    overlay: Option<(OverlayKind, u64)>,
    last_sync: SyncStatus,
    debounce: u64,
    interrupt: u64,
    reward: u64,
}

impl ModeOracle {
    pub fn new(cfg: &EngineConfig) -> Self {
        let hz = cfg.tick_hz as f64;
        Self {
            mode: Mode::Idle,
            pending: 0,
            overlay: None,
            last_sync: SyncStatus::Indeterminate,
            debounce: (cfg.scheduler.mode_debounce_s * hz).round() as u64,
            interrupt: (cfg.scheduler.interrupt_s * hz).round() as u64,
            reward: (cfg.scheduler.reward_s * hz).round() as u64,
        }
    }

    pub fn overlay(&self) -> Option<OverlayKind> {
        self.overlay.map(|(k, _)| k)
    }

    /// Returns the overlay that started on this tick, if any.
    pub fn step(&mut self, active: usize, sync: SyncStatus) -> Option<OverlayKind> {
        let target = match active {
            0 => Mode::Idle,
            1 => Mode::Solo,
            _ => Mode::Multi,
        };
        if target == self.mode {
            self.pending = 0;
        } else {
            self.pending += 1;
            if self.pending >= self.debounce {
                self.mode = target;
                self.pending = 0;
            }
        }
        let mut started = None;
        if self.mode != Mode::Multi || active < 2 {
            self.overlay = None;
        } else {
            self.overlay = match self.overlay {
                Some((k, left)) if left > 1 => Some((k, left - 1)),
                _ => None,
            };
            if sync != self.last_sync {
                match sync {
                    SyncStatus::OutOfSync => {
                        self.overlay = Some((OverlayKind::Interrupt, self.interrupt));
                        started = Some(OverlayKind::Interrupt);
                    }
                    SyncStatus::InSync
                        if !matches!(self.overlay, Some((OverlayKind::Interrupt, _))) =>
                    {
                        self.overlay = Some((OverlayKind::Reward, self.reward));
                        started = Some(OverlayKind::Reward);
                    }
                    _ => {}
                }
            }
        }
        self.last_sync = sync;
        started
    }
}

/// What the oracles predict for one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTick {
    pub time_s: f64,
    /// Valid cadences in biker id order.
    pub cadences: Vec<(BikerId, f64)>,
    pub spread: Option<f64>,
    pub sync: SyncStatus,
    pub active: usize,
    pub mode: Mode,
    pub overlay: Option<OverlayKind>,
    pub overlay_started: Option<OverlayKind>,
}

/// Replays a sorted input list through the oracles one tick at a time.
pub struct Oracle<'a> {
    cfg: EngineConfig,
    inputs: &'a [Input],
    next: usize,
    tick: u64,
    logs: BTreeMap<BikerId, Vec<f64>>,
    hyst: HysteresisOracle,
    modes: ModeOracle,
}

impl<'a> Oracle<'a> {
    pub fn new(cfg: &EngineConfig, inputs: &'a [Input]) -> Self {
        Self {
            cfg: cfg.clone(),
            inputs,
            next: 0,
            tick: 0,
            logs: BTreeMap::new(),
            hyst: HysteresisOracle::new(cfg),
            modes: ModeOracle::new(cfg),
        }
    }

    pub fn step(&mut self) -> OracleTick {
        let now = self.tick as f64 / self.cfg.tick_hz as f64;
        self.tick += 1;
        while self.next < self.inputs.len() && self.inputs[self.next].t <= now {
            let i = &self.inputs[self.next];
            match i.action {
                Action::Join => {
                    self.logs.insert(i.biker, Vec::new());
                }
                Action::Leave => {
                    self.logs.remove(&i.biker);
                }
                Action::Pedal => self.logs.get_mut(&i.biker).expect("joined").push(i.t),
            }
            self.next += 1;
        }
        let window = self.cfg.sync.window_s;
        let cadences: Vec<(BikerId, f64)> = self
            .logs
            .iter()
            .filter_map(|(b, log)| brute_cadence(log, now, window).map(|r| (*b, r)))
            .collect();
        let rpms: Vec<f64> = cadences.iter().map(|c| c.1).collect();
        let spread = brute_spread(&rpms);
        let sync = self.hyst.step(spread);
        let active = rpms
            .iter()
            .filter(|&&r| r >= self.cfg.scheduler.active_min_rpm)
            .count();
        let overlay_started = self.modes.step(active, sync);
        OracleTick {
            time_s: now,
            cadences,
            spread,
            sync,
            active,
            mode: self.modes.mode,
            overlay: self.modes.overlay(),
            overlay_started,
        }
    }
}

/// Replay `inputs` (sorted by time) through the oracles for `ticks` ticks.
pub fn oracle_run(cfg: &EngineConfig, inputs: &[Input], ticks: u64) -> Vec<OracleTick> {
    let mut oracle = Oracle::new(cfg, inputs);
    (0..ticks).map(|_| oracle.step()).collect()
}

/// A random multi-biker input trace with roughly `target_events` inputs.
///
/// Bikers join, pedal through segments of random cadence with per-stroke
/// jitter and pauses, and sometimes leave and rejoin.
pub fn random_trace<R: Rng>(rng: &mut R, target_events: usize) -> Vec<Input> {
    let bikers = rng.gen_range(1..=4u32);
    let per_biker = target_events / bikers as usize;
    let mut inputs = Vec::with_capacity(target_events + 64);
    for b in 1..=bikers {
        let biker = BikerId(b);
        let mut t: f64 = rng.gen_range(0.0..5.0);
        let mut count = 0;
        while count < per_biker {
            inputs.push(Input {
                t,
                biker,
                action: Action::Join,
            });
            count += 1;
            // One session: segments until the quota is hit or the biker walks off.
            loop {
                let rpm: f64 = rng.gen_range(8.0..150.0);
                let seg_end = t + rng.gen_range(1.0..30.0);
                let jitter = rng.gen_range(0.0..0.08);
                while t < seg_end && count < per_biker {
                    t += 60.0 / rpm * (1.0 + rng.gen_range(-jitter..=jitter));
                    inputs.push(Input {
                        t,
                        biker,
                        action: Action::Pedal,
                    });
                    count += 1;
                }
                if count >= per_biker || rng.gen_bool(0.2) {
                    break;
                }
                if rng.gen_bool(0.3) {
                    t += rng.gen_range(0.5..8.0);
                }
            }
            t += rng.gen_range(0.01..3.0);
            inputs.push(Input {
                t,
                biker,
                action: Action::Leave,
            });
            count += 1;
            t += rng.gen_range(0.5..10.0);
        }
    }
    inputs.sort_by(|a, b| a.t.total_cmp(&b.t));
    inputs
}

/// Ticks needed to cover every input, plus a tail.
pub fn ticks_covering(cfg: &EngineConfig, inputs: &[Input], tail_s: f64) -> u64 {
    let end = inputs.last().map_or(0.0, |i| i.t) + tail_s;
    (end * cfg.tick_hz as f64).ceil() as u64 + 1
}
