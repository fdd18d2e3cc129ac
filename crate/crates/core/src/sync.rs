//! Cadence estimation from crank pulses and pace-synchronisation status.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Small integer identifying one bike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BikerId(pub u32);

impl fmt::Display for BikerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// One crank revolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PedalEvent {
    pub biker_id: BikerId,
    pub timestamp_s: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyncError {
    #[error("pedal events for biker {biker} out of order: {later} s does not follow {earlier} s")]
    Unordered { biker: BikerId, earlier: f64, later: f64 },
    #[error("pedal timestamp {0} is not a finite, non-negative time")]
    BadTimestamp(f64),
    #[error("invalid sync thresholds: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CadenceEstimate {
    pub biker_id: BikerId,
    pub rpm: f64,
    pub sample_count: usize,
    pub valid: bool,
}

impl CadenceEstimate {
    fn from_window(biker_id: BikerId, first: f64, last: f64, count: usize) -> Self {
        if count < 2 {
            return Self {
                biker_id,
                rpm: 0.0,
                sample_count: count,
                valid: false,
            };
        }
        // Mean inter-pulse interval telescopes to (last - first) / (n - 1).
        let mean_interval = (last - first) / (count - 1) as f64;
        Self {
            biker_id,
            rpm: 60.0 / mean_interval,
            sample_count: count,
            valid: true,
        }
    }
}

pub const DEFAULT_WINDOW_S: f64 = 5.0;

/// Cadence from all pulses of one biker inside `(now - window, now]`.
pub fn estimate_cadence(
    biker_id: BikerId,
    events: &[PedalEvent],
    now_s: f64,
    window_s: f64,
) -> Result<CadenceEstimate, SyncError> {
    for pair in events.windows(2) {
        if !(pair[1].timestamp_s > pair[0].timestamp_s) {
            return Err(SyncError::Unordered {
                biker: biker_id,
                earlier: pair[0].timestamp_s,
                later: pair[1].timestamp_s,
            });
        }
    }
    let lo = now_s - window_s;
    let mut in_window = events
        .iter()
        .filter(|e| e.biker_id == biker_id)
        .map(|e| e.timestamp_s)
        .filter(|&t| t > lo && t <= now_s);
    let Some(first) = in_window.next() else {
        return Ok(CadenceEstimate::from_window(biker_id, 0.0, 0.0, 0));
    };
    let (last, count) = in_window.fold((first, 1), |(_, n), t| (t, n + 1));
    Ok(CadenceEstimate::from_window(biker_id, first, last, count))
}

/// Streaming cadence estimator for one biker.
///
/// Holds only the pulses still inside the window; `estimate` must be called
/// with non-decreasing `now_s`.
#[derive(Debug, Clone)]
pub struct CadenceTracker {
    biker_id: BikerId,
    window_s: f64,
    pulses: VecDeque<f64>,
    last_pulse: Option<f64>,
}

impl CadenceTracker {
    pub fn new(biker_id: BikerId, window_s: f64) -> Self {
        Self {
            biker_id,
            window_s,
            pulses: VecDeque::new(),
            last_pulse: None,
        }
    }

    pub fn biker_id(&self) -> BikerId {
        self.biker_id
    }

    pub fn push(&mut self, timestamp_s: f64) -> Result<(), SyncError> {
        if !(timestamp_s.is_finite() && timestamp_s >= 0.0) {
            return Err(SyncError::BadTimestamp(timestamp_s));
        }
        if let Some(prev) = self.last_pulse {
            if timestamp_s <= prev {
                return Err(SyncError::Unordered {
                    biker: self.biker_id,
                    earlier: prev,
                    later: timestamp_s,
                });
            }
        }
        self.last_pulse = Some(timestamp_s);
        self.pulses.push_back(timestamp_s);
        Ok(())
    }

    pub fn last_pulse(&self) -> Option<f64> {
        self.last_pulse
    }

    pub fn estimate(&mut self, now_s: f64) -> CadenceEstimate {
        let lo = now_s - self.window_s;
        while self.pulses.front().is_some_and(|&t| t <= lo) {
            self.pulses.pop_front();
        }
        // Pulses stamped after `now` stay queued for later ticks.
        let count = self.pulses.iter().take_while(|&&t| t <= now_s).count();
        match count {
            0 => CadenceEstimate::from_window(self.biker_id, 0.0, 0.0, 0),
            n => CadenceEstimate::from_window(self.biker_id, self.pulses[0], self.pulses[n - 1], n),
        }
    }
}

/// Coefficient of variation of the given cadences (population std / mean).
///
/// `None` when fewer than two cadences are given or the mean is zero; the
/// caller treats that as an indeterminate sync status.
pub fn sync_spread(rpms: &[f64]) -> Option<f64> {
    if rpms.len() < 2 {
        return None;
    }
    let n = rpms.len() as f64;
    let mean = rpms.iter().sum::<f64>() / n;
    if !(mean > 0.0) {
        return None;
    }
    if rpms.iter().all(|&r| r == rpms[0]) {
        return Some(0.0);
    }
    // Corrected two-pass: the second term cancels the rounding error in `mean`.
    let (sq, lin) = rpms.iter().fold((0.0, 0.0), |(sq, lin), r| {
        let d = r - mean;
        (sq + d * d, lin + d)
    });
    let var = (sq / n - (lin / n) * (lin / n)).max(0.0);
    Some(var.sqrt() / mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SyncStatus {
    InSync,
    OutOfSync,
    Indeterminate,
}

impl SyncStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SyncStatus::InSync => "InSync",
            SyncStatus::OutOfSync => "OutOfSync",
            SyncStatus::Indeterminate => "Indeterminate",
        }
    }
}

impl fmt::Display for SyncStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncState {
    pub spread_frac: f64,
    pub status: SyncStatus,
    /// How long the raw condition opposing `status` has held.
    pub dwell_s: f64,
}

impl Default for SyncState {
    fn default() -> Self {
        Self {
            spread_frac: 0.0,
            status: SyncStatus::Indeterminate,
            dwell_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncConfig {
    pub window_s: f64,
    /// Spread above this counts as out of sync.
    pub out_threshold: f64,
    /// Spread below this counts as in sync.
    pub in_threshold: f64,
    pub out_dwell_s: f64,
    pub in_dwell_s: f64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            window_s: DEFAULT_WINDOW_S,
            out_threshold: 0.15,
            in_threshold: 0.05,
            out_dwell_s: 3.0,
            in_dwell_s: 5.0,
        }
    }
}

impl SyncConfig {
    pub fn validate(&self) -> Result<(), SyncError> {
        if !(self.window_s > 0.0) {
            return Err(SyncError::Config("window_s must be > 0".into()));
        }
        if !(self.in_threshold >= 0.0 && self.in_threshold <= self.out_threshold) {
            return Err(SyncError::Config("need 0 <= in_threshold <= out_threshold".into()));
        }
        if !(self.out_dwell_s >= 0.0 && self.in_dwell_s >= 0.0) {
            return Err(SyncError::Config("dwell times must be >= 0".into()));
        }
        Ok(())
    }
}

/// Slack for comparing accumulated dwell against a threshold; sums of
/// `dt` drift a few ulps below exact multiples.
pub(crate) const DWELL_EPS: f64 = 1e-9;

/// Advance the hysteresis by one step of `dt_s`.
///
/// `spread` is `None` when fewer than two valid cadences exist.
pub fn update_sync_status(
    cfg: &SyncConfig,
    prev: SyncState,
    spread: Option<f64>,
    dt_s: f64,
) -> SyncState {
    let Some(spread) = spread else {
        return SyncState::default();
    };
    let raw_out = spread > cfg.out_threshold;
    let raw_in = spread < cfg.in_threshold;

    // Which flip the raw condition is pushing toward, if any.
    let pending = match prev.status {
        SyncStatus::InSync if raw_out => Some((SyncStatus::OutOfSync, cfg.out_dwell_s)),
        SyncStatus::OutOfSync if raw_in => Some((SyncStatus::InSync, cfg.in_dwell_s)),
        SyncStatus::Indeterminate if raw_out => Some((SyncStatus::OutOfSync, cfg.out_dwell_s)),
        SyncStatus::Indeterminate if raw_in => Some((SyncStatus::InSync, cfg.in_dwell_s)),
        _ => None,
    };
    match pending {
        None => SyncState {
            spread_frac: spread,
            status: prev.status,
            dwell_s: 0.0,
        },
        Some((target, needed)) => {
            // Indeterminate may be heading either way; restart the clock if
            // the direction changed since the last step.
            let carried = if prev.status == SyncStatus::Indeterminate
                && (prev.spread_frac > cfg.out_threshold) != raw_out
            {
                0.0
            } else {
                prev.dwell_s
            };
            let dwell = carried + dt_s;
            if dwell + DWELL_EPS >= needed {
                SyncState {
                    spread_frac: spread,
                    status: target,
                    dwell_s: 0.0,
                }
            } else {
                SyncState {
                    spread_frac: spread,
                    status: prev.status,
                    dwell_s: dwell,
                }
            }
        }
    }
}
