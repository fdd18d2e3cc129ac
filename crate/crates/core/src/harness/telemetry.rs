use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::grammar::GestureKind;
use crate::scheduler::{Mode, LEAF_COUNT};
use crate::sync::SyncStatus;

pub const TELEMETRY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OverlayKind {
    Interrupt,
    Reward,
}

impl OverlayKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OverlayKind::Interrupt => "Interrupt",
            OverlayKind::Reward => "Reward",
        }
    }
}

/// Engine state after one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub tick: u64,
    pub time_s: f64,
    pub mode: Mode,
    pub overlay: Option<OverlayKind>,
    pub deflection: [f64; LEAF_COUNT],
    pub kinds: [GestureKind; LEAF_COUNT],
    /// Duty the scheduler asked for, before brownout scaling.
    pub commanded_duty: [f64; LEAF_COUNT],
    pub supply_w: f64,
    pub demand_w: f64,
    pub brownout_scale: f64,
    pub reservoir_wh: f64,
    pub sync_status: SyncStatus,
    pub spread_frac: f64,
    pub active_bikers: usize,
}

impl TelemetryRecord {
    pub fn floats(&self) -> impl Iterator<Item = f64> + '_ {
        [self.time_s]
            .into_iter()
            .chain(self.deflection)
            .chain(self.commanded_duty)
            .chain([
                self.supply_w,
                self.demand_w,
                self.brownout_scale,
                self.reservoir_wh,
                self.spread_frac,
            ])
    }

    pub fn all_finite(&self) -> bool {
        self.floats().all(f64::is_finite)
    }

    fn hash_into(&self, h: &mut Sha256) {
        h.update(self.tick.to_le_bytes());
        h.update([self.mode as u8]);
        h.update([match self.overlay {
            None => 0u8,
            Some(OverlayKind::Interrupt) => 1,
            Some(OverlayKind::Reward) => 2,
        }]);
        for k in self.kinds {
            h.update([k as u8]);
        }
        h.update([self.sync_status as u8]);
        h.update((self.active_bikers as u64).to_le_bytes());
        for x in self.floats() {
            h.update(x.to_bits().to_le_bytes());
        }
    }
}

/// Running 64-bit content hash over the telemetry stream.
#[derive(Debug, Clone, Default)]
pub struct TelemetryHasher {
    inner: Sha256,
}

impl TelemetryHasher {
    pub fn update(&mut self, record: &TelemetryRecord) {
        record.hash_into(&mut self.inner);
    }

    pub fn finish(&self) -> u64 {
        let digest = self.inner.clone().finalize();
        u64::from_be_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
    }
}

pub fn telemetry_hash<'a>(records: impl IntoIterator<Item = &'a TelemetryRecord>) -> u64 {
    let mut h = TelemetryHasher::default();
    for r in records {
        h.update(r);
    }
    h.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayEvent {
    pub tick: u64,
    pub time_s: f64,
    pub kind: OverlayKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTotals {
    pub supplied_wh: f64,
    pub consumed_wh: f64,
    pub spilled_wh: f64,
    pub reservoir_start_wh: f64,
    pub reservoir_end_wh: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ticks: u64,
    pub duration_s: f64,
    pub mode_dwell_s: BTreeMap<Mode, f64>,
    /// Gesture cycles started, summed over leaves.
    pub gesture_cycles: BTreeMap<GestureKind, u64>,
    pub overlay_events: Vec<OverlayEvent>,
    pub energy: EnergyTotals,
    pub min_brownout_scale: f64,
    pub telemetry_hash: u64,
}

impl RunSummary {
    pub fn overlay_count(&self, kind: OverlayKind) -> usize {
        self.overlay_events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.telemetry_hash)
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "summary:")?;
        writeln!(f, "  ticks: {}", self.ticks)?;
        writeln!(f, "  duration_s: {:.3}", self.duration_s)?;
        writeln!(f, "  mode_dwell_s:")?;
        for mode in [Mode::Idle, Mode::Solo, Mode::Multi] {
            let s = self.mode_dwell_s.get(&mode).copied().unwrap_or(0.0);
            writeln!(f, "    {mode}: {s:.3}")?;
        }
        writeln!(f, "  gesture_cycles:")?;
        for kind in GestureKind::ALL {
            let n = self.gesture_cycles.get(&kind).copied().unwrap_or(0);
            writeln!(f, "    {kind}: {n}")?;
        }
        writeln!(f, "  overlays:")?;
        for e in &self.overlay_events {
            writeln!(f, "    - {} at {:.2} s (tick {})", e.kind.as_str(), e.time_s, e.tick)?;
        }
        writeln!(f, "  energy_wh:")?;
        writeln!(f, "    supplied: {:.6}", self.energy.supplied_wh)?;
        writeln!(f, "    consumed: {:.6}", self.energy.consumed_wh)?;
        writeln!(f, "    spilled: {:.6}", self.energy.spilled_wh)?;
        writeln!(f, "    reservoir_start: {:.6}", self.energy.reservoir_start_wh)?;
        writeln!(f, "    reservoir_end: {:.6}", self.energy.reservoir_end_wh)?;
        writeln!(f, "  min_brownout_scale: {:.6}", self.min_brownout_scale)?;
        write!(f, "  telemetry_hash: {}", self.hash_hex())
    }
}

pub const CSV_HEADER: [&str; 20] = [
    "tick",
    "time_s",
    "mode",
    "overlay",
    "deflection_0",
    "deflection_1",
    "deflection_2",
    "kind_0",
    "kind_1",
    "kind_2",
    "duty_0",
    "duty_1",
    "duty_2",
    "supply_w",
    "demand_w",
    "brownout_scale",
    "reservoir_wh",
    "sync_status",
    "spread_frac",
    "active_bikers",
];

fn csv_row(r: &TelemetryRecord) -> Vec<String> {
    let mut row = vec![
        r.tick.to_string(),
        r.time_s.to_string(),
        r.mode.to_string(),
        r.overlay.map(|o| o.as_str().to_owned()).unwrap_or_default(),
    ];
    row.extend(r.deflection.iter().map(f64::to_string));
    row.extend(r.kinds.iter().map(GestureKind::to_string));
    row.extend(r.commanded_duty.iter().map(f64::to_string));
    row.extend(
        [r.supply_w, r.demand_w, r.brownout_scale, r.reservoir_wh]
            .iter()
            .map(f64::to_string),
    );
    row.push(r.sync_status.to_string());
    row.push(r.spread_frac.to_string());
    row.push(r.active_bikers.to_string());
    row
}

/// Streams records as CSV (header row plus flat columns) or JSON lines.
pub enum TelemetryWriter<W: Write> {
    Csv(csv::Writer<W>),
    Jsonl(W),
}

impl TelemetryWriter<BufWriter<File>> {
    /// Format chosen from the extension: `.csv` or `.jsonl`.
    pub fn create(path: &Path) -> io::Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let file = BufWriter::new(File::create(path)?);
        match ext {
            "csv" => TelemetryWriter::csv(file),
            "jsonl" => Ok(TelemetryWriter::Jsonl(file)),
            other => Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("telemetry output must end in .csv or .jsonl, got `.{other}`"),
            )),
        }
    }
}

impl<W: Write> TelemetryWriter<W> {
    pub fn csv(inner: W) -> io::Result<Self> {
        let mut w = csv::Writer::from_writer(inner);
        w.write_record(CSV_HEADER)?;
        Ok(TelemetryWriter::Csv(w))
    }

    pub fn jsonl(inner: W) -> Self {
        TelemetryWriter::Jsonl(inner)
    }

    pub fn write(&mut self, record: &TelemetryRecord) -> io::Result<()> {
        match self {
            TelemetryWriter::Csv(w) => Ok(w.write_record(csv_row(record))?),
            TelemetryWriter::Jsonl(w) => {
                serde_json::to_writer(&mut *w, record)?;
                w.write_all(b"\n")
            }
        }
    }

    pub fn finish(self) -> io::Result<W> {
        match self {
            TelemetryWriter::Csv(w) => w.into_inner().map_err(|e| e.into_error()),
            TelemetryWriter::Jsonl(mut w) => {
                w.flush()?;
                Ok(w)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(tick: u64) -> TelemetryRecord {
        TelemetryRecord {
            tick,
            time_s: tick as f64 * 0.02,
            mode: Mode::Multi,
            overlay: Some(OverlayKind::Reward),
            deflection: [0.1, 0.2, 0.3],
            kinds: [GestureKind::SocialReward; 3],
            commanded_duty: [0.4, 0.5, 0.6],
            supply_w: 100.0,
            demand_w: 10.0,
            brownout_scale: 1.0,
            reservoir_wh: 2.5,
            sync_status: SyncStatus::InSync,
            spread_frac: 0.01,
            active_bikers: 2,
        }
    }

    #[test]
    fn csv_has_header_and_one_row_per_record() {
        let mut w = TelemetryWriter::csv(Vec::new()).unwrap();
        w.write(&record(0)).unwrap();
        w.write(&record(1)).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert_eq!(lines[1].split(',').count(), CSV_HEADER.len());
        assert!(lines[2].starts_with("1,0.02,Multi,Reward,"));
    }

    #[test]
    fn jsonl_round_trips() {
        let mut w = TelemetryWriter::jsonl(Vec::new());
        w.write(&record(3)).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        let back: TelemetryRecord = serde_json::from_str(text.trim_end()).unwrap();
        assert_eq!(back, record(3));
    }

    #[test]
    fn hash_sees_every_field() {
        let base = telemetry_hash([&record(0)]);
        let mut r = record(0);
        r.deflection[2] = f64::from_bits(r.deflection[2].to_bits() + 1);
        assert_ne!(telemetry_hash([&r]), base);
        let mut r = record(0);
        r.overlay = None;
        assert_ne!(telemetry_hash([&r]), base);
        let mut r = record(0);
        r.active_bikers = 3;
        assert_ne!(telemetry_hash([&r]), base);
        assert_eq!(telemetry_hash([&record(0)]), base);
    }
}
