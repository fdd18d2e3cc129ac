//! Engine assembly, scenario runs, deterministic replay, telemetry and the
//! live socket service.

pub mod config;
pub mod engine;
pub mod protocol;
pub mod scenario;
pub mod serve;
pub mod telemetry;

pub use config::{ConfigError, EngineConfig};
pub use engine::{Engine, EngineError, TickEvents};
pub use scenario::{Action, Input, Scenario, ScenarioError, ScenarioEvent, Segment};
pub use serve::{serve, ServeHandle};
pub use telemetry::{
    telemetry_hash, OverlayEvent, OverlayKind, RunSummary, TelemetryHasher, TelemetryRecord,
    TelemetryWriter,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("writing telemetry: {0}")]
    Sink(#[from] std::io::Error),
}

/// Step the full pipeline through `scenario` in simulated time, handing
/// every record to `sink`.
pub fn run_scenario_with<F>(
    config: &EngineConfig,
    scenario: &Scenario,
    mut sink: F,
) -> Result<RunSummary, RunError>
where
    F: FnMut(&TelemetryRecord) -> std::io::Result<()>,
{
    let inputs = scenario.expand()?;
    let mut engine = Engine::new(config.clone())?;
    let dt = config.dt_s();
    // Ticks at 0, dt, 2dt, ... up to and including duration_s.
    let ticks = (scenario.duration_s * config.tick_hz as f64 + 1e-9).floor() as u64 + 1;

    let mut summary = RunSummary {
        min_brownout_scale: 1.0,
        ..RunSummary::default()
    };
    summary.energy.reservoir_start_wh = engine.reservoir_wh();
    let mut hasher = TelemetryHasher::default();
    let mut next_input = 0;
    for _ in 0..ticks {
        let now = engine.now_s();
        while next_input < inputs.len() && inputs[next_input].t <= now {
            engine.apply(&inputs[next_input])?;
            next_input += 1;
        }
        let (record, events) = engine.step()?;
        hasher.update(&record);

        *summary.mode_dwell_s.entry(record.mode).or_default() += dt;
        for kind in events.cycles_started {
            *summary.gesture_cycles.entry(kind).or_default() += 1;
        }
        if let Some(kind) = events.overlay_started {
            summary.overlay_events.push(OverlayEvent {
                tick: record.tick,
                time_s: record.time_s,
                kind,
            });
        }
        summary.energy.supplied_wh += events.supplied_wh;
        summary.energy.consumed_wh += events.consumed_wh;
        summary.energy.spilled_wh += events.spilled_wh;
        summary.min_brownout_scale = summary.min_brownout_scale.min(record.brownout_scale);
        summary.ticks += 1;
        summary.duration_s = record.time_s;
        sink(&record)?;
    }
    summary.energy.reservoir_end_wh = engine.reservoir_wh();
    summary.telemetry_hash = hasher.finish();
    Ok(summary)
}

/// Run a scenario and keep the whole telemetry stream in memory.
pub fn run_scenario(
    config: &EngineConfig,
    scenario: &Scenario,
) -> Result<(Vec<TelemetryRecord>, RunSummary), RunError> {
    let mut records = Vec::new();
    let summary = run_scenario_with(config, scenario, |r| {
        records.push(r.clone());
        Ok(())
    })?;
    Ok((records, summary))
}

/// Run twice and compare telemetry hashes.
pub fn replay_check(config: &EngineConfig, scenario: &Scenario) -> Result<bool, RunError> {
    let first = run_scenario_with(config, scenario, |_| Ok(()))?;
    let second = run_scenario_with(config, scenario, |_| Ok(()))?;
    Ok(first.telemetry_hash == second.telemetry_hash)
}
