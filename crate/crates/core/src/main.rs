use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use kinetree::harness::{self, EngineConfig, Scenario, TelemetryWriter};

#[derive(Parser)]
#[command(name = "kinetree", version, about = "Bike-powered kinetic tree controller and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario in simulated time and print a summary.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Telemetry output, `.csv` or `.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a scenario twice and compare telemetry hashes.
    ReplayCheck {
        scenario: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run live against the wall clock, serving NDJSON over TCP.
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<EngineConfig> {
    let mut cfg = match path {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::load(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            scenario,
            config,
            out,
            seed,
        } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let scenario = load_scenario(&scenario)?;
            let summary = match out {
                Some(path) => {
                    let mut writer = TelemetryWriter::create(&path)
                        .with_context(|| format!("creating {}", path.display()))?;
                    let summary = harness::run_scenario_with(&cfg, &scenario, |r| writer.write(r))?;
                    writer.finish()?;
                    summary
                }
                None => harness::run_scenario_with(&cfg, &scenario, |_| Ok(()))?,
            };
            println!("{summary}");
            Ok(ExitCode::SUCCESS)
        }
        Command::ReplayCheck {
            scenario,
            config,
            seed,
        } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let scenario = load_scenario(&scenario)?;
            let a = harness::run_scenario_with(&cfg, &scenario, |_| Ok(()))?;
            let b = harness::run_scenario_with(&cfg, &scenario, |_| Ok(()))?;
            if a.telemetry_hash == b.telemetry_hash {
                println!("replay ok: {}", a.hash_hex());
                Ok(ExitCode::SUCCESS)
            } else {
                println!("replay MISMATCH: {} != {}", a.hash_hex(), b.hash_hex());
                Ok(ExitCode::from(1))
            }
        }
        Command::Serve {
            port,
            bind,
            config,
            seed,
        } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let handle = harness::serve(cfg, (bind.as_str(), port))
                .with_context(|| format!("binding {bind}:{port}"))?;
            eprintln!("listening on {}", handle.local_addr());
            handle.wait();
            Ok(ExitCode::from(1))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
