//! Experiment orchestration: coefficient tables, community evolution,
//! training monitoring, depth sweeps and the theory suite. Every run writes a
//! [`RunManifest`] before starting and rewrites it on completion; replaying a
//! manifest reproduces every CSV byte for byte.

pub mod community;
pub mod config;
pub mod depth;
pub mod early_stop;
pub mod error;
pub mod manifest;
pub mod monitor;
pub mod runs;
pub mod table;
pub mod theory_suite;

use std::path::{Path, PathBuf};

use log::warn;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub use config::{
    Architecture, CommunityConfig, DepthSweepConfig, EarlyStopConfig, MonitorConfig, TableConfig,
    TheoryConfig,
};
pub use error::{CliError, Result};
pub use manifest::{ExperimentKind, RunManifest, RunStatus, MANIFEST_FILE};

/// Runs `body` between the two manifest writes. A failure is recorded in the
/// manifest before being returned.
pub fn execute<C, F>(kind: ExperimentKind, config: &C, seeds: Vec<u64>, out: &Path, body: F) -> Result<RunManifest>
where
    C: Serialize,
    F: FnOnce(&C, &Path) -> Result<Vec<PathBuf>>,
{
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut manifest = RunManifest::start(kind, config, seeds)?;
    manifest.write(out)?;
    let result = body(config, out);
    match result {
        Ok(files) => {
            manifest.finish(Ok(files));
            manifest.write(out)?;
            Ok(manifest)
        }
        Err(e) => {
            manifest.finish(Err(&e));
            manifest.write(out)?;
            Err(e)
        }
    }
}

fn parse<C: DeserializeOwned>(config: serde_json::Value) -> Result<C> {
    serde_json::from_value(config).map_err(|e| CliError::Config(e.to_string()))
}

fn ignore_seeds(kind: ExperimentKind, seeds: Option<u64>) {
    if seeds.is_some() {
        warn!("--seeds has no effect on the {kind} experiment");
    }
}

/// Parses `config` for `kind`, applies a `0..n` seed override, validates and
/// runs the experiment into `out`.
pub fn run_config(kind: ExperimentKind, config: serde_json::Value, seeds: Option<u64>, out: &Path) -> Result<RunManifest> {
    let range = seeds.map(|n| (0..n).collect::<Vec<u64>>());
    match kind {
        ExperimentKind::Table => {
            let mut cfg: TableConfig = parse(config)?;
            if let Some(s) = range {
                cfg.seeds = s;
            }
            cfg.validate()?;
            execute(kind, &cfg, cfg.seeds.clone(), out, |c, o| Ok(table::run_table(c, o)?.1))
        }
        ExperimentKind::Community => {
            let mut cfg: CommunityConfig = parse(config)?;
            if let Some(s) = range {
                cfg.seeds = s;
            }
            cfg.validate()?;
            execute(kind, &cfg, cfg.seeds.clone(), out, |c, o| Ok(community::run_community(c, o)?.1))
        }
        ExperimentKind::Monitor => {
            ignore_seeds(kind, seeds);
            let cfg: MonitorConfig = parse(config)?;
            cfg.validate()?;
            execute(kind, &cfg, vec![cfg.seed], out, |c, o| Ok(monitor::monitor_training(c, o)?.1))
        }
        ExperimentKind::DepthSweep => {
            let mut cfg: DepthSweepConfig = parse(config)?;
            if let Some(s) = range {
                cfg.seeds = s;
            }
            cfg.validate()?;
            execute(kind, &cfg, cfg.seeds.clone(), out, |c, o| Ok(depth::run_depth_sweep(c, o)?.1))
        }
        ExperimentKind::Theory => {
            ignore_seeds(kind, seeds);
            let cfg: TheoryConfig = parse(config)?;
            cfg.validate()?;
            let seeds = vec![cfg.preservation.seed, cfg.rewire.seed, cfg.gd.seed];
            execute(kind, &cfg, seeds, out, |c, o| Ok(theory_suite::run_theory_suite(c, o)?.1))
        }
    }
}

/// Re-runs the experiment recorded in a manifest into `out`.
pub fn replay(manifest_path: &Path, out: &Path) -> Result<RunManifest> {
    let manifest = RunManifest::read(manifest_path)?;
    run_config(manifest.experiment, manifest.config, None, out)
}
