//! Run manifests: written before any work starts and rewritten on completion.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Table,
    Community,
    Monitor,
    DepthSweep,
    Theory,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Table => "table",
            Self::Community => "community",
            Self::Monitor => "monitor",
            Self::DepthSweep => "depth-sweep",
            Self::Theory => "theory",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        [
            Self::Table,
            Self::Community,
            Self::Monitor,
            Self::DepthSweep,
            Self::Theory,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| CliError::Config(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: ExperimentKind,
    pub version: String,
    /// The fully resolved configuration, defaults included.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub threads: usize,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub status: RunStatus,
    pub error: Option<String>,
    /// Output files relative to the run directory.
    pub outputs: Vec<PathBuf>,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn start<C: Serialize>(experiment: ExperimentKind, config: &C, seeds: Vec<u64>) -> Result<Self> {
        Ok(Self {
            experiment,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config)?,
            seeds,
            threads: rayon::current_num_threads(),
            started_unix: now_unix(),
            finished_unix: None,
            status: RunStatus::Running,
            error: None,
            outputs: Vec::new(),
        })
    }

    pub fn finish(&mut self, outcome: std::result::Result<Vec<PathBuf>, &CliError>) {
        self.finished_unix = Some(now_unix());
        match outcome {
            Ok(mut outputs) => {
                outputs.sort();
                self.outputs = outputs;
                self.status = RunStatus::Complete;
            }
            Err(e) => {
                self.status = RunStatus::Failed;
                self.error = Some(e.to_string());
            }
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
