//! JSON experiment configurations. Every field has a default except the
//! dataset specs.

use std::path::Path;

use ricci_core::curvature::CurvatureMethod;
use ricci_core::datasets::DatasetSpec;
use ricci_core::mlp::TrainConfig;
use ricci_core::ricci::DistanceMode;
use ricci_core::theory::ProjectionRoute;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub width: usize,
    pub depth: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            width: 25,
            depth: 10,
        }
    }
}

impl Architecture {
    pub fn label(self) -> String {
        format!("w{}_d{}", self.width, self.depth)
    }
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn check_common(seeds: &[u64], k_fraction: f64, train: &TrainConfig) -> Result<()> {
    if seeds.is_empty() {
        return Err(CliError::Config("at least one seed is required".into()));
    }
    if !(k_fraction > 0.0 && k_fraction < 1.0) {
        return Err(CliError::Config(format!(
            "k_fraction must lie in (0, 1), got {k_fraction}"
        )));
    }
    train
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn check_datasets(datasets: &[DatasetSpec]) -> Result<()> {
    if datasets.is_empty() {
        return Err(CliError::Config("no datasets configured".into()));
    }
    for d in datasets {
        d.validate().map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn check_architecture(a: Architecture) -> Result<()> {
    if a.width == 0 || a.depth == 0 {
        return Err(CliError::Config(format!(
            "architecture needs positive width and depth, got ({}, {})",
            a.width, a.depth
        )));
    }
    Ok(())
}

/// Coefficient tables over datasets and architectures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TableConfig {
    pub datasets: Vec<DatasetSpec>,
    pub architectures: Vec<Architecture>,
    pub seeds: Vec<u64>,
    pub k_fraction: f64,
    pub methods: Vec<CurvatureMethod>,
    pub distance_mode: DistanceMode,
    /// `false` evaluates the randomly initialized networks without training.
    pub trained: bool,
    pub train: TrainConfig,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            architectures: vec![Architecture::default()],
            seeds: default_seeds(),
            k_fraction: 0.05,
            methods: vec![CurvatureMethod::OllivierExact],
            distance_mode: DistanceMode::default(),
            trained: true,
            train: TrainConfig::default(),
        }
    }
}

impl TableConfig {
    pub fn validate(&self) -> Result<()> {
        check_datasets(&self.datasets)?;
        check_common(&self.seeds, self.k_fraction, &self.train)?;
        if self.architectures.is_empty() || self.methods.is_empty() {
            return Err(CliError::Config(
                "architectures and methods must be non-empty".into(),
            ));
        }
        self.architectures.iter().try_for_each(|&a| check_architecture(a))
    }
}

/// Per-layer community structure of trained networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommunityConfig {
    pub datasets: Vec<DatasetSpec>,
    pub architecture: Architecture,
    pub seeds: Vec<u64>,
    pub k_fraction: f64,
    /// Edge curvature behind the curvature gap.
    pub method: CurvatureMethod,
    pub train: TrainConfig,
}

impl Default for CommunityConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            architecture: Architecture::default(),
            seeds: default_seeds(),
            k_fraction: 0.05,
            method: CurvatureMethod::OllivierApprox,
            train: TrainConfig::default(),
        }
    }
}

impl CommunityConfig {
    pub fn validate(&self) -> Result<()> {
        check_datasets(&self.datasets)?;
        check_common(&self.seeds, self.k_fraction, &self.train)?;
        check_architecture(self.architecture)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EarlyStopConfig {
    pub window: usize,
    pub patience: usize,
    pub margin: f64,
    /// Stop training when the rule fires instead of only recording it.
    pub halt: bool,
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        Self {
            window: 3,
            patience: 3,
            margin: 0.02,
            halt: false,
        }
    }
}

fn monitor_train_default() -> TrainConfig {
    TrainConfig {
        stop_at_target: false,
        max_epochs: 100,
        checkpoint_every: 5,
        ..TrainConfig::default()
    }
}

/// Training with periodic coefficient checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub architecture: Architecture,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_k_fraction")]
    pub k_fraction: f64,
    #[serde(default = "default_monitor_method")]
    pub method: CurvatureMethod,
    #[serde(default)]
    pub distance_mode: DistanceMode,
    #[serde(default = "monitor_train_default")]
    pub train: TrainConfig,
    #[serde(default)]
    pub early_stop: EarlyStopConfig,
}

fn default_k_fraction() -> f64 {
    0.05
}

fn default_monitor_method() -> CurvatureMethod {
    CurvatureMethod::OllivierApprox
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        check_datasets(std::slice::from_ref(&self.dataset))?;
        check_common(&[self.seed], self.k_fraction, &self.train)?;
        check_architecture(self.architecture)?;
        if self.train.checkpoint_every == 0 {
            return Err(CliError::Config("checkpoint_every must be positive".into()));
        }
        let e = &self.early_stop;
        if e.window == 0 || e.patience == 0 || !(e.margin >= 0.0) {
            return Err(CliError::Config(
                "early stop needs positive window and patience and a non-negative margin".into(),
            ));
        }
        Ok(())
    }
}

/// Layer coefficients across depths at fixed width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSweepConfig {
    pub dataset: DatasetSpec,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_depths")]
    pub depths: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_k_fraction")]
    pub k_fraction: f64,
    #[serde(default = "default_sweep_method")]
    pub method: CurvatureMethod,
    #[serde(default)]
    pub distance_mode: DistanceMode,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_width() -> usize {
    25
}

fn default_depths() -> Vec<usize> {
    vec![5, 7, 10, 15]
}

fn default_sweep_method() -> CurvatureMethod {
    CurvatureMethod::AugmentedForman
}

impl DepthSweepConfig {
    pub fn validate(&self) -> Result<()> {
        check_datasets(std::slice::from_ref(&self.dataset))?;
        check_common(&self.seeds, self.k_fraction, &self.train)?;
        if self.depths.is_empty() {
            return Err(CliError::Config("depth list is empty".into()));
        }
        self.depths.iter().try_for_each(|&depth| {
            check_architecture(Architecture {
                width: self.width,
                depth,
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreservationConfig {
    pub n_points: usize,
    pub dim: usize,
    pub k: usize,
    pub r: f64,
    pub trials: usize,
    pub widths: Vec<usize>,
    pub depths: Vec<usize>,
    pub delta: f64,
    pub route: ProjectionRoute,
    pub seed: u64,
}

impl Default for PreservationConfig {
    fn default() -> Self {
        Self {
            n_points: 50,
            dim: 3,
            k: 5,
            r: 0.3,
            trials: 1000,
            widths: (1..=24).map(|p| 1usize << p).collect(),
            depths: vec![1, 3],
            delta: 0.1,
            route: ProjectionRoute::Auto,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewireConfig {
    pub triples: usize,
    pub min_dim: usize,
    pub max_dim: usize,
    pub seed: u64,
}

impl Default for RewireConfig {
    fn default() -> Self {
        Self {
            triples: 1000,
            min_dim: 3,
            max_dim: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GdConfig {
    pub n_points: usize,
    pub dim: usize,
    pub k: usize,
    pub widths: Vec<usize>,
    pub runs: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            n_points: 20,
            dim: 5,
            k: 3,
            widths: vec![64, 256, 1024, 4096],
            runs: 10,
            steps: 200,
            learning_rate: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TheoryConfig {
    pub preservation: PreservationConfig,
    pub rewire: RewireConfig,
    pub gd: GdConfig,
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.preservation;
        if p.n_points < 2 || p.dim == 0 || p.trials == 0 || p.widths.is_empty() || p.depths.is_empty()
        {
            return Err(CliError::Config(
                "preservation needs ≥ 2 points, positive dim and trials, and non-empty widths and depths"
                    .into(),
            ));
        }
        if p.k == 0 || p.k >= p.n_points || !(p.r > 0.0) || !(p.delta > 0.0 && p.delta < 1.0) {
            return Err(CliError::Config(format!(
                "preservation parameters out of range: k = {}, r = {}, delta = {}",
                p.k, p.r, p.delta
            )));
        }
        if p.widths.contains(&0) || p.depths.contains(&0) {
            return Err(CliError::Config("widths and depths must be positive".into()));
        }
        let r = &self.rewire;
        if r.min_dim < 2 || r.min_dim > r.max_dim {
            return Err(CliError::Config(format!(
                "rewire dimensions must satisfy 2 ≤ min_dim ≤ max_dim, got {}..{}",
                r.min_dim, r.max_dim
            )));
        }
        let g = &self.gd;
        if g.k == 0 || g.k >= g.n_points || g.dim < 2 || g.runs == 0 || g.widths.contains(&0) {
            return Err(CliError::Config(format!(
                "gd parameters out of range: n_points = {}, dim = {}, k = {}, runs = {}",
                g.n_points, g.dim, g.k, g.runs
            )));
        }
        if !(g.learning_rate > 0.0 && g.learning_rate.is_finite()) {
            return Err(CliError::Config("gd learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Reads a JSON config; parse failures are configuration errors.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
