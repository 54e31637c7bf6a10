//! Helpers shared by the experiments: output files, per-seed training.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use ricci_core::datasets::DatasetSpec;
use ricci_core::mlp::{architecture, no_hook, train, Mlp, TrainConfig, TrainLog};
use ricci_core::PointCloud;

use crate::config::Architecture;
use crate::error::{CliError, Result};

/// Creates `root/rel` (and its parents), hands a buffered writer to `fill`,
/// and returns `rel` for the manifest.
pub(crate) fn write_file<F>(root: &Path, rel: impl Into<PathBuf>, fill: F) -> Result<PathBuf>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let rel = rel.into();
    let path = root.join(&rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut w = BufWriter::new(file);
    fill(&mut w)?;
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(rel)
}

pub(crate) fn write_json<T: serde::Serialize>(root: &Path, rel: impl Into<PathBuf>, value: &T) -> Result<PathBuf> {
    write_file(root, rel, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

/// Formats an optional value; `None` becomes an empty CSV field.
pub(crate) fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Directory-safe dataset label, e.g. `syn_ii` or `mnist_pair_1v7`.
pub fn dataset_label(spec: &DatasetSpec) -> String {
    match spec.classes {
        Some((a, b)) => format!("{}_{a}v{b}", spec.name),
        None => spec.name.to_string(),
    }
}

pub(crate) fn load_dataset(spec: &DatasetSpec) -> Result<(PointCloud, PointCloud)> {
    let (train, test) = spec.load()?;
    info!(
        "{}: {} train / {} test points in dimension {}",
        dataset_label(spec),
        train.len(),
        test.len(),
        train.dim()
    );
    Ok((train, test))
}

/// One network: trained (or left at initialization) from a given seed.
#[derive(Debug, Clone)]
pub struct SeedModel {
    pub seed: u64,
    pub model: Mlp,
    pub log: Option<TrainLog>,
    /// Untrained models always count as included.
    pub included: bool,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

impl SeedModel {
    pub fn epochs(&self) -> usize {
        self.log.as_ref().map_or(0, |l| l.final_record().epoch)
    }
}

/// Initializes from `seed`, trains with the shuffle stream of the same seed
/// when `trained`, and flags seeds that missed the target accuracy.
pub(crate) fn fit_seed(
    train_cloud: &PointCloud,
    test_cloud: &PointCloud,
    arch: Architecture,
    config: &TrainConfig,
    seed: u64,
    trained: bool,
) -> Result<SeedModel> {
    let mut model = Mlp::init(&architecture(train_cloud.dim(), arch.width, arch.depth), seed)?;
    let log = if trained {
        let cfg = TrainConfig {
            seed,
            ..config.clone()
        };
        Some(train(&mut model, train_cloud, Some(test_cloud), &cfg, no_hook)?)
    } else {
        None
    };
    let (train_accuracy, _) = model.evaluate(train_cloud)?;
    let (test_accuracy, _) = model.evaluate(test_cloud)?;
    let included = !trained || train_accuracy >= config.target_train_accuracy;
    if !included {
        warn!(
            "seed {seed}: train accuracy {train_accuracy} below target {}; excluded",
            config.target_train_accuracy
        );
    }
    Ok(SeedModel {
        seed,
        model,
        log,
        included,
        train_accuracy,
        test_accuracy,
    })
}

/// Errors when no seed reached the target.
pub(crate) fn require_some_included(runs: &[SeedModel]) -> Result<()> {
    if !runs.is_empty() && runs.iter().all(|r| !r.included) {
        return Err(CliError::AllSeedsFailed(runs.len()));
    }
    Ok(())
}
