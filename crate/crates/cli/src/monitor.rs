//! Training with coefficient checkpoints and the plateau early-stop rule.

use std::path::{Path, PathBuf};

use log::info;
use ricci_core::mlp::{architecture, train, HookOutcome, Mlp, TrainLog};
use ricci_core::ricci::{coefficient_report, k_for_fraction};
use serde::{Deserialize, Serialize};

use crate::config::MonitorConfig;
use crate::early_stop::EarlyStopState;
use crate::error::Result;
use crate::runs::{load_dataset, write_file, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorOutcome {
    pub early_stop: EarlyStopState,
    /// Whether training was cut short at the stop epoch.
    pub halted: bool,
    pub stop_test_accuracy: Option<f64>,
    pub best_test_accuracy: Option<f64>,
    pub best_epoch: Option<usize>,
    pub final_epoch: usize,
}

fn test_accuracy_at(log: &TrainLog, epoch: usize) -> Option<f64> {
    log.epochs.iter().find(|r| r.epoch == epoch)?.test_accuracy
}

pub fn monitor_training(cfg: &MonitorConfig, out: &Path) -> Result<((TrainLog, MonitorOutcome), Vec<PathBuf>)> {
    cfg.validate()?;
    let (train_cloud, test_cloud) = load_dataset(&cfg.dataset)?;
    let k = k_for_fraction(test_cloud.len(), cfg.k_fraction)?;
    let widths = architecture(train_cloud.dim(), cfg.architecture.width, cfg.architecture.depth);
    let mut model = Mlp::init(&widths, cfg.seed)?;
    let mut state = EarlyStopState::new(&cfg.early_stop);
    let train_cfg = ricci_core::mlp::TrainConfig {
        seed: cfg.seed,
        ..cfg.train.clone()
    };
    let log = train(&mut model, &train_cloud, Some(&test_cloud), &train_cfg, |epoch, m| {
        let trace = m.activation_trace(&test_cloud)?;
        let mean = coefficient_report(&trace, k, cfg.method, cfg.distance_mode)?.mean_local;
        let fired = state.push(epoch, mean);
        info!("epoch {epoch}: mean local coefficient {mean:?}");
        Ok(HookOutcome {
            coefficient: mean,
            stop: fired && cfg.early_stop.halt,
        })
    })?;
    let (best_epoch, best_test_accuracy) = log
        .epochs
        .iter()
        .filter_map(|r| Some((r.epoch, r.test_accuracy?)))
        .fold(None, |best: Option<(usize, f64)>, (e, a)| match best {
            Some((_, b)) if b >= a => best,
            _ => Some((e, a)),
        })
        .unzip();
    let outcome = MonitorOutcome {
        halted: log.stopped_by_hook.is_some(),
        stop_test_accuracy: state.stop_epoch.and_then(|e| test_accuracy_at(&log, e)),
        best_test_accuracy,
        best_epoch,
        final_epoch: log.final_record().epoch,
        early_stop: state,
    };
    let files = vec![
        write_file(out, "train_log.csv", |w| Ok(log.write_csv(w)?))?,
        write_json(out, "early_stop.json", &outcome)?,
    ];
    Ok(((log, outcome), files))
}
