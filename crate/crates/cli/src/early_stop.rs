//! Plateau rule on the checkpoint series of mean local coefficients.

use serde::{Deserialize, Serialize};

use crate::config::EarlyStopConfig;

/// Streaming state of the rule. The smoothed value is the mean of the last
/// `window` defined checkpoints; the rule fires once it has exceeded its running
/// minimum by more than `margin` for `patience` consecutive checkpoints, and
/// never before `window + patience` defined checkpoints were seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopState {
    pub window: usize,
    pub patience: usize,
    pub margin: f64,
    /// `(epoch, mean local coefficient)`; undefined checkpoints are `None`.
    pub series: Vec<(usize, Option<f64>)>,
    /// `(epoch, smoothed value)` for every checkpoint with a full window.
    pub smoothed: Vec<(usize, f64)>,
    pub stop_epoch: Option<usize>,
    #[serde(skip)]
    defined: Vec<f64>,
    #[serde(skip)]
    running_min: f64,
    #[serde(skip)]
    streak: usize,
}

impl EarlyStopState {
    pub fn new(config: &EarlyStopConfig) -> Self {
        Self {
            window: config.window.max(1),
            patience: config.patience.max(1),
            margin: config.margin,
            series: Vec::new(),
            smoothed: Vec::new(),
            stop_epoch: None,
            defined: Vec::new(),
            running_min: f64::INFINITY,
            streak: 0,
        }
    }

    /// Records a checkpoint and returns whether the rule has fired (now or earlier).
    pub fn push(&mut self, epoch: usize, value: Option<f64>) -> bool {
        self.series.push((epoch, value));
        if self.stop_epoch.is_some() {
            return true;
        }
        let Some(v) = value.filter(|v| v.is_finite()) else {
            return false;
        };
        self.defined.push(v);
        if self.defined.len() < self.window {
            return false;
        }
        let tail = &self.defined[self.defined.len() - self.window..];
        let s = tail.iter().sum::<f64>() / self.window as f64;
        self.smoothed.push((epoch, s));
        if s > self.running_min + self.margin {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.running_min = self.running_min.min(s);
        if self.streak >= self.patience && self.defined.len() >= self.window + self.patience {
            self.stop_epoch = Some(epoch);
        }
        self.stop_epoch.is_some()
    }
}

/// Replays a full checkpoint series through the rule.
pub fn early_stop_decision(series: &[(usize, Option<f64>)], config: &EarlyStopConfig) -> EarlyStopState {
    let mut state = EarlyStopState::new(config);
    for &(epoch, value) in series {
        state.push(epoch, value);
    }
    state
}
