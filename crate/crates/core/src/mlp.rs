//! Feedforward binary classifier: ReLU hidden layers, sigmoid output, Adam on
//! binary cross-entropy.
//!
//! Parameters live in one flat vector ordered `W₁` (row-major), `b₁`, `W₂`, …,
//! which is also the checkpoint layout.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::ricci::LayerTrace;

const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    widths: Vec<usize>,
    params: Vec<f64>,
    seed: u64,
}

/// Offsets of one affine layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct Block {
    rows: usize,
    cols: usize,
    w: usize,
    b: usize,
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::InvalidParameter(
            "an MLP needs an input and an output width".into(),
        ));
    }
    if let Some(i) = widths.iter().position(|&w| w == 0) {
        return Err(Error::InvalidParameter(format!("layer {i} has zero width")));
    }
    if widths[widths.len() - 1] != 1 {
        return Err(Error::InvalidParameter(format!(
            "output width must be 1, got {}",
            widths[widths.len() - 1]
        )));
    }
    Ok(())
}

fn n_params(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Clamped binary cross-entropy of one prediction.
pub fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// `softplus(z) − y·z`, the cross-entropy written in terms of the logit.
fn bce_logit(z: f64, y: f64) -> f64 {
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    softplus - y * z
}

/// `[input_dim, width × depth, 1]`.
pub fn architecture(input_dim: usize, width: usize, depth: usize) -> Vec<usize> {
    let mut widths = vec![input_dim];
    widths.extend(std::iter::repeat_n(width, depth));
    widths.push(1);
    widths
}

impl Mlp {
    /// Uniform `±1/√fan_in` initialization of weights and biases.
    pub fn init(widths: &[usize], seed: u64) -> Result<Self> {
        check_widths(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(n_params(widths));
        for w in widths.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            params.extend((0..w[1] * w[0] + w[1]).map(|_| rng.random_range(-bound..=bound)));
        }
        Ok(Self {
            widths: widths.to_vec(),
            params,
            seed,
        })
    }

    /// Builds a model from per-layer weight matrices (row-major) and biases.
    pub fn from_parameters(
        widths: &[usize],
        weights: &[Vec<f64>],
        biases: &[Vec<f64>],
    ) -> Result<Self> {
        check_widths(widths)?;
        let layers = widths.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::LengthMismatch {
                expected: layers,
                got: weights.len().min(biases.len()),
            });
        }
        let mut params = Vec::with_capacity(n_params(widths));
        for (i, w) in widths.windows(2).enumerate() {
            if weights[i].len() != w[1] * w[0] {
                return Err(Error::LengthMismatch {
                    expected: w[1] * w[0],
                    got: weights[i].len(),
                });
            }
            if biases[i].len() != w[1] {
                return Err(Error::LengthMismatch {
                    expected: w[1],
                    got: biases[i].len(),
                });
            }
            params.extend_from_slice(&weights[i]);
            params.extend_from_slice(&biases[i]);
        }
        Self::from_flat(widths, params, 0)
    }

    fn from_flat(widths: &[usize], params: Vec<f64>, seed: u64) -> Result<Self> {
        check_widths(widths)?;
        if params.len() != n_params(widths) {
            return Err(Error::LengthMismatch {
                expected: n_params(widths),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("non-finite parameter".into()));
        }
        Ok(Self {
            widths: widths.to_vec(),
            params,
            seed,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of hidden layers `L`.
    pub fn depth(&self) -> usize {
        self.widths.len() - 2
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn blocks(&self) -> Vec<Block> {
        let mut offset = 0;
        self.widths
            .windows(2)
            .map(|w| {
                let block = Block {
                    rows: w[1],
                    cols: w[0],
                    w: offset,
                    b: offset + w[1] * w[0],
                };
                offset += w[1] * w[0] + w[1];
                block
            })
            .collect()
    }

    /// Weight matrix of layer `layer` (1-based), row-major.
    pub fn weights(&self, layer: usize) -> &[f64] {
        let b = self.blocks()[layer - 1];
        &self.params[b.w..b.w + b.rows * b.cols]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        let b = self.blocks()[layer - 1];
        &self.params[b.b..b.b + b.rows]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Pre-activations of every layer; the last entry is the output logit.
    fn pre_activations(&self, blocks: &[Block], x: &[f64]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(blocks.len());
        let mut h: Vec<f64> = x.to_vec();
        for (i, b) in blocks.iter().enumerate() {
            let w = &self.params[b.w..b.w + b.rows * b.cols];
            let z: Vec<f64> = (0..b.rows)
                .map(|r| {
                    let row = &w[r * b.cols..(r + 1) * b.cols];
                    row.iter().zip(&h).map(|(a, c)| a * c).sum::<f64>() + self.params[b.b + r]
                })
                .collect();
            if i + 1 < blocks.len() {
                h = z.iter().map(|&v| v.max(0.0)).collect();
            }
            out.push(z);
        }
        out
    }

    fn logit(&self, blocks: &[Block], x: &[f64]) -> f64 {
        self.pre_activations(blocks, x).last().unwrap()[0]
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(sigmoid(self.logit(&self.blocks(), x)))
    }

    fn check_cloud(&self, cloud: &PointCloud) -> Result<()> {
        if cloud.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: cloud.dim(),
            });
        }
        Ok(())
    }

    pub fn predict_proba(&self, cloud: &PointCloud) -> Result<Vec<f64>> {
        self.check_cloud(cloud)?;
        let blocks = self.blocks();
        Ok((0..cloud.len())
            .into_par_iter()
            .map(|i| sigmoid(self.logit(&blocks, cloud.point(i))))
            .collect())
    }

    /// Accuracy and hard predictions (`p ≥ 0.5` maps to class 1).
    pub fn evaluate(&self, cloud: &PointCloud) -> Result<(f64, Vec<u8>)> {
        let labels = cloud.binary_labels()?;
        let preds: Vec<u8> = self
            .predict_proba(cloud)?
            .iter()
            .map(|&p| u8::from(p >= 0.5))
            .collect();
        let correct = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
        Ok((correct as f64 / cloud.len().max(1) as f64, preds))
    }

    /// Mean clamped BCE over a labelled cloud.
    pub fn loss(&self, cloud: &PointCloud) -> Result<f64> {
        let labels = cloud.binary_labels()?;
        let probs = self.predict_proba(cloud)?;
        Ok(probs
            .iter()
            .zip(labels)
            .map(|(&p, &y)| bce(p, f64::from(y)))
            .sum::<f64>()
            / cloud.len().max(1) as f64)
    }

    /// Input cloud followed by the post-ReLU features of every hidden layer.
    pub fn activation_trace(&self, cloud: &PointCloud) -> Result<LayerTrace> {
        self.check_cloud(cloud)?;
        let blocks = self.blocks();
        let per_point: Vec<Vec<Vec<f64>>> = (0..cloud.len())
            .into_par_iter()
            .map(|i| self.pre_activations(&blocks, cloud.point(i)))
            .collect();
        let labels = cloud.labels().map(<[u8]>::to_vec);
        let mut clouds = vec![cloud.clone()];
        for layer in 0..self.depth() {
            let width = self.widths[layer + 1];
            let coords: Vec<f64> = per_point
                .iter()
                .flat_map(|z| z[layer].iter().map(|&v| v.max(0.0)))
                .collect();
            clouds.push(PointCloud::new(width, coords, labels.clone())?);
        }
        LayerTrace::new(clouds)
    }

    /// Gradient of the summed logit cross-entropy over `indices`, added to `grad`.
    fn accumulate_gradient(
        &self,
        blocks: &[Block],
        cloud: &PointCloud,
        labels: &[u8],
        indices: &[usize],
        scale: f64,
        grad: &mut [f64],
    ) -> f64 {
        let mut loss = 0.0;
        for &i in indices {
            let x = cloud.point(i);
            let y = f64::from(labels[i]);
            let zs = self.pre_activations(blocks, x);
            let logit = zs.last().unwrap()[0];
            loss += bce(sigmoid(logit), y);
            let mut delta = vec![(sigmoid(logit) - y) * scale];
            for li in (0..blocks.len()).rev() {
                let b = blocks[li];
                let h: Vec<f64> = if li == 0 {
                    x.to_vec()
                } else {
                    zs[li - 1].iter().map(|&v| v.max(0.0)).collect()
                };
                for r in 0..b.rows {
                    let d = delta[r];
                    if d == 0.0 {
                        continue;
                    }
                    grad[b.b + r] += d;
                    let row = &mut grad[b.w + r * b.cols..b.w + (r + 1) * b.cols];
                    for (g, &hv) in row.iter_mut().zip(&h) {
                        *g += d * hv;
                    }
                }
                if li > 0 {
                    let w = &self.params[b.w..b.w + b.rows * b.cols];
                    delta = (0..b.cols)
                        .map(|c| {
                            if zs[li - 1][c] > 0.0 {
                                (0..b.rows).map(|r| w[r * b.cols + c] * delta[r]).sum()
                            } else {
                                0.0
                            }
                        })
                        .collect();
                }
            }
        }
        loss
    }

    /// Mean-loss gradient over `indices`.
    pub fn gradient(&self, cloud: &PointCloud, indices: &[usize]) -> Result<Vec<f64>> {
        self.check_cloud(cloud)?;
        let labels = cloud.binary_labels()?;
        let mut grad = vec![0.0; self.n_params()];
        let scale = 1.0 / indices.len().max(1) as f64;
        self.accumulate_gradient(&self.blocks(), cloud, labels, indices, scale, &mut grad);
        Ok(grad)
    }

    /// Compares backprop against central differences of the mean cross-entropy.
    pub fn gradient_check(&self, batch: &PointCloud) -> Result<GradientCheck> {
        let labels = batch.binary_labels()?;
        let all: Vec<usize> = (0..batch.len()).collect();
        let analytic = self.gradient(batch, &all)?;
        let blocks = self.blocks();
        let patterns = |m: &Mlp| -> Vec<Vec<bool>> {
            (0..batch.len())
                .map(|i| {
                    let zs = m.pre_activations(&blocks, batch.point(i));
                    zs[..zs.len() - 1]
                        .iter()
                        .flat_map(|z| z.iter().map(|&v| v > 0.0))
                        .collect()
                })
                .collect()
        };
        let loss = |m: &Mlp| -> f64 {
            (0..batch.len())
                .map(|i| bce_logit(m.logit(&blocks, batch.point(i)), f64::from(labels[i])))
                .sum::<f64>()
                / batch.len() as f64
        };
        let base = patterns(self);
        let mut report = GradientCheck::default();
        let mut probe = self.clone();
        for (j, &a) in analytic.iter().enumerate() {
            probe.params[j] = self.params[j] + GRAD_CHECK_STEP;
            let (plus, plus_pattern) = (loss(&probe), patterns(&probe));
            probe.params[j] = self.params[j] - GRAD_CHECK_STEP;
            let (minus, minus_pattern) = (loss(&probe), patterns(&probe));
            probe.params[j] = self.params[j];
            if plus_pattern != base || minus_pattern != base {
                report.excluded_kink += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
            let denom = a.abs().max(numeric.abs());
            if denom < GRAD_CHECK_FLOOR {
                report.skipped_small += 1;
                continue;
            }
            report.compared += 1;
            report.max_relative_error = report.max_relative_error.max((a - numeric).abs() / denom);
        }
        Ok(report)
    }

    /// Writes the checkpoint: one JSON header line, then the parameters as
    /// little-endian `f64`.
    pub fn write_checkpoint<W: Write>(&self, mut w: W, epoch: usize) -> Result<()> {
        let header = CheckpointHeader {
            widths: self.widths.clone(),
            seed: self.seed,
            epoch,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(mut r: R) -> Result<(Self, usize)> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: CheckpointHeader = serde_json::from_str(line.trim_end())?;
        check_widths(&header.widths)?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let expected = n_params(&header.widths) * 8;
        if bytes.len() != expected {
            return Err(Error::Truncated(format!(
                "checkpoint parameter block has {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        let params = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((
            Self::from_flat(&header.widths, params, header.seed)?,
            header.epoch,
        ))
    }
}

pub const GRAD_CHECK_STEP: f64 = 1e-5;
const GRAD_CHECK_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub compared: usize,
    pub skipped_small: usize,
    /// Parameters whose perturbation flips some ReLU on the batch.
    pub excluded_kink: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    widths: Vec<usize>,
    seed: u64,
    epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// 0 means full batch.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub target_train_accuracy: f64,
    pub stop_at_target: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Hook period in epochs; 0 disables the hook.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 64,
            max_epochs: 500,
            target_train_accuracy: 0.99,
            stop_at_target: true,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            checkpoint_every: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(self.target_train_accuracy > 0.0 && self.target_train_accuracy <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "target accuracy must lie in (0, 1], got {}",
                self.target_train_accuracy
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidParameter("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub coefficient: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Epoch 0 is the untrained model.
    pub epochs: Vec<EpochRecord>,
    pub reached_target: bool,
    /// Epoch at which a hook requested a stop.
    pub stopped_by_hook: Option<usize>,
}

impl TrainLog {
    pub fn final_record(&self) -> &EpochRecord {
        self.epochs.last().expect("a train log always holds epoch 0")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "epoch,train_loss,train_accuracy,test_loss,test_accuracy,coefficient"
        )?;
        let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.epochs {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.epoch,
                r.train_loss,
                r.train_accuracy,
                f(r.test_loss),
                f(r.test_accuracy),
                f(r.coefficient)
            )?;
        }
        Ok(())
    }
}

/// What a checkpoint hook reports back to the training loop.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HookOutcome {
    pub coefficient: Option<f64>,
    pub stop: bool,
}

/// Trains with Adam on mean BCE. `hook(epoch, model)` runs at epoch 0 and
/// every `checkpoint_every` epochs after.
pub fn train<F>(
    model: &mut Mlp,
    train_cloud: &PointCloud,
    test_cloud: Option<&PointCloud>,
    config: &TrainConfig,
    mut hook: F,
) -> Result<TrainLog>
where
    F: FnMut(usize, &Mlp) -> Result<HookOutcome>,
{
    config.validate()?;
    model.check_cloud(train_cloud)?;
    let labels = train_cloud.binary_labels()?;
    if let Some(t) = test_cloud {
        model.check_cloud(t)?;
        t.binary_labels()?;
    }
    let n = train_cloud.len();
    if n == 0 {
        return Err(Error::EmptyCloud);
    }
    let batch = if config.batch_size == 0 {
        n
    } else {
        config.batch_size.min(n)
    };
    let blocks = model.blocks();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let (mut m1, mut m2) = (vec![0.0; model.n_params()], vec![0.0; model.n_params()]);
    let mut grad = vec![0.0; model.n_params()];
    let mut step = 0i32;
    let mut log = TrainLog {
        epochs: Vec::new(),
        reached_target: false,
        stopped_by_hook: None,
    };

    for epoch in 0..=config.max_epochs {
        if epoch > 0 {
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let scale = 1.0 / chunk.len() as f64;
                model.accumulate_gradient(&blocks, train_cloud, labels, chunk, scale, &mut grad);
                step += 1;
                let c1 = 1.0 - config.beta1.powi(step);
                let c2 = 1.0 - config.beta2.powi(step);
                for (j, &g) in grad.iter().enumerate() {
                    m1[j] = config.beta1 * m1[j] + (1.0 - config.beta1) * g;
                    m2[j] = config.beta2 * m2[j] + (1.0 - config.beta2) * g * g;
                    let update = (m1[j] / c1) / ((m2[j] / c2).sqrt() + config.epsilon);
                    model.params[j] -= config.learning_rate * update;
                }
            }
        }
        let train_loss = model.loss(train_cloud)?;
        if !train_loss.is_finite() || model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                loss: train_loss,
            });
        }
        let (train_accuracy, _) = model.evaluate(train_cloud)?;
        let (test_loss, test_accuracy) = match test_cloud {
            Some(t) => (Some(model.loss(t)?), Some(model.evaluate(t)?.0)),
            None => (None, None),
        };
        let mut record = EpochRecord {
            epoch,
            train_loss,
            train_accuracy,
            test_loss,
            test_accuracy,
            coefficient: None,
        };
        let mut stop = false;
        if config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 {
            let outcome = hook(epoch, model)?;
            record.coefficient = outcome.coefficient;
            if outcome.stop {
                log.stopped_by_hook = Some(epoch);
                stop = true;
            }
        }
        log.epochs.push(record);
        if train_accuracy >= config.target_train_accuracy {
            log.reached_target = true;
            if config.stop_at_target {
                stop = true;
            }
        }
        if stop {
            break;
        }
    }
    Ok(log)
}

/// A hook that records nothing and never stops.
pub fn no_hook(_: usize, _: &Mlp) -> Result<HookOutcome> {
    Ok(HookOutcome::default())
}
