//! Layer coefficients across network depths and the critical-depth pick.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use ricci_core::ricci::{coefficient_report, k_for_fraction};
use ricci_core::stats;
use serde::{Deserialize, Serialize};

use crate::config::{Architecture, DepthSweepConfig};
use crate::error::{CliError, Result};
use crate::runs::{fit_seed, load_dataset, opt, write_file, write_json};

pub const SWEEP_HEADER: &str = "depth,layer,rho_mean,n_seeds";
pub const DEPTH_SUMMARY_HEADER: &str = "depth,score,turning_layer,test_accuracy_mean";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMean {
    pub layer: usize,
    /// Mean of `ρ(ℓ)` over the included seeds where it is defined.
    pub rho_mean: Option<f64>,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthResult {
    pub depth: usize,
    pub layers: Vec<LayerMean>,
    /// Mean over layers of the seed-averaged layer coefficients.
    pub score: Option<f64>,
    /// Layer with the smallest seed-averaged coefficient.
    pub turning_layer: Option<usize>,
    pub test_accuracy_mean: Option<f64>,
    pub included_seeds: Vec<u64>,
    pub excluded_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub recommended_depth: usize,
    /// Depth with the highest seed-averaged test accuracy, for comparison.
    pub accuracy_best_depth: Option<usize>,
    pub depths: Vec<DepthResult>,
}

fn argmin_by<T: Copy>(items: impl Iterator<Item = (T, Option<f64>)>) -> Option<T> {
    let mut best: Option<(T, f64)> = None;
    for (key, v) in items {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((key, v));
            }
        }
    }
    best.map(|(k, _)| k)
}

/// Depth with the smallest score; ties keep the earlier (listed first) depth.
pub fn recommend(depths: &[DepthResult]) -> Result<usize> {
    argmin_by(depths.iter().map(|d| (d.depth, d.score))).ok_or(CliError::InsufficientVariance)
}

/// Seed-averages layer coefficients; `per_seed[s][ℓ − 1]` is seed `s`'s `ρ(ℓ)`.
pub fn summarize_depth(depth: usize, per_seed: &[Vec<Option<f64>>]) -> (Vec<LayerMean>, Option<f64>, Option<usize>) {
    let layers: Vec<LayerMean> = (1..depth)
        .map(|layer| {
            let vals: Vec<f64> = per_seed
                .iter()
                .filter_map(|s| s.get(layer - 1).copied().flatten())
                .collect();
            LayerMean {
                layer,
                rho_mean: stats::mean(&vals),
                n_seeds: vals.len(),
            }
        })
        .collect();
    let defined: Vec<f64> = layers.iter().filter_map(|l| l.rho_mean).collect();
    let turning = argmin_by(layers.iter().map(|l| (l.layer, l.rho_mean)));
    (layers, stats::mean(&defined), turning)
}

pub fn run_depth_sweep(cfg: &DepthSweepConfig, out: &Path) -> Result<(Recommendation, Vec<PathBuf>)> {
    cfg.validate()?;
    let (train, test) = load_dataset(&cfg.dataset)?;
    let k = k_for_fraction(test.len(), cfg.k_fraction)?;
    let mut files = Vec::new();
    let mut depths = Vec::new();
    let mut any_included = false;
    let mut depth_list = cfg.depths.clone();
    depth_list.sort_unstable();
    depth_list.dedup();
    for &depth in &depth_list {
        let arch = Architecture {
            width: cfg.width,
            depth,
        };
        let seeds: Vec<(u64, bool, f64, Vec<Option<f64>>)> = cfg
            .seeds
            .par_iter()
            .map(|&seed| -> Result<_> {
                let run = fit_seed(&train, &test, arch, &cfg.train, seed, true)?;
                let layers = if run.included {
                    let trace = run.model.activation_trace(&test)?;
                    let report = coefficient_report(&trace, k, cfg.method, cfg.distance_mode)?;
                    report.layer.iter().map(|l| l.value).collect()
                } else {
                    Vec::new()
                };
                Ok((seed, run.included, run.test_accuracy, layers))
            })
            .collect::<Result<_>>()?;
        let included: Vec<&(u64, bool, f64, Vec<Option<f64>>)> =
            seeds.iter().filter(|s| s.1).collect();
        any_included |= !included.is_empty();
        for (seed, _, _, layers) in &included {
            let rel = PathBuf::from(format!("depth_{depth}")).join(format!("seed_{seed}")).join("layers.csv");
            files.push(write_file(out, rel, |w| {
                writeln!(w, "layer,value")?;
                for (i, v) in layers.iter().enumerate() {
                    writeln!(w, "{},{}", i + 1, opt(*v))?;
                }
                Ok(())
            })?);
        }
        let per_seed: Vec<Vec<Option<f64>>> = included.iter().map(|s| s.3.clone()).collect();
        let (layers, score, turning_layer) = summarize_depth(depth, &per_seed);
        let accs: Vec<f64> = included.iter().map(|s| s.2).collect();
        depths.push(DepthResult {
            depth,
            layers,
            score,
            turning_layer,
            test_accuracy_mean: stats::mean(&accs),
            included_seeds: included.iter().map(|s| s.0).collect(),
            excluded_seeds: seeds.iter().filter(|s| !s.1).map(|s| s.0).collect(),
        });
    }
    if !any_included {
        return Err(CliError::AllSeedsFailed(cfg.seeds.len() * depth_list.len()));
    }
    files.push(write_file(out, "depth_sweep.csv", |w| {
        writeln!(w, "{SWEEP_HEADER}")?;
        for d in &depths {
            for l in &d.layers {
                writeln!(w, "{},{},{},{}", d.depth, l.layer, opt(l.rho_mean), l.n_seeds)?;
            }
        }
        Ok(())
    })?);
    files.push(write_file(out, "depth_summary.csv", |w| {
        writeln!(w, "{DEPTH_SUMMARY_HEADER}")?;
        for d in &depths {
            let turning = d.turning_layer.map(|l| l.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{turning},{}", d.depth, opt(d.score), opt(d.test_accuracy_mean))?;
        }
        Ok(())
    })?);
    let recommended_depth = recommend(&depths)?;
    let accuracy_best_depth = argmin_by(depths.iter().map(|d| (d.depth, d.test_accuracy_mean.map(|a| -a))));
    let rec = Recommendation {
        recommended_depth,
        accuracy_best_depth,
        depths,
    };
    files.push(write_json(out, "recommendation.json", &rec)?);
    Ok((rec, files))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(depth: usize, score: Option<f64>) -> DepthResult {
        DepthResult {
            depth,
            layers: Vec::new(),
            score,
            turning_layer: None,
            test_accuracy_mean: None,
            included_seeds: Vec::new(),
            excluded_seeds: Vec::new(),
        }
    }

    #[test]
    fn single_candidate_is_returned() {
        assert_eq!(recommend(&[result(7, Some(0.3))]).unwrap(), 7);
    }

    #[test]
    fn undefined_everywhere_is_insufficient_variance() {
        let err = recommend(&[result(5, None), result(7, None)]).unwrap_err();
        assert!(matches!(err, CliError::InsufficientVariance));
        assert!(err.to_string().contains("insufficient variance"));
    }

    #[test]
    fn argmin_with_ties_to_smaller_depth() {
        let depths = [result(5, Some(-0.2)), result(7, Some(-0.4)), result(10, Some(-0.4)), result(15, None)];
        assert_eq!(recommend(&depths).unwrap(), 7);
    }

    #[test]
    fn layer_means_skip_undefined_seeds() {
        let per_seed = vec![vec![Some(-0.2), None, Some(0.1)], vec![Some(-0.4), None, Some(0.3)]];
        let (layers, score, turning) = summarize_depth(4, &per_seed);
        assert_eq!(layers.len(), 3);
        assert!((layers[0].rho_mean.unwrap() + 0.3).abs() < 1e-15);
        assert_eq!(layers[1].rho_mean, None);
        assert_eq!(layers[1].n_seeds, 0);
        assert!((score.unwrap() + 0.05).abs() < 1e-15);
        assert_eq!(turning, Some(1));
    }
}
