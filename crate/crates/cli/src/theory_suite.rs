//! Preservation curves of random linear networks, ReLU rewiring batch and
//! the two-layer gradient-descent width sweep.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use ricci_core::datasets::unit_ball_sample;
use ricci_core::theory::{
    preservation_trial, relu_rewire, two_layer_gd_run, GraphKind, PreservationCurve, RewireCase,
};
use ricci_core::PointCloud;
use serde::{Deserialize, Serialize};

use crate::config::{GdConfig, PreservationConfig, RewireConfig, TheoryConfig};
use crate::error::Result;
use crate::runs::{write_file, write_json};

pub const GD_HEADER: &str = "width,runs,steps,fraction_preserved,fraction_preserved_initial,mean_final_loss";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreservationResult {
    pub curve: PreservationCurve,
    /// Empirical proportion at the width the preservation bound requires, when finite.
    pub proportion_at_bound: Option<f64>,
}

pub fn preservation_suite(cfg: &PreservationConfig) -> Result<Vec<PreservationResult>> {
    let cloud = unit_ball_sample(cfg.n_points, cfg.dim, cfg.seed)?;
    let kinds = [GraphKind::Knn { k: cfg.k }, GraphKind::Radius { r: cfg.r }];
    let mut out = Vec::new();
    for kind in kinds {
        for &depth in &cfg.depths {
            let curve = preservation_trial(
                &cloud, kind, &cfg.widths, depth, cfg.trials, cfg.delta, cfg.route, cfg.seed,
            )?;
            let proportion_at_bound = match curve.theoretical_width_bound {
                Some(m) => {
                    let m = usize::try_from(m).unwrap_or(usize::MAX);
                    let at = preservation_trial(
                        &cloud, kind, &[m], depth, cfg.trials, cfg.delta, cfg.route, cfg.seed,
                    )?;
                    Some(at.proportion_preserved[0])
                }
                None => None,
            };
            out.push(PreservationResult {
                curve,
                proportion_at_bound,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewireReport {
    pub triples: usize,
    pub reversed: usize,
    pub max_orthogonality_error: f64,
    /// Smallest `‖f(x) − f(z)‖ − ‖f(x) − f(y)‖` over the batch.
    pub min_margin: f64,
    pub general: usize,
    pub zero_x: usize,
    pub y_parallel_x: usize,
    /// Indices of triples where the order was not reversed.
    pub failures: Vec<usize>,
}

fn gaussian_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm()
}

/// Random Gaussian triples with `‖x − y‖ > ‖x − z‖`, each fed through the
/// rewiring construction and checked for orthogonality and order reversal.
pub fn rewire_batch(cfg: &RewireConfig) -> Result<RewireReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = RewireReport {
        min_margin: f64::INFINITY,
        ..RewireReport::default()
    };
    for t in 0..cfg.triples {
        let n = rng.random_range(cfg.min_dim..=cfg.max_dim);
        let x = DVector::from_vec(gaussian_vec(n, &mut rng));
        let mut y = DVector::from_vec(gaussian_vec(n, &mut rng));
        let mut z = DVector::from_vec(gaussian_vec(n, &mut rng));
        if dist(&x, &y) < dist(&x, &z) {
            std::mem::swap(&mut y, &mut z);
        }
        let r = relu_rewire(x.as_slice(), y.as_slice(), z.as_slice())?;
        let gram: DMatrix<f64> = r.a.transpose() * &r.a - DMatrix::identity(n, n);
        report.max_orthogonality_error = report.max_orthogonality_error.max(gram.amax());
        let (fx, fy, fz) = (r.apply(&x), r.apply(&y), r.apply(&z));
        let margin = dist(&fx, &fz) - dist(&fx, &fy);
        report.min_margin = report.min_margin.min(margin);
        if margin > 0.0 {
            report.reversed += 1;
        } else {
            report.failures.push(t);
        }
        match r.case {
            RewireCase::General => report.general += 1,
            RewireCase::ZeroX => report.zero_x += 1,
            RewireCase::YParallelX => report.y_parallel_x += 1,
        }
        report.triples += 1;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdRow {
    pub width: usize,
    pub runs: usize,
    pub steps: usize,
    /// Share of runs whose final pre-activation kNN graph equals the input kNN graph.
    pub fraction_preserved: f64,
    /// Share of runs whose final pre-activation kNN graph equals the one at step 0.
    pub fraction_preserved_initial: f64,
    pub mean_final_loss: f64,
}

/// Unit-norm Gaussian inputs with random `±1` targets.
pub fn gd_problem(cfg: &GdConfig) -> Result<(PointCloud, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rows: Vec<Vec<f64>> = (0..cfg.n_points)
        .map(|_| {
            let v = gaussian_vec(cfg.dim, &mut rng);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / norm).collect()
        })
        .collect();
    let targets = (0..cfg.n_points)
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    Ok((PointCloud::from_rows(&rows, None)?, targets))
}

pub fn gd_sweep(cfg: &GdConfig) -> Result<Vec<GdRow>> {
    let (cloud, targets) = gd_problem(cfg)?;
    cfg.widths
        .iter()
        .map(|&width| {
            let runs = (0..cfg.runs)
                .into_par_iter()
                .map(|r| {
                    two_layer_gd_run(
                        &cloud,
                        &targets,
                        cfg.k,
                        width,
                        cfg.steps,
                        cfg.learning_rate,
                        cfg.seed.wrapping_add(r as u64),
                    )
                })
                .collect::<ricci_core::Result<Vec<_>>>()?;
            let n = runs.len() as f64;
            let share = |f: &dyn Fn(&ricci_core::theory::GdRun) -> bool| {
                runs.iter().filter(|r| f(r)).count() as f64 / n
            };
            Ok(GdRow {
                width,
                runs: runs.len(),
                steps: cfg.steps,
                fraction_preserved: share(&|r| r.final_preserved_vs_input()),
                fraction_preserved_initial: share(&|r| *r.preserved_vs_initial.last().unwrap_or(&false)),
                mean_final_loss: runs.iter().map(|r| *r.losses.last().unwrap_or(&f64::NAN)).sum::<f64>() / n,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryOutcome {
    pub preservation: Vec<PreservationResult>,
    pub rewire: RewireReport,
    pub gd: Vec<GdRow>,
}

pub fn run_theory_suite(cfg: &TheoryConfig, out: &Path) -> Result<(TheoryOutcome, Vec<PathBuf>)> {
    cfg.validate()?;
    let preservation = preservation_suite(&cfg.preservation)?;
    let rewire = rewire_batch(&cfg.rewire)?;
    let gd = gd_sweep(&cfg.gd)?;
    let curves: Vec<PreservationCurve> = preservation.iter().map(|p| p.curve.clone()).collect();
    let files = vec![
        write_file(out, "preservation.csv", |w| Ok(PreservationCurve::write_csv(&curves, w)?))?,
        write_json(out, "preservation.json", &preservation)?,
        write_json(out, "rewire.json", &rewire)?,
        write_file(out, "gd.csv", |w| {
            writeln!(w, "{GD_HEADER}")?;
            for r in &gd {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    r.width, r.runs, r.steps, r.fraction_preserved, r.fraction_preserved_initial, r.mean_final_loss
                )?;
            }
            Ok(())
        })?,
    ];
    Ok((
        TheoryOutcome {
            preservation,
            rewire,
            gd,
        },
        files,
    ))
}
