//! Local Ricci coefficient tables over datasets, architectures and seeds.

use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use ricci_core::curvature::CurvatureMethod;
use ricci_core::ricci::{coefficient_reports, k_for_fraction, CoefficientReport, SUMMARY_HEADER};
use ricci_core::stats;
use serde::{Deserialize, Serialize};

use crate::config::{Architecture, TableConfig};
use crate::error::Result;
use crate::runs::{dataset_label, fit_seed, load_dataset, opt, require_some_included, write_file, SeedModel};

pub const TABLE_HEADER: &str = "dataset,width,depth,trained,method,mean,std,frac_negative,n_defined,n_seeds,global_mean,global_negative_share";
pub const SEEDS_HEADER: &str = "seed,included,epochs,train_accuracy,test_accuracy,global";

/// Aggregate over the included seeds of one (dataset, architecture, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub dataset: String,
    pub architecture: Architecture,
    pub trained: bool,
    pub method: CurvatureMethod,
    /// Mean of the per-seed mean local coefficients.
    pub mean: Option<f64>,
    /// Population standard deviation of the per-seed means.
    pub std: Option<f64>,
    /// Negative share over all defined vertices of all included seeds.
    pub frac_negative: Option<f64>,
    pub n_defined: usize,
    pub n_seeds: usize,
    pub global_mean: Option<f64>,
    /// Share of included seeds whose global coefficient is defined and negative.
    pub global_negative_share: Option<f64>,
    pub per_seed_means: Vec<Option<f64>>,
    pub per_seed_globals: Vec<Option<f64>>,
}

impl CellSummary {
    pub fn summary_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.method,
            opt(self.mean),
            opt(self.std),
            opt(self.frac_negative),
            self.n_defined
        )
    }

    fn table_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.dataset,
            self.architecture.width,
            self.architecture.depth,
            self.trained,
            self.summary_row(),
            self.n_seeds,
            opt(self.global_mean),
            opt(self.global_negative_share)
        )
    }
}

/// Aggregates one method's reports; `reports[i]` belongs to the i-th included seed.
pub fn aggregate(
    dataset: &str,
    architecture: Architecture,
    trained: bool,
    method: CurvatureMethod,
    reports: &[&CoefficientReport],
) -> CellSummary {
    let per_seed_means: Vec<Option<f64>> = reports.iter().map(|r| r.mean_local).collect();
    let per_seed_globals: Vec<Option<f64>> = reports.iter().map(|r| r.global).collect();
    let means: Vec<f64> = per_seed_means.iter().flatten().copied().collect();
    let pooled: Vec<f64> = reports
        .iter()
        .flat_map(|r| r.local.iter().flatten().copied())
        .collect();
    let globals: Vec<f64> = per_seed_globals.iter().flatten().copied().collect();
    let n_seeds = reports.len();
    CellSummary {
        dataset: dataset.to_string(),
        architecture,
        trained,
        method,
        mean: stats::mean(&means),
        std: stats::population_std(&means),
        frac_negative: stats::frac_negative(&pooled),
        n_defined: pooled.len(),
        n_seeds,
        global_mean: stats::mean(&globals),
        global_negative_share: (n_seeds > 0)
            .then(|| globals.iter().filter(|&&g| g < 0.0).count() as f64 / n_seeds as f64),
        per_seed_means,
        per_seed_globals,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableOutcome {
    pub cells: Vec<CellSummary>,
    pub excluded_seeds: Vec<(String, Architecture, u64)>,
}

struct SeedResult {
    run: SeedModel,
    reports: Vec<CoefficientReport>,
}

fn evaluate_seed(
    cfg: &TableConfig,
    train: &ricci_core::PointCloud,
    test: &ricci_core::PointCloud,
    arch: Architecture,
    seed: u64,
) -> Result<SeedResult> {
    let run = fit_seed(train, test, arch, &cfg.train, seed, cfg.trained)?;
    let reports = if run.included {
        let trace = run.model.activation_trace(test)?;
        let k = k_for_fraction(test.len(), cfg.k_fraction)?;
        coefficient_reports(&trace, k, &cfg.methods, cfg.distance_mode)?
    } else {
        Vec::new()
    };
    Ok(SeedResult { run, reports })
}

fn write_seed(root: &Path, dir: &Path, res: &SeedResult) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    if let Some(log) = &res.run.log {
        files.push(write_file(root, dir.join("train_log.csv"), |w| Ok(log.write_csv(w)?))?);
    }
    for r in &res.reports {
        files.push(write_file(root, dir.join(format!("local_{}.csv", r.method)), |w| {
            Ok(r.write_local_csv(w)?)
        })?);
        files.push(write_file(root, dir.join(format!("layers_{}.csv", r.method)), |w| {
            writeln!(w, "layer,value")?;
            for l in &r.layer {
                writeln!(w, "{},{}", l.layer, opt(l.value))?;
            }
            Ok(())
        })?);
    }
    Ok(files)
}

/// Trains (or initializes) every seed of every cell, computes coefficient
/// reports on the test cloud and writes per-vertex, per-cell and overall CSVs.
pub fn run_table(cfg: &TableConfig, out: &Path) -> Result<(TableOutcome, Vec<PathBuf>)> {
    cfg.validate()?;
    let mut files = Vec::new();
    let mut cells = Vec::new();
    let mut excluded_seeds = Vec::new();
    for spec in &cfg.datasets {
        let label = dataset_label(spec);
        let (train, test) = load_dataset(spec)?;
        for &arch in &cfg.architectures {
            let cell_dir = PathBuf::from(&label).join(arch.label());
            let results: Vec<SeedResult> = cfg
                .seeds
                .par_iter()
                .map(|&seed| evaluate_seed(cfg, &train, &test, arch, seed))
                .collect::<Result<_>>()?;
            let runs: Vec<SeedModel> = results.iter().map(|r| r.run.clone()).collect();
            if cfg.trained {
                require_some_included(&runs)?;
            }
            for res in &results {
                let dir = cell_dir.join(format!("seed_{}", res.run.seed));
                files.extend(write_seed(out, &dir, res)?);
                if !res.run.included {
                    excluded_seeds.push((label.clone(), arch, res.run.seed));
                }
            }
            files.push(write_file(out, cell_dir.join("seeds.csv"), |w| {
                writeln!(w, "{SEEDS_HEADER}")?;
                for res in &results {
                    let r = &res.run;
                    let global = res.reports.first().and_then(|rep| rep.global);
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        r.seed,
                        r.included,
                        r.epochs(),
                        r.train_accuracy,
                        r.test_accuracy,
                        opt(global)
                    )?;
                }
                Ok(())
            })?);
            let cell: Vec<CellSummary> = cfg
                .methods
                .iter()
                .enumerate()
                .map(|(m, &method)| {
                    let reports: Vec<&CoefficientReport> = results
                        .iter()
                        .filter(|r| r.run.included)
                        .map(|r| &r.reports[m])
                        .collect();
                    aggregate(&label, arch, cfg.trained, method, &reports)
                })
                .collect();
            files.push(write_file(out, cell_dir.join("summary.csv"), |w| {
                writeln!(w, "{SUMMARY_HEADER}")?;
                for c in &cell {
                    writeln!(w, "{}", c.summary_row())?;
                }
                Ok(())
            })?);
            for c in &cell {
                info!(
                    "{label} {} {}: mean {} frac_negative {} global_negative_share {}",
                    arch.label(),
                    c.method,
                    opt(c.mean),
                    opt(c.frac_negative),
                    opt(c.global_negative_share)
                );
            }
            cells.extend(cell);
        }
    }
    files.push(write_file(out, "table.csv", |w| {
        writeln!(w, "{TABLE_HEADER}")?;
        for c in &cells {
            writeln!(w, "{}", c.table_row())?;
        }
        Ok(())
    })?);
    Ok((
        TableOutcome {
            cells,
            excluded_seeds,
        },
        files,
    ))
}
