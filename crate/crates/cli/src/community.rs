//! Community structure of the test cloud across the layers of trained networks.

use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use ricci_core::community::{community_report, filter_misclassified, CommunityReport, Partition};
use ricci_core::curvature::{curvature_field, CurvatureMethod};
use ricci_core::ricci::k_for_fraction;
use ricci_core::{build_knn_graph, PointCloud};
use serde::{Deserialize, Serialize};

use crate::config::CommunityConfig;
use crate::error::Result;
use crate::runs::{dataset_label, fit_seed, load_dataset, opt, require_some_included, write_file};

pub const COMMUNITY_HEADER: &str = "layer,modularity,ncut,curvature_gap,lambda2,n_inter_edges";
pub const COMMUNITY_SUMMARY_HEADER: &str = "dataset,seed,included,n_misclassified,first_modularity,final_modularity,first_ncut,final_ncut,final_gap,final_gap_filtered";

/// Per-layer reports for one seed, on the full test cloud and on the cloud
/// without misclassified points. Index `ℓ` is layer `ℓ` (0 = input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunitySeries {
    pub dataset: String,
    pub seed: u64,
    pub included: bool,
    pub n_misclassified: usize,
    pub full: Vec<CommunityReport>,
    /// `None` when the correctly classified points form a single class or
    /// are too few for a `k`-NN graph.
    pub filtered: Option<Vec<CommunityReport>>,
}

impl CommunitySeries {
    /// Layer 1, the first hidden layer.
    pub fn first(&self) -> Option<&CommunityReport> {
        self.full.get(1)
    }

    pub fn last(&self) -> Option<&CommunityReport> {
        self.full.last()
    }

    pub fn last_filtered(&self) -> Option<&CommunityReport> {
        self.filtered.as_ref()?.last()
    }
}

fn layer_report(cloud: &PointCloud, k: usize, method: CurvatureMethod) -> Result<CommunityReport> {
    let g = build_knn_graph(cloud, k.min(cloud.len() - 1))?;
    let field = curvature_field(&g, method);
    Ok(community_report(&g, &field, &Partition::from_cloud(cloud)?)?)
}

/// Modularity, normalized cut, curvature gap and algebraic connectivity of
/// every layer's kNN graph under the true labels. The filtered series uses
/// the same `k` on the correctly classified points only.
pub fn community_series(
    trace: &ricci_core::ricci::LayerTrace,
    predictions: &[u8],
    k: usize,
    method: CurvatureMethod,
) -> Result<(Vec<CommunityReport>, Option<Vec<CommunityReport>>, usize)> {
    let full: Vec<CommunityReport> = trace
        .clouds()
        .iter()
        .map(|c| layer_report(c, k, method))
        .collect::<Result<_>>()?;
    let (kept_cloud, kept) = filter_misclassified(trace.cloud(0), predictions)?;
    let n_misclassified = trace.n_points() - kept.len();
    let filtered = if n_misclassified == 0 {
        Some(full.clone())
    } else if kept.len() <= k || Partition::from_cloud(&kept_cloud)?.is_single_class() {
        warn!("only {} correctly classified points; filtered series undefined", kept.len());
        None
    } else {
        Some(
            trace
                .clouds()
                .iter()
                .map(|c| layer_report(&c.select(&kept)?, k, method))
                .collect::<Result<_>>()?,
        )
    };
    Ok((full, filtered, n_misclassified))
}

fn write_series<W: Write>(w: &mut W, reports: &[CommunityReport]) -> Result<()> {
    writeln!(w, "{COMMUNITY_HEADER}")?;
    for (layer, r) in reports.iter().enumerate() {
        writeln!(
            w,
            "{layer},{},{},{},{},{}",
            r.modularity,
            r.ncut,
            opt(r.curvature_gap),
            r.lambda2,
            r.n_inter_edges
        )?;
    }
    Ok(())
}

pub fn run_community(cfg: &CommunityConfig, out: &Path) -> Result<(Vec<CommunitySeries>, Vec<PathBuf>)> {
    cfg.validate()?;
    let mut files = Vec::new();
    let mut all = Vec::new();
    for spec in &cfg.datasets {
        let label = dataset_label(spec);
        let (train, test) = load_dataset(spec)?;
        let k = k_for_fraction(test.len(), cfg.k_fraction)?;
        let runs = cfg
            .seeds
            .par_iter()
            .map(|&seed| fit_seed(&train, &test, cfg.architecture, &cfg.train, seed, true))
            .collect::<Result<Vec<_>>>()?;
        require_some_included(&runs)?;
        let series: Vec<CommunitySeries> = runs
            .par_iter()
            .map(|run| -> Result<CommunitySeries> {
                let (full, filtered, n_misclassified) = if run.included {
                    let trace = run.model.activation_trace(&test)?;
                    let (_, predictions) = run.model.evaluate(&test)?;
                    community_series(&trace, &predictions, k, cfg.method)?
                } else {
                    (Vec::new(), None, 0)
                };
                Ok(CommunitySeries {
                    dataset: label.clone(),
                    seed: run.seed,
                    included: run.included,
                    n_misclassified,
                    full,
                    filtered,
                })
            })
            .collect::<Result<_>>()?;
        for s in series.iter().filter(|s| s.included) {
            let dir = PathBuf::from(&label).join(format!("seed_{}", s.seed));
            files.push(write_file(out, dir.join("community.csv"), |w| write_series(w, &s.full))?);
            if let Some(filtered) = &s.filtered {
                files.push(write_file(out, dir.join("community_filtered.csv"), |w| {
                    write_series(w, filtered)
                })?);
            }
        }
        all.extend(series);
    }
    files.push(write_file(out, "community_summary.csv", |w| {
        writeln!(w, "{COMMUNITY_SUMMARY_HEADER}")?;
        for s in &all {
            let f = |r: Option<&CommunityReport>, g: fn(&CommunityReport) -> Option<f64>| {
                opt(r.and_then(g))
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                s.dataset,
                s.seed,
                s.included,
                s.n_misclassified,
                f(s.first(), |r| Some(r.modularity)),
                f(s.last(), |r| Some(r.modularity)),
                f(s.first(), |r| Some(r.ncut)),
                f(s.last(), |r| Some(r.ncut)),
                f(s.last(), |r| r.curvature_gap),
                f(s.last_filtered(), |r| r.curvature_gap)
            )?;
        }
        Ok(())
    })?);
    Ok((all, files))
}
