//! Local, layer and global Ricci coefficients of a layer trace.
//!
//! A trace holds the input cloud at index 0 and the hidden representations
//! `Φ_1(X), …, Φ_L(X)` after it. Local coefficients correlate, per vertex and
//! across layers `ℓ = 1..L−1`, the neighborhood expansion `η_ℓ(x)` with the
//! scalar curvature `O_ℓ(x)`.

use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::curvature::{curvature_field, CurvatureField, CurvatureMethod};
use crate::error::{Error, Result};
use crate::graph::{build_knn_graph, NeighborGraph, UNREACHABLE};
use crate::stats::{self, pearson, pearson_pairs};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    clouds: Vec<PointCloud>,
}

impl LayerTrace {
    pub fn new(clouds: Vec<PointCloud>) -> Result<Self> {
        if clouds.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "a trace needs at least two clouds, got {}",
                clouds.len()
            )));
        }
        let n = clouds[0].len();
        if let Some(c) = clouds.iter().find(|c| c.len() != n) {
            return Err(Error::LengthMismatch {
                expected: n,
                got: c.len(),
            });
        }
        Ok(Self { clouds })
    }

    pub fn clouds(&self) -> &[PointCloud] {
        &self.clouds
    }

    pub fn cloud(&self, layer: usize) -> &PointCloud {
        &self.clouds[layer]
    }

    pub fn n_points(&self) -> usize {
        self.clouds[0].len()
    }

    /// Index `L` of the last cloud.
    pub fn depth(&self) -> usize {
        self.clouds.len() - 1
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.clouds[0].labels()
    }
}

/// `round(fraction · n)`, clamped to a valid neighbor count.
pub fn k_for_fraction(n: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "k fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::KTooLarge { k: 1, n });
    }
    Ok(((fraction * n as f64).round() as usize).clamp(1, n - 1))
}

/// One kNN graph per cloud of the trace.
pub fn layer_graphs(trace: &LayerTrace, k: usize) -> Result<Vec<NeighborGraph>> {
    trace
        .clouds
        .iter()
        .map(|c| build_knn_graph(c, k))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// Unweighted shortest-path hop counts in each layer's own graph.
    #[default]
    Hop,
    /// Shortest paths under Euclidean edge lengths, in each layer's own graph.
    GraphWeighted,
    Euclidean,
}

fn check_layers(trace: &LayerTrace, graphs: &[NeighborGraph]) -> Result<()> {
    if graphs.len() != trace.clouds.len() {
        return Err(Error::LengthMismatch {
            expected: trace.clouds.len(),
            got: graphs.len(),
        });
    }
    let n = trace.n_points();
    if let Some(g) = graphs.iter().find(|g| g.n_vertices() != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            got: g.n_vertices(),
        });
    }
    Ok(())
}

/// Per-vertex `η_ℓ` outcome with the number of neighbor pairs dropped
/// because they were unreachable at layer `ℓ + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct EtaValue {
    value: Option<f64>,
    unreachable: usize,
}

fn hops_from(g: &NeighborGraph, source: usize) -> Vec<f64> {
    let hops = g.hop_distances(&[source]).expect("source is a vertex of the graph");
    hops[0]
        .iter()
        .map(|&h| if h == UNREACHABLE { f64::INFINITY } else { h as f64 })
        .collect()
}

fn eta_at(
    trace: &LayerTrace,
    graphs: &[NeighborGraph],
    layer: usize,
    x: usize,
    mode: DistanceMode,
) -> EtaValue {
    let g = &graphs[layer];
    let nbrs = g.neighbors(x);
    if nbrs.is_empty() {
        return EtaValue {
            value: None,
            unreachable: 0,
        };
    }
    let (before, after): (Vec<f64>, Vec<f64>) = match mode {
        DistanceMode::Euclidean => {
            let (c0, c1) = (trace.cloud(layer), trace.cloud(layer + 1));
            nbrs.iter().map(|&y| (c0.dist(x, y), c1.dist(x, y))).unzip()
        }
        DistanceMode::GraphWeighted => {
            let d0 = g.dijkstra(x, Some(nbrs));
            let d1 = graphs[layer + 1].dijkstra(x, Some(nbrs));
            nbrs.iter().map(|&y| (d0[y], d1[y])).unzip()
        }
        DistanceMode::Hop => {
            let d1 = hops_from(&graphs[layer + 1], x);
            nbrs.iter().map(|&y| (1.0, d1[y])).unzip()
        }
    };
    let mut sum = 0.0;
    let mut count = 0usize;
    for (b, a) in before.iter().zip(&after) {
        if a.is_finite() {
            sum += a - b;
            count += 1;
        }
    }
    EtaValue {
        value: (count > 0).then(|| sum / count as f64),
        unreachable: nbrs.len() - count,
    }
}

/// Average change in distance from `x` to its layer-`ℓ` neighbors between
/// layers `ℓ` and `ℓ + 1`. `None` for isolated vertices or when no neighbor
/// is reachable at layer `ℓ + 1`.
pub fn eta(
    trace: &LayerTrace,
    graphs: &[NeighborGraph],
    layer: usize,
    x: usize,
    mode: DistanceMode,
) -> Result<Option<f64>> {
    check_layers(trace, graphs)?;
    if layer + 1 >= trace.clouds.len() {
        return Err(Error::InvalidParameter(format!(
            "layer {layer} has no successor in a trace of depth {}",
            trace.depth()
        )));
    }
    let n = trace.n_points();
    if x >= n {
        return Err(Error::VertexOutOfRange { vertex: x, n });
    }
    graphs[layer].check_lengths()?;
    graphs[layer + 1].check_lengths()?;
    Ok(eta_at(trace, graphs, layer, x, mode).value)
}

/// `η_ℓ` and `O_ℓ` for every vertex at every analysed layer `ℓ = 1..L−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSeries {
    pub method: CurvatureMethod,
    /// `eta[ℓ − 1][x]`.
    pub eta: Vec<Vec<Option<f64>>>,
    /// `curvature[ℓ − 1][x]`.
    pub curvature: Vec<Vec<Option<f64>>>,
    pub unreachable_pairs: usize,
    pub tagged_edges: usize,
}

fn analysed_layers(trace: &LayerTrace) -> std::ops::Range<usize> {
    1..trace.depth()
}

fn eta_series(
    trace: &LayerTrace,
    graphs: &[NeighborGraph],
    mode: DistanceMode,
) -> Result<(Vec<Vec<Option<f64>>>, usize)> {
    for layer in analysed_layers(trace) {
        graphs[layer].check_lengths()?;
        graphs[layer + 1].check_lengths()?;
    }
    let n = trace.n_points();
    let mut unreachable = 0;
    let rows = analysed_layers(trace)
        .map(|layer| {
            let vals: Vec<EtaValue> = (0..n)
                .into_par_iter()
                .map(|x| eta_at(trace, graphs, layer, x, mode))
                .collect();
            unreachable += vals.iter().map(|v| v.unreachable).sum::<usize>();
            vals.into_iter().map(|v| v.value).collect()
        })
        .collect();
    Ok((rows, unreachable))
}

fn curvature_series(
    graphs: &[NeighborGraph],
    layers: std::ops::Range<usize>,
    method: CurvatureMethod,
) -> (Vec<Vec<Option<f64>>>, usize) {
    let mut tagged = 0;
    let rows = layers
        .map(|layer| {
            let field: CurvatureField = curvature_field(&graphs[layer], method);
            tagged += field.n_tagged();
            field.scalars(&graphs[layer])
        })
        .collect();
    (rows, tagged)
}

/// Computes the η and scalar-curvature series once per method; η is shared.
pub fn layer_series(
    trace: &LayerTrace,
    graphs: &[NeighborGraph],
    methods: &[CurvatureMethod],
    mode: DistanceMode,
) -> Result<Vec<LayerSeries>> {
    check_layers(trace, graphs)?;
    let (eta, unreachable_pairs) = eta_series(trace, graphs, mode)?;
    Ok(methods
        .iter()
        .map(|&method| {
            let (curvature, tagged_edges) =
                curvature_series(graphs, analysed_layers(trace), method);
            LayerSeries {
                method,
                eta: eta.clone(),
                curvature,
                unreachable_pairs,
                tagged_edges,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalUndefined {
    TooFewLayers,
    ZeroVariance,
}

impl LayerSeries {
    fn column(rows: &[Vec<Option<f64>>], x: usize) -> Vec<Option<f64>> {
        rows.iter().map(|r| r[x]).collect()
    }

    /// Local coefficient of `x`, or the reason it is undefined.
    pub fn local(&self, x: usize) -> std::result::Result<f64, LocalUndefined> {
        let pairs: Vec<(f64, f64)> = Self::column(&self.eta, x)
            .into_iter()
            .zip(Self::column(&self.curvature, x))
            .filter_map(|(e, o)| Some((e?, o?)))
            .collect();
        if pairs.len() < 2 {
            return Err(LocalUndefined::TooFewLayers);
        }
        pearson_pairs(&pairs).ok_or(LocalUndefined::ZeroVariance)
    }

    /// Layer coefficient for `ℓ` in `1..L`, across vertices.
    pub fn layer(&self, layer: usize) -> Option<f64> {
        let row = layer.checked_sub(1)?;
        pearson(self.eta.get(row)?, self.curvature.get(row)?)
    }

    /// Layer/vertex entries dropped because η or O was undefined there.
    pub fn excluded_points(&self) -> usize {
        self.eta
            .iter()
            .zip(&self.curvature)
            .flat_map(|(e, o)| e.iter().zip(o))
            .filter(|(e, o)| e.is_none() || o.is_none())
            .count()
    }
}

pub fn local_coefficient(
    trace: &LayerTrace,
    graphs: &[NeighborGraph],
    x: usize,
    method: CurvatureMethod,
    mode: DistanceMode,
) -> Result<Option<f64>> {
    let n = trace.n_points();
    if x >= n {
        return Err(Error::VertexOutOfRange { vertex: x, n });
    }
    let series = layer_series(trace, graphs, &[method], mode)?;
    Ok(series[0].local(x).ok())
}

pub fn layer_coefficient(
    trace: &LayerTrace,
    graphs: &[NeighborGraph],
    layer: usize,
    method: CurvatureMethod,
    mode: DistanceMode,
) -> Result<Option<f64>> {
    check_layers(trace, graphs)?;
    if layer + 1 >= trace.clouds.len() {
        return Err(Error::InvalidParameter(format!(
            "layer {layer} has no successor in a trace of depth {}",
            trace.depth()
        )));
    }
    let eta: Vec<Option<f64>> = (0..trace.n_points())
        .map(|x| eta(trace, graphs, layer, x, mode))
        .collect::<Result<_>>()?;
    let field = curvature_field(&graphs[layer], method);
    Ok(pearson(&eta, &field.scalars(&graphs[layer])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalCoefficient {
    pub value: Option<f64>,
    /// Analysed layers whose graph is disconnected.
    pub disconnected_layers: Vec<usize>,
    /// `Σ_e F(e)` per layer `ℓ = 1..L−1`.
    pub forman_totals: Vec<f64>,
    /// All-pairs distance-sum differences per layer `ℓ = 1..L−1`.
    pub expansion: Vec<f64>,
}

/// `4|E| − Σ deg²`, the sum of Forman curvature over all edges.
pub fn forman_total(g: &NeighborGraph) -> f64 {
    let deg_sq: usize = (0..g.n_vertices()).map(|x| g.degree(x).pow(2)).sum();
    4.0 * g.n_edges() as f64 - deg_sq as f64
}

/// Sum of shortest-path distances over ordered pairs; `None` if disconnected.
/// [`DistanceMode::Hop`] counts hops, every other mode uses edge lengths.
pub fn all_pairs_distance_sum(g: &NeighborGraph, mode: DistanceMode) -> Result<Option<f64>> {
    g.check_lengths()?;
    let n = g.n_vertices();
    let sums: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|s| match mode {
            DistanceMode::Hop => hops_from(g, s).iter().sum(),
            _ => g.dijkstra(s, None).iter().sum(),
        })
        .collect();
    let total: f64 = sums.iter().sum();
    Ok(total.is_finite().then_some(total))
}

/// Global coefficient: Pearson across `ℓ = 1..L−1` between the Forman total
/// of layer `ℓ` and the change in all-pairs graph distances from `ℓ` to `ℓ + 1`.
/// Undefined when any graph of layers `1..L` is disconnected.
pub fn global_coefficient(
    trace: &LayerTrace,
    graphs: &[NeighborGraph],
    mode: DistanceMode,
) -> Result<GlobalCoefficient> {
    check_layers(trace, graphs)?;
    let layers = 1..trace.clouds.len();
    let disconnected_layers: Vec<usize> = layers
        .clone()
        .filter(|&l| !graphs[l].is_connected())
        .collect();
    let forman_totals: Vec<f64> = analysed_layers(trace)
        .map(|l| forman_total(&graphs[l]))
        .collect();
    if !disconnected_layers.is_empty() {
        return Ok(GlobalCoefficient {
            value: None,
            disconnected_layers,
            forman_totals,
            expansion: Vec::new(),
        });
    }
    let sums: Vec<f64> = layers
        .map(|l| all_pairs_distance_sum(&graphs[l], mode).map(|s| s.unwrap_or(f64::INFINITY)))
        .collect::<Result<_>>()?;
    let expansion: Vec<f64> = sums.windows(2).map(|w| w[1] - w[0]).collect();
    let pairs: Vec<(f64, f64)> = forman_totals
        .iter()
        .copied()
        .zip(expansion.iter().copied())
        .collect();
    Ok(GlobalCoefficient {
        value: pearson_pairs(&pairs),
        disconnected_layers,
        forman_totals,
        expansion,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_vertices: usize,
    pub n_defined: usize,
    pub undefined_too_few_layers: usize,
    pub undefined_zero_variance: usize,
    /// Layer/vertex points dropped from local sums because η or O was undefined.
    pub excluded_layer_points: usize,
    pub unreachable_pairs: usize,
    pub tagged_edges: usize,
    pub disconnected_layers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerValue {
    pub layer: usize,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub method: CurvatureMethod,
    pub mode: DistanceMode,
    pub k: usize,
    pub depth: usize,
    pub local: Vec<Option<f64>>,
    pub layer: Vec<LayerValue>,
    pub global: Option<f64>,
    pub mean_local: Option<f64>,
    pub std_local: Option<f64>,
    pub frac_negative: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl CoefficientReport {
    pub fn from_series(
        series: &LayerSeries,
        global: &GlobalCoefficient,
        k: usize,
        mode: DistanceMode,
    ) -> Self {
        let n = series.eta.first().map_or(0, Vec::len);
        let mut diagnostics = Diagnostics {
            n_vertices: n,
            excluded_layer_points: series.excluded_points(),
            unreachable_pairs: series.unreachable_pairs,
            tagged_edges: series.tagged_edges,
            disconnected_layers: global.disconnected_layers.clone(),
            ..Diagnostics::default()
        };
        let local: Vec<Option<f64>> = (0..n)
            .map(|x| match series.local(x) {
                Ok(r) => Some(r),
                Err(LocalUndefined::TooFewLayers) => {
                    diagnostics.undefined_too_few_layers += 1;
                    None
                }
                Err(LocalUndefined::ZeroVariance) => {
                    diagnostics.undefined_zero_variance += 1;
                    None
                }
            })
            .collect();
        let defined: Vec<f64> = local.iter().flatten().copied().collect();
        diagnostics.n_defined = defined.len();
        let depth = series.eta.len() + 1;
        Self {
            method: series.method,
            mode,
            k,
            depth,
            local,
            layer: (1..depth)
                .map(|layer| LayerValue {
                    layer,
                    value: series.layer(layer),
                })
                .collect(),
            global: global.value,
            mean_local: stats::mean(&defined),
            std_local: stats::population_std(&defined),
            frac_negative: stats::frac_negative(&defined),
            diagnostics,
        }
    }

    /// Summary row matching [`SUMMARY_HEADER`]; undefined values are empty.
    pub fn summary_row(&self) -> String {
        let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.method,
            f(self.mean_local),
            f(self.std_local),
            f(self.frac_negative),
            self.diagnostics.n_defined
        )
    }

    pub fn write_summary_csv<W: Write>(reports: &[Self], mut w: W) -> Result<()> {
        writeln!(w, "{SUMMARY_HEADER}")?;
        for r in reports {
            writeln!(w, "{}", r.summary_row())?;
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// Per-vertex CSV `vertex,local`; undefined values are empty.
    pub fn write_local_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "vertex,local")?;
        for (x, r) in self.local.iter().enumerate() {
            match r {
                Some(v) => writeln!(w, "{x},{v}")?,
                None => writeln!(w, "{x},")?,
            }
        }
        Ok(())
    }
}

pub const SUMMARY_HEADER: &str = "method,mean,std,frac_negative,n_defined";

/// Builds the layer graphs once and reports every requested method.
pub fn coefficient_reports(
    trace: &LayerTrace,
    k: usize,
    methods: &[CurvatureMethod],
    mode: DistanceMode,
) -> Result<Vec<CoefficientReport>> {
    if trace.depth() < 3 {
        warn!(
            "trace of depth {} leaves fewer than two layers for local coefficients",
            trace.depth()
        );
    }
    let graphs = layer_graphs(trace, k)?;
    let series = layer_series(trace, &graphs, methods, mode)?;
    let global = global_coefficient(trace, &graphs, mode)?;
    Ok(series
        .iter()
        .map(|s| CoefficientReport::from_series(s, &global, k, mode))
        .collect())
}

pub fn coefficient_report(
    trace: &LayerTrace,
    k: usize,
    method: CurvatureMethod,
    mode: DistanceMode,
) -> Result<CoefficientReport> {
    Ok(coefficient_reports(trace, k, &[method], mode)?.remove(0))
}
