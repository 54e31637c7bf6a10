//! Empirical checks of graph preservation under random linear maps, the
//! two-layer gradient-descent invariance, the ReLU rewiring construction and
//! the arc-cosine Gram matrix.

use std::f64::consts::PI;
use std::io::Write;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::graph::{build_knn_graph, build_r_graph, identity_isomorphic, sorted_sq_dists, NeighborGraph};

/// `m × n` matrix with i.i.d. `N(0, 1/m)` entries.
pub fn gaussian_map(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
    gaussian_matrix(m, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn gaussian_matrix(m: usize, n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let scale = 1.0 / (m as f64).sqrt();
    DMatrix::from_fn(m, n, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

fn check_epsilon(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// Per-vertex ratio `a/b` of the squared `k`-th and `(k+1)`-th NN distances.
fn knn_ratios(cloud: &PointCloud, k: usize) -> Result<Vec<f64>> {
    let n = cloud.len();
    if k == 0 || n < k + 2 {
        return Err(Error::KTooLarge { k, n });
    }
    Ok((0..n)
        .into_par_iter()
        .map(|x| {
            let d = sorted_sq_dists(cloud, x);
            let (a, b) = (d[k - 1].0, d[k].0);
            if b == 0.0 {
                1.0
            } else {
                a / b
            }
        })
        .collect())
}

/// Largest `ε` for which every vertex satisfies `a ≤ ((1−ε)/(1+ε))^L · b`,
/// with `a`, `b` the squared `k`-th and `(k+1)`-th neighbor distances.
pub fn epsilon_margin_knn_deep(cloud: &PointCloud, k: usize, depth: usize) -> Result<f64> {
    if depth == 0 {
        return Err(Error::InvalidParameter("depth must be positive".into()));
    }
    let q = knn_ratios(cloud, k)?
        .into_iter()
        .fold(0.0f64, f64::max)
        .powf(1.0 / depth as f64);
    Ok(((1.0 - q) / (1.0 + q)).max(0.0))
}

/// Single-layer kNN margin `min_x (b − a)/(b + a)`.
pub fn epsilon_margin_knn(cloud: &PointCloud, k: usize) -> Result<f64> {
    epsilon_margin_knn_deep(cloud, k, 1)
}

/// Margin of the r-neighborhood graph: for every vertex, the relative gap of
/// its farthest neighbor below `r²` and of its nearest non-neighbor above `r²`.
pub fn epsilon_margin_rgraph(cloud: &PointCloud, r: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {r}")));
    }
    let r2 = r * r;
    let n = cloud.len();
    let margin = (0..n)
        .into_par_iter()
        .map(|x| {
            let (mut far_in, mut near_out) = (None::<f64>, None::<f64>);
            for y in (0..n).filter(|&y| y != x) {
                let d2 = cloud.sq_dist(x, y);
                if d2.sqrt() < r {
                    far_in = Some(far_in.map_or(d2, |v| v.max(d2)));
                } else {
                    near_out = Some(near_out.map_or(d2, |v| v.min(d2)));
                }
            }
            let inner = far_in.map_or(f64::INFINITY, |d2| {
                if d2 == 0.0 {
                    f64::INFINITY
                } else {
                    (r2 - d2) / d2
                }
            });
            let outer = near_out.map_or(f64::INFINITY, |d2| (d2 - r2) / d2);
            inner.min(outer)
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(margin.clamp(0.0, 1.0 - f64::EPSILON))
}

/// `⌈4(ln(N(N−1)) − ln δ)/(ε² − ε³)⌉`.
pub fn required_width(set_size: usize, epsilon: f64, delta: f64) -> Result<u64> {
    check_epsilon("epsilon", epsilon)?;
    check_epsilon("delta", delta)?;
    if set_size < 2 {
        return Err(Error::InvalidParameter(format!(
            "set size must be at least 2, got {set_size}"
        )));
    }
    let pairs = (set_size as f64) * (set_size as f64 - 1.0);
    let m = 4.0 * (pairs.ln() - delta.ln()) / (epsilon.powi(2) - epsilon.powi(3));
    Ok(m.ceil() as u64)
}

/// Width making the product bound over `depth` layers at least `1 − δ`.
pub fn required_width_deep(set_size: usize, epsilon: f64, delta: f64, depth: usize) -> Result<u64> {
    check_epsilon("delta", delta)?;
    if depth == 0 {
        return Err(Error::InvalidParameter("depth must be positive".into()));
    }
    let per_layer = -((1.0 - delta).ln() / depth as f64).exp_m1();
    required_width(set_size, epsilon, per_layer)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GraphKind {
    Knn { k: usize },
    Radius { r: f64 },
}

impl GraphKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Knn { .. } => "knn",
            Self::Radius { .. } => "radius",
        }
    }

    pub fn param(self) -> f64 {
        match self {
            Self::Knn { k } => k as f64,
            Self::Radius { r } => r,
        }
    }

    pub fn build(self, cloud: &PointCloud) -> Result<NeighborGraph> {
        match self {
            Self::Knn { k } => build_knn_graph(cloud, k),
            Self::Radius { r } => build_r_graph(cloud, r),
        }
    }

    /// Margin `ε` required by the preservation bound for a stack of `depth` maps.
    pub fn margin(self, cloud: &PointCloud, depth: usize) -> Result<f64> {
        match self {
            Self::Knn { k } => epsilon_margin_knn_deep(cloud, k, depth),
            Self::Radius { r } => {
                let e = epsilon_margin_rgraph(cloud, r)?;
                if depth == 1 {
                    Ok(e)
                } else {
                    let (lo, hi) = (1.0 - e, 1.0 + e);
                    let per_layer = |t: f64| t.powf(1.0 / depth as f64);
                    Ok((1.0 - per_layer(lo)).min(per_layer(hi) - 1.0).max(0.0))
                }
            }
        }
    }
}

/// How the random linear network is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionRoute {
    /// Multiply by explicit Gaussian matrices.
    Direct,
    /// Sample the `n × n` Cholesky factor of `AᵀA` (Bartlett decomposition),
    /// which has the same law as the pairwise geometry of `A X` when `m ≥ n`.
    Wishart,
    /// `Direct` up to [`AUTO_DIRECT_MAX_WIDTH`], `Wishart` beyond.
    #[default]
    Auto,
}

pub const AUTO_DIRECT_MAX_WIDTH: usize = 256;

/// Upper-triangular `R` with `RᵀR ~ W_n(I, m)/m`.
fn bartlett_factor(n: usize, m: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let scale = 1.0 / (m as f64).sqrt();
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        let chi = ChiSquared::new((m - i) as f64).expect("positive degrees of freedom");
        let c: f64 = chi.sample(rng);
        r[(i, i)] = c.sqrt() * scale;
        for j in i + 1..n {
            let z: f64 = StandardNormal.sample(rng);
            r[(i, j)] = z * scale;
        }
    }
    r
}

fn cloud_matrix(cloud: &PointCloud) -> DMatrix<f64> {
    DMatrix::from_row_slice(cloud.len(), cloud.dim(), cloud.coords()).transpose()
}

fn matrix_cloud(points: &DMatrix<f64>) -> Result<PointCloud> {
    let rows = points.transpose();
    let coords: Vec<f64> = rows.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect();
    PointCloud::new(points.nrows(), coords, None)
}

/// Image of `cloud` under `depth` random `N(0, 1/m)` layers without
/// nonlinearity. The Wishart route returns an `n`-dimensional cloud with the
/// same pairwise distances in law.
pub fn random_linear_image(
    cloud: &PointCloud,
    width: usize,
    depth: usize,
    route: ProjectionRoute,
    rng: &mut impl Rng,
) -> Result<PointCloud> {
    let n = cloud.dim();
    if width == 0 || depth == 0 {
        return Err(Error::InvalidParameter("width and depth must be positive".into()));
    }
    let wishart = match route {
        ProjectionRoute::Direct => false,
        ProjectionRoute::Wishart => {
            if width < n {
                return Err(Error::InvalidParameter(format!(
                    "the Wishart route needs width >= input dimension ({width} < {n})"
                )));
            }
            true
        }
        ProjectionRoute::Auto => width > AUTO_DIRECT_MAX_WIDTH && width >= n,
    };
    let mut x = cloud_matrix(cloud);
    if wishart {
        let mut t = DMatrix::<f64>::identity(n, n);
        for _ in 0..depth {
            t = bartlett_factor(n, width, rng) * t;
        }
        x = t * x;
    } else {
        for layer in 0..depth {
            let fan_in = if layer == 0 { n } else { width };
            x = gaussian_matrix(width, fan_in, rng) * x;
        }
    }
    matrix_cloud(&x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreservationCurve {
    pub kind: GraphKind,
    pub depth: usize,
    pub trials: usize,
    pub widths: Vec<usize>,
    pub proportion_preserved: Vec<f64>,
    pub epsilon_used: f64,
    /// Width guaranteeing preservation with probability `1 − δ`, when the
    /// margin is positive.
    pub theoretical_width_bound: Option<u64>,
    pub delta: f64,
    pub route: ProjectionRoute,
}

pub const PRESERVATION_HEADER: &str = "width,depth,kind,param,trials,proportion";

impl PreservationCurve {
    pub fn write_csv_rows<W: Write>(&self, mut w: W) -> Result<()> {
        for (m, p) in self.widths.iter().zip(&self.proportion_preserved) {
            writeln!(
                w,
                "{m},{},{},{},{},{p}",
                self.depth,
                self.kind.name(),
                self.kind.param(),
                self.trials
            )?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(curves: &[Self], mut w: W) -> Result<()> {
        writeln!(w, "{PRESERVATION_HEADER}")?;
        for c in curves {
            c.write_csv_rows(&mut w)?;
        }
        Ok(())
    }
}

/// Fraction of `trials` random linear networks whose image graph equals the
/// input graph, per width. Trial `t` draws from seed `seed + t`, on a stream
/// selected by the width.
pub fn preservation_trial(
    cloud: &PointCloud,
    kind: GraphKind,
    widths: &[usize],
    depth: usize,
    trials: usize,
    delta: f64,
    route: ProjectionRoute,
    seed: u64,
) -> Result<PreservationCurve> {
    check_epsilon("delta", delta)?;
    let reference = kind.build(cloud)?;
    let epsilon = kind.margin(cloud, depth)?;
    if epsilon == 0.0 {
        warn!("{} margin is zero; the preservation bound is vacuous", kind.name());
    }
    let bound = (epsilon > 0.0)
        .then(|| required_width_deep(cloud.len(), epsilon, delta, depth))
        .transpose()?;
    let proportion_preserved = widths
        .iter()
        .map(|&m| -> Result<f64> {
            let hits = (0..trials)
                .into_par_iter()
                .map(|t| -> Result<bool> {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
                    rng.set_stream(m as u64);
                    let image = random_linear_image(cloud, m, depth, route, &mut rng)?;
                    identity_isomorphic(&reference, &kind.build(&image)?)
                })
                .collect::<Result<Vec<bool>>>()?;
            Ok(hits.iter().filter(|&&h| h).count() as f64 / trials.max(1) as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(PreservationCurve {
        kind,
        depth,
        trials,
        widths: widths.to_vec(),
        proportion_preserved,
        epsilon_used: epsilon,
        theoretical_width_bound: bound,
        delta,
        route,
    })
}

/// Which branch of the rewiring construction produced the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewireCase {
    ZeroX,
    YParallelX,
    General,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rewiring {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub case: RewireCase,
}

impl Rewiring {
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        (&self.a * v + &self.b).map(|t| t.max(0.0))
    }
}

pub const SPAN_TOLERANCE: f64 = 1e-10;

/// Orthogonal `H` (a Householder reflection, possibly with its first row
/// negated) with `H v = (−‖v‖, 0, …, 0)`. `v` must be non-zero.
fn reflect_to_negative_axis(v: &DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    let norm = v.norm();
    let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut u = v.clone();
    u[0] += sign * norm;
    let uu = u.dot(&u);
    let mut h = DMatrix::<f64>::identity(n, n);
    if uu > 0.0 {
        h -= (&u * u.transpose()) * (2.0 / uu);
    }
    // H v = −sign·‖v‖ e₁
    if sign < 0.0 {
        h.row_mut(0).neg_mut();
    }
    h
}

/// Relative distance from `z` to `span{vs}` after Gram–Schmidt.
fn span_residual(vs: &[&DVector<f64>], z: &DVector<f64>) -> f64 {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for v in vs {
        let mut r = (*v).clone();
        for q in &basis {
            r -= q * q.dot(&r);
        }
        let nr = r.norm();
        if nr > SPAN_TOLERANCE * v.norm().max(f64::MIN_POSITIVE) {
            basis.push(r / nr);
        }
    }
    let mut r = z.clone();
    for q in &basis {
        r -= q * q.dot(&r);
    }
    let zn = z.norm();
    if zn == 0.0 {
        0.0
    } else {
        r.norm() / zn
    }
}

/// Flips rows so that the largest `|(A z)_i|` over `rows` becomes positive.
fn make_positive_coordinate(a: &mut DMatrix<f64>, z: &DVector<f64>, rows: std::ops::Range<usize>) {
    let az = &*a * z;
    let i = rows
        .max_by(|&p, &q| az[p].abs().total_cmp(&az[q].abs()))
        .expect("non-empty row range");
    if az[i] < 0.0 {
        a.row_mut(i).neg_mut();
    }
}

/// Orthogonal `A` and bias `b` with
/// `‖σ(Ax+b) − σ(Ay+b)‖ < ‖σ(Ax+b) − σ(Az+b)‖` although `‖x−y‖ ≥ ‖x−z‖`.
pub fn relu_rewire(x: &[f64], y: &[f64], z: &[f64]) -> Result<Rewiring> {
    let n = x.len();
    if y.len() != n || z.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if y.len() != n { y.len() } else { z.len() },
        });
    }
    let (x, y, z) = (
        DVector::from_column_slice(x),
        DVector::from_column_slice(y),
        DVector::from_column_slice(z),
    );
    if (&x - &y).norm() < (&x - &z).norm() {
        return Err(Error::HypothesisViolated(
            "‖x − y‖ must be at least ‖x − z‖".into(),
        ));
    }
    if span_residual(&[&x, &y], &z) <= SPAN_TOLERANCE {
        return Err(Error::HypothesisViolated("z lies in span{x, y}".into()));
    }
    let mut b = DVector::zeros(n);
    if x.norm() == 0.0 {
        let mut a = reflect_to_negative_axis(&y);
        make_positive_coordinate(&mut a, &z, 1..n);
        return Ok(Rewiring {
            a,
            b,
            case: RewireCase::ZeroX,
        });
    }
    let a1 = reflect_to_negative_axis(&x);
    let a1y = &a1 * &y;
    let tail = a1y.rows(1, n - 1).into_owned();
    let parallel = span_residual(&[&x], &y) <= SPAN_TOLERANCE;
    if parallel || tail.norm() == 0.0 {
        let mut a = a1;
        make_positive_coordinate(&mut a, &z, 1..n);
        if a1y[0] > 0.0 {
            b[0] = -a1y[0];
        }
        return Ok(Rewiring {
            a,
            b,
            case: RewireCase::YParallelX,
        });
    }
    let mut a2 = DMatrix::<f64>::identity(n, n);
    a2.view_mut((1, 1), (n - 1, n - 1))
        .copy_from(&reflect_to_negative_axis(&tail));
    let mut a = a2 * a1;
    make_positive_coordinate(&mut a, &z, 2..n);
    let ay0 = (&a * &y)[0];
    if ay0 > 0.0 {
        b[0] = -ay0;
    }
    Ok(Rewiring {
        a,
        b,
        case: RewireCase::General,
    })
}

/// Arc-cosine Gram matrix `H_ij = xᵢᵀxⱼ (π − arccos xᵢᵀxⱼ)/(2π)`.
pub fn gram_matrix(cloud: &PointCloud) -> Result<DMatrix<f64>> {
    for (i, p) in cloud.points().enumerate() {
        let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "row {i} has norm {norm}, expected unit norm"
            )));
        }
    }
    let n = cloud.len();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let dot: f64 = cloud
            .point(i)
            .iter()
            .zip(cloud.point(j))
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .clamp(-1.0, 1.0);
        dot * (PI - dot.acos()) / (2.0 * PI)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramReport {
    pub lambda0: f64,
    /// Pairs with `|xᵢᵀxⱼ| ≈ 1`, which violate the non-parallel hypothesis.
    pub parallel_pairs: Vec<(usize, usize)>,
}

pub fn gram_min_eigenvalue(cloud: &PointCloud) -> Result<GramReport> {
    let h = gram_matrix(cloud)?;
    let n = cloud.len();
    let lambda0 = h
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let parallel_pairs = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| {
            let dot: f64 = cloud.point(i).iter().zip(cloud.point(j)).map(|(a, b)| a * b).sum();
            dot.abs() >= 1.0 - 1e-12
        })
        .collect();
    Ok(GramReport {
        lambda0,
        parallel_pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdRun {
    pub width: usize,
    pub k: usize,
    pub losses: Vec<f64>,
    /// Pre-activation kNN graph at step `l` equals the one at step 0.
    pub preserved_vs_initial: Vec<bool>,
    /// Pre-activation kNN graph at step `l` equals the input kNN graph.
    pub preserved_vs_input: Vec<bool>,
}

impl GdRun {
    pub fn final_preserved_vs_input(&self) -> bool {
        *self.preserved_vs_input.last().expect("step 0 is always recorded")
    }
}

/// Full-batch gradient descent on `½Σ(Φ(xᵢ) − yᵢ)²` over `W` only, with
/// `Φ(x) = ⟨a, σ(Wx/√m)⟩`, `a ∈ {±1}^m` fixed and `W` standard Gaussian.
/// Flags are recorded for steps `0..=steps`.
pub fn two_layer_gd_run(
    cloud: &PointCloud,
    targets: &[f64],
    k: usize,
    width: usize,
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<GdRun> {
    let (n_pts, dim) = (cloud.len(), cloud.dim());
    if targets.len() != n_pts {
        return Err(Error::LengthMismatch {
            expected: n_pts,
            got: targets.len(),
        });
    }
    for (i, p) in cloud.points().enumerate() {
        let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "input {i} has norm {norm}, expected unit norm"
            )));
        }
    }
    if width == 0 {
        return Err(Error::InvalidParameter("width must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w: DMatrix<f64> = DMatrix::from_fn(width, dim, |_, _| StandardNormal.sample(&mut rng));
    let a: DVector<f64> =
        DVector::from_fn(width, |_, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 });
    let x = cloud_matrix(cloud);
    let inv_sqrt_m = 1.0 / (width as f64).sqrt();
    let y = DVector::from_column_slice(targets);
    let input_graph = build_knn_graph(cloud, k)?;

    let features = |w: &DMatrix<f64>| -> DMatrix<f64> { (w * &x) * inv_sqrt_m };
    let mut initial_graph = None;
    let mut run = GdRun {
        width,
        k,
        losses: Vec::with_capacity(steps + 1),
        preserved_vs_initial: Vec::with_capacity(steps + 1),
        preserved_vs_input: Vec::with_capacity(steps + 1),
    };
    for step in 0..=steps {
        let pre = features(&w);
        let graph = build_knn_graph(&matrix_cloud(&pre)?, k)?;
        let initial = initial_graph.get_or_insert_with(|| graph.clone());
        run.preserved_vs_initial.push(identity_isomorphic(initial, &graph)?);
        run.preserved_vs_input.push(identity_isomorphic(&input_graph, &graph)?);
        let act = pre.map(|v| v.max(0.0));
        let u = act.transpose() * &a;
        let residual = &u - &y;
        let loss = 0.5 * residual.norm_squared();
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch: step, loss });
        }
        run.losses.push(loss);
        if step == steps {
            break;
        }
        // dL/dW_r = Σ_i residual_i a_r 1{pre_ri > 0} x_i / √m
        let gate = DMatrix::from_fn(width, n_pts, |r, i| {
            if pre[(r, i)] > 0.0 {
                a[r] * residual[i] * inv_sqrt_m
            } else {
                0.0
            }
        });
        let grad = gate * x.transpose();
        w -= grad * lr;
    }
    Ok(run)
}

/// Fraction of `runs` preserving the input kNN graph after the final step.
pub fn gd_preservation_fraction(
    cloud: &PointCloud,
    targets: &[f64],
    k: usize,
    width: usize,
    steps: usize,
    lr: f64,
    runs: usize,
    seed: u64,
) -> Result<f64> {
    let flags = (0..runs)
        .into_par_iter()
        .map(|r| {
            two_layer_gd_run(cloud, targets, k, width, steps, lr, seed.wrapping_add(r as u64))
                .map(|run| run.final_preserved_vs_input())
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(flags.iter().filter(|&&f| f).count() as f64 / runs.max(1) as f64)
}
