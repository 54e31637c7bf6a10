//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the crate's transport or
//! curvature code.
#![allow(dead_code)]

use std::collections::VecDeque;

use rand::Rng;
use ricci_core::{BuildParam, NeighborGraph};

pub fn graph_from_edges(n: usize, edges: &[(usize, usize)]) -> NeighborGraph {
    NeighborGraph::from_edges(n, edges, &vec![1.0; edges.len()], BuildParam::Explicit).unwrap()
}

pub fn erdos_renyi(n: usize, p: f64, rng: &mut impl Rng) -> NeighborGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    graph_from_edges(n, &edges)
}

/// Random graph whose maximum degree is at most `cap`: candidate pairs are
/// visited in random order and kept only while both endpoints have room.
pub fn degree_capped(n: usize, p: f64, cap: usize, rng: &mut impl Rng) -> NeighborGraph {
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    for k in (1..pairs.len()).rev() {
        pairs.swap(k, rng.random_range(0..=k));
    }
    let mut deg = vec![0; n];
    let mut edges = Vec::new();
    for (i, j) in pairs {
        if deg[i] < cap && deg[j] < cap && rng.random::<f64>() < p {
            deg[i] += 1;
            deg[j] += 1;
            edges.push((i, j));
        }
    }
    graph_from_edges(n, &edges)
}

/// All-pairs hop distances by plain BFS on an adjacency matrix.
pub fn hop_matrix(g: &NeighborGraph) -> Vec<Vec<Option<u32>>> {
    let n = g.n_vertices();
    let mut adj = vec![vec![false; n]; n];
    for &(u, v) in g.edges() {
        adj[u][v] = true;
        adj[v][u] = true;
    }
    (0..n)
        .map(|s| {
            let mut dist = vec![None; n];
            dist[s] = Some(0);
            let mut queue = VecDeque::from([s]);
            while let Some(x) = queue.pop_front() {
                for y in 0..n {
                    if adj[x][y] && dist[y].is_none() {
                        dist[y] = Some(dist[x].unwrap() + 1);
                        queue.push_back(y);
                    }
                }
            }
            dist
        })
        .collect()
}

fn neighbors(g: &NeighborGraph, x: usize) -> Vec<usize> {
    g.edges()
        .iter()
        .filter_map(|&(a, b)| {
            if a == x {
                Some(b)
            } else if b == x {
                Some(a)
            } else {
                None
            }
        })
        .collect()
}

/// Scaled masses and hop costs of the `(u, v)` neighbor-measure transport.
struct Scaled {
    rows: Vec<i64>,
    cols: Vec<i64>,
    cost: Vec<Vec<i64>>,
    scale: i64,
}

fn scaled_problem(g: &NeighborGraph, hops: &[Vec<Option<u32>>], u: usize, v: usize) -> Scaled {
    let (nu, nv) = (neighbors(g, u), neighbors(g, v));
    let cost = nu
        .iter()
        .map(|&a| {
            nv.iter()
                .map(|&b| hops[a][b].expect("support points are connected") as i64)
                .collect()
        })
        .collect();
    Scaled {
        rows: vec![nv.len() as i64; nu.len()],
        cols: vec![nu.len() as i64; nv.len()],
        cost,
        scale: (nu.len() * nv.len()) as i64,
    }
}

/// Ollivier curvature by exhaustive enumeration of every integer transport
/// plan between the scaled neighbor masses.
pub fn ollivier_by_enumeration(
    g: &NeighborGraph,
    hops: &[Vec<Option<u32>>],
    u: usize,
    v: usize,
) -> f64 {
    let p = scaled_problem(g, hops, u, v);
    let (na, nb) = (p.rows.len(), p.cols.len());
    let mut rows = p.rows.clone();
    let mut cols = p.cols.clone();
    let mut best = i64::MAX;
    enumerate(0, na, nb, &p.cost, &mut rows, &mut cols, 0, &mut best);
    1.0 - best as f64 / p.scale as f64
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    cell: usize,
    na: usize,
    nb: usize,
    cost: &[Vec<i64>],
    rows: &mut [i64],
    cols: &mut [i64],
    acc: i64,
    best: &mut i64,
) {
    if cell == na * nb {
        if rows.iter().all(|&r| r == 0) && cols.iter().all(|&c| c == 0) {
            *best = (*best).min(acc);
        }
        return;
    }
    let (i, j) = (cell / nb, cell % nb);
    // the last cell of a row must take whatever the row still holds
    let range = if j == nb - 1 {
        if rows[i] > cols[j] {
            return;
        }
        rows[i]..=rows[i]
    } else {
        0..=rows[i].min(cols[j])
    };
    for x in range {
        rows[i] -= x;
        cols[j] -= x;
        enumerate(cell + 1, na, nb, cost, rows, cols, acc + x * cost[i][j], best);
        rows[i] += x;
        cols[j] += x;
    }
}

/// Ollivier curvature by expanding every scaled unit of mass into its own
/// row or column and solving the resulting assignment problem with the
/// Hungarian method.
pub fn ollivier_by_assignment(
    g: &NeighborGraph,
    hops: &[Vec<Option<u32>>],
    u: usize,
    v: usize,
) -> f64 {
    let p = scaled_problem(g, hops, u, v);
    let row_of: Vec<usize> = p
        .rows
        .iter()
        .enumerate()
        .flat_map(|(i, &m)| std::iter::repeat_n(i, m as usize))
        .collect();
    let col_of: Vec<usize> = p
        .cols
        .iter()
        .enumerate()
        .flat_map(|(j, &m)| std::iter::repeat_n(j, m as usize))
        .collect();
    let matrix: Vec<Vec<i64>> = row_of
        .iter()
        .map(|&i| col_of.iter().map(|&j| p.cost[i][j]).collect())
        .collect();
    1.0 - hungarian(&matrix) as f64 / p.scale as f64
}

/// Minimum-cost perfect assignment on a square matrix (shortest augmenting
/// paths with row and column potentials).
pub fn hungarian(a: &[Vec<i64>]) -> i64 {
    let n = a.len();
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| a[p[j] - 1][j - 1]).sum()
}

/// Jost-Liu bounds straight from degrees and the shared-neighbor count.
pub fn jost_liu_reference(g: &NeighborGraph, u: usize, v: usize) -> (f64, f64) {
    let (nu, nv) = (neighbors(g, u), neighbors(g, v));
    let t = nu.iter().filter(|x| nv.contains(x)).count() as f64;
    let (du, dv) = (nu.len() as f64, nv.len() as f64);
    let pos = |x: f64| if x > 0.0 { x } else { 0.0 };
    let upper = t / du.max(dv);
    let lower = -pos(1.0 - 1.0 / du - 1.0 / dv - t / du.min(dv))
        - pos(1.0 - 1.0 / du - 1.0 / dv - t / du.max(dv))
        + upper;
    (lower, upper)
}

/// All-pairs weighted distances by Floyd–Warshall; `None` marks unreachable pairs.
/// All-pairs shortest paths; `hops` replaces every edge length by 1.
pub fn floyd_warshall(g: &NeighborGraph, hops: bool) -> Vec<Vec<Option<f64>>> {
    let n = g.n_vertices();
    let mut d = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0.0);
    }
    for (&(u, v), &len) in g.edges().iter().zip(g.edge_lengths()) {
        let len = if hops { 1.0 } else { len };
        d[u][v] = Some(len);
        d[v][u] = Some(len);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

/// Pearson correlation as the mean product of z-scores.
pub fn pearson_reference(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let z = |v: &[f64]| -> Option<Vec<f64>> {
        let m = v.iter().sum::<f64>() / n;
        let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
        (s > 0.0).then(|| v.iter().map(|x| (x - m) / s).collect())
    };
    let (zx, zy) = (z(xs)?, z(ys)?);
    Some(zx.iter().zip(&zy).map(|(a, b)| a * b).sum::<f64>() / n)
}

/// Newman modularity as the explicit double sum over ordered vertex pairs.
pub fn modularity_double_sum(g: &NeighborGraph, labels: &[u8]) -> f64 {
    let n = g.n_vertices();
    let two_m = 2.0 * g.n_edges() as f64;
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                let a = if g.has_edge(i, j) { 1.0 } else { 0.0 };
                q += a - (g.degree(i) * g.degree(j)) as f64 / two_m;
            }
        }
    }
    q / two_m
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn laplacian(g: &NeighborGraph) -> Vec<Vec<f64>> {
    let n = g.n_vertices();
    let mut l = vec![vec![0.0; n]; n];
    for &(u, v) in g.edges() {
        l[u][v] -= 1.0;
        l[v][u] -= 1.0;
        l[u][u] += 1.0;
        l[v][v] += 1.0;
    }
    l
}
