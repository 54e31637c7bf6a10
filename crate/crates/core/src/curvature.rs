//! Edge curvatures: exact Ollivier-Ricci, its Jost-Liu bounds and their
//! mean, Forman and augmented Forman; plus vertex scalar curvature.
//!
//! Ollivier curvature uses the non-lazy uniform measure on `N(u)` and hop
//! distances as ground costs. Masses are scaled by `deg(u)·deg(v)` so the
//! transport problem is integral and solved exactly.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NeighborGraph;
use crate::transport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureMethod {
    OllivierExact,
    OllivierApprox,
    AugmentedForman,
    Forman,
}

impl CurvatureMethod {
    pub const ALL: [CurvatureMethod; 4] = [
        Self::OllivierExact,
        Self::OllivierApprox,
        Self::AugmentedForman,
        Self::Forman,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::OllivierExact => "ollivier_exact",
            Self::OllivierApprox => "ollivier_approx",
            Self::AugmentedForman => "augmented_forman",
            Self::Forman => "forman",
        }
    }
}

impl fmt::Display for CurvatureMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CurvatureMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown curvature method {s:?}")))
    }
}

pub fn forman(g: &NeighborGraph, u: usize, v: usize) -> Result<i64> {
    g.check_edge(u, v)?;
    Ok(4 - g.degree(u) as i64 - g.degree(v) as i64)
}

pub fn augmented_forman(g: &NeighborGraph, u: usize, v: usize) -> Result<i64> {
    let f = forman(g, u, v)?;
    Ok(f + 3 * g.common_neighbor_count(u, v) as i64)
}

/// Jost-Liu `(lower, upper)` bounds on the Ollivier curvature of `(u, v)`.
pub fn ollivier_bounds(g: &NeighborGraph, u: usize, v: usize) -> Result<(f64, f64)> {
    g.check_edge(u, v)?;
    Ok(jost_liu(
        g.degree(u),
        g.degree(v),
        g.common_neighbor_count(u, v),
    ))
}

fn jost_liu(du: usize, dv: usize, triangles: usize) -> (f64, f64) {
    let (lo_deg, hi_deg) = (du.min(dv) as f64, du.max(dv) as f64);
    let t = triangles as f64;
    let base = 1.0 - 1.0 / lo_deg - 1.0 / hi_deg;
    let upper = t / hi_deg;
    let lower = -(base - t / lo_deg).max(0.0) - (base - t / hi_deg).max(0.0) + upper;
    (lower, upper)
}

pub fn ollivier_approx(g: &NeighborGraph, u: usize, v: usize) -> Result<f64> {
    let (lo, hi) = ollivier_bounds(g, u, v)?;
    Ok((lo + hi) / 2.0)
}

pub fn ollivier_exact(g: &NeighborGraph, u: usize, v: usize) -> Result<f64> {
    g.check_edge(u, v)?;
    TransportProblem::for_edge(g, u, v, |a, b| direct_hop_cost(g, a, b))?.curvature()
}

/// Hop distance between support points, capped: `None` beyond three hops.
fn direct_hop_cost(g: &NeighborGraph, a: usize, b: usize) -> Option<i64> {
    if a == b {
        Some(0)
    } else if g.has_edge(a, b) {
        Some(1)
    } else if g.common_neighbor_count(a, b) > 0 {
        Some(2)
    } else if g
        .neighbors(a)
        .iter()
        .any(|&w| g.neighbors(w).iter().any(|&x| g.has_edge(x, b)))
    {
        Some(3)
    } else {
        None
    }
}

/// Transport between the uniform neighbor measures of an edge's endpoints,
/// scaled to integer masses: each `a ∈ N(u)` carries `deg(v)` units and each
/// `b ∈ N(v)` absorbs `deg(u)` units, so both sides total `deg(u)·deg(v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportProblem {
    pub source_support: Vec<usize>,
    pub target_support: Vec<usize>,
    pub source_mass: i64,
    pub target_mass: i64,
    /// Row-major hop costs.
    pub cost: Vec<i64>,
}

impl TransportProblem {
    /// `hop` returns the hop distance between two support points, or `None`
    /// if they are not connected within the neighborhood.
    pub fn for_edge(
        g: &NeighborGraph,
        u: usize,
        v: usize,
        mut hop: impl FnMut(usize, usize) -> Option<i64>,
    ) -> Result<Self> {
        let source_support = g.neighbors(u).to_vec();
        let target_support = g.neighbors(v).to_vec();
        let mut cost = Vec::with_capacity(source_support.len() * target_support.len());
        for &a in &source_support {
            for &b in &target_support {
                cost.push(hop(a, b).ok_or_else(|| Error::DisconnectedNeighborhood(u, v))?);
            }
        }
        Ok(Self {
            source_mass: target_support.len() as i64,
            target_mass: source_support.len() as i64,
            source_support,
            target_support,
            cost,
        })
    }

    /// Same problem as [`Self::for_edge`] with costs read from a prebuilt index.
    pub fn for_edge_indexed(g: &NeighborGraph, u: usize, v: usize, index: &NeighborhoodIndex) -> Self {
        let source_support = g.neighbors(u).to_vec();
        let target_support = g.neighbors(v).to_vec();
        let mut cost = Vec::with_capacity(source_support.len() * target_support.len());
        for &a in &source_support {
            let (adjacent, within_two) = index.rows(a);
            cost.extend(target_support.iter().map(|&b| {
                let bit = |row: &[u64]| row[b / 64] >> (b % 64) & 1 == 1;
                if a == b {
                    0
                } else if bit(adjacent) {
                    1
                } else if bit(within_two) {
                    2
                } else {
                    3
                }
            }));
        }
        Self {
            source_mass: target_support.len() as i64,
            target_mass: source_support.len() as i64,
            source_support,
            target_support,
            cost,
        }
    }

    /// Total scaled mass `deg(u)·deg(v)`.
    pub fn scale(&self) -> i64 {
        self.source_mass * self.target_mass
    }

    /// Optimal integer cost of the scaled problem.
    pub fn solve(&self) -> Result<i64> {
        // Mass shared by both measures stays put in some optimal plan (the
        // ground cost is a metric), so pre-match it before the flow solver.
        let mut supply = vec![self.source_mass; self.source_support.len()];
        let mut demand = vec![self.target_mass; self.target_support.len()];
        let (mut i, mut j) = (0, 0);
        while i < supply.len() && j < demand.len() {
            match self.source_support[i].cmp(&self.target_support[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    let kept = supply[i].min(demand[j]);
                    supply[i] -= kept;
                    demand[j] -= kept;
                    i += 1;
                    j += 1;
                }
            }
        }
        let rows: Vec<usize> = (0..supply.len()).filter(|&i| supply[i] > 0).collect();
        let cols: Vec<usize> = (0..demand.len()).filter(|&j| demand[j] > 0).collect();
        let nb = self.target_support.len();
        let cost: Vec<i64> = rows
            .iter()
            .flat_map(|&i| cols.iter().map(move |&j| self.cost[i * nb + j]))
            .collect();
        let supply: Vec<i64> = rows.iter().map(|&i| supply[i]).collect();
        let demand: Vec<i64> = cols.iter().map(|&j| demand[j]).collect();
        Ok(transport::solve(&supply, &demand, &cost)?.cost)
    }

    pub fn wasserstein(&self) -> Result<f64> {
        Ok(self.solve()? as f64 / self.scale() as f64)
    }

    /// `1 − W₁` for an edge (endpoint hop distance 1), from the exact
    /// integer optimum with a single final division.
    pub fn curvature(&self) -> Result<f64> {
        let scale = self.scale();
        Ok((scale - self.solve()?) as f64 / scale as f64)
    }
}

/// Adjacency and distance-≤2 bitsets, so support-pair hop costs inside a
/// curvature field are O(1) lookups.
pub struct NeighborhoodIndex {
    words: usize,
    adjacent: Vec<u64>,
    within_two: Vec<u64>,
}

impl NeighborhoodIndex {
    pub fn new(g: &NeighborGraph) -> Self {
        let n = g.n_vertices();
        let words = n.div_ceil(64);
        let mut adjacent = vec![0u64; n * words];
        for v in 0..n {
            let row = &mut adjacent[v * words..(v + 1) * words];
            for &w in g.neighbors(v) {
                row[w / 64] |= 1 << (w % 64);
            }
        }
        let mut within_two = vec![0u64; n * words];
        within_two
            .par_chunks_mut(words.max(1))
            .enumerate()
            .for_each(|(v, row)| {
                if words == 0 {
                    return;
                }
                row.copy_from_slice(&adjacent[v * words..(v + 1) * words]);
                for &w in g.neighbors(v) {
                    for (r, a) in row.iter_mut().zip(&adjacent[w * words..(w + 1) * words]) {
                        *r |= a;
                    }
                }
            });
        Self {
            words,
            adjacent,
            within_two,
        }
    }

    /// Adjacency and distance-≤2 bit rows of `a`. Neighbors of an edge's two
    /// endpoints are at most three hops apart, so these rows determine every
    /// support-pair cost.
    #[inline]
    fn rows(&self, a: usize) -> (&[u64], &[u64]) {
        let span = a * self.words..(a + 1) * self.words;
        (&self.adjacent[span.clone()], &self.within_two[span])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeTag {
    Ok,
    DisconnectedNeighborhood,
}

impl EdgeTag {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::DisconnectedNeighborhood => "disconnected_neighborhood",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeCurvature {
    pub u: usize,
    pub v: usize,
    /// NaN when the edge is tagged.
    pub value: f64,
    pub tag: EdgeTag,
}

/// Curvature of every edge, indexed like `NeighborGraph::edges`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureField {
    pub method: CurvatureMethod,
    pub edges: Vec<EdgeCurvature>,
}

pub fn curvature_field(g: &NeighborGraph, method: CurvatureMethod) -> CurvatureField {
    let index = (method == CurvatureMethod::OllivierExact).then(|| NeighborhoodIndex::new(g));
    let edges: Vec<EdgeCurvature> = g
        .edges()
        .par_iter()
        .map(|&(u, v)| {
            let value = match method {
                CurvatureMethod::Forman => Ok((4 - g.degree(u) as i64 - g.degree(v) as i64) as f64),
                CurvatureMethod::AugmentedForman => {
                    let t = g.common_neighbor_count(u, v) as i64;
                    Ok((4 - g.degree(u) as i64 - g.degree(v) as i64 + 3 * t) as f64)
                }
                CurvatureMethod::OllivierApprox => {
                    let (lo, hi) =
                        jost_liu(g.degree(u), g.degree(v), g.common_neighbor_count(u, v));
                    Ok((lo + hi) / 2.0)
                }
                CurvatureMethod::OllivierExact => {
                    let index = index.as_ref().expect("index built for exact method");
                    TransportProblem::for_edge_indexed(g, u, v, index).curvature()
                }
            };
            match value {
                Ok(value) => EdgeCurvature {
                    u,
                    v,
                    value,
                    tag: EdgeTag::Ok,
                },
                Err(_) => EdgeCurvature {
                    u,
                    v,
                    value: f64::NAN,
                    tag: EdgeTag::DisconnectedNeighborhood,
                },
            }
        })
        .collect();
    let tagged = edges.iter().filter(|e| e.tag != EdgeTag::Ok).count();
    if tagged > 0 {
        warn!("{tagged} edges tagged and excluded from {method} aggregates");
    }
    CurvatureField { method, edges }
}

impl CurvatureField {
    pub fn n_tagged(&self) -> usize {
        self.edges.iter().filter(|e| e.tag != EdgeTag::Ok).count()
    }

    /// Mean curvature of the untagged edges incident to `vertex`; `None` for
    /// isolated vertices or when every incident edge is tagged.
    pub fn scalar(&self, g: &NeighborGraph, vertex: usize) -> Option<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for &e in g.incident_edges(vertex) {
            let ec = &self.edges[e];
            if ec.tag == EdgeTag::Ok {
                sum += ec.value;
                count += 1;
            }
        }
        (count > 0).then(|| sum / count as f64)
    }

    pub fn scalars(&self, g: &NeighborGraph) -> Vec<Option<f64>> {
        (0..g.n_vertices()).map(|x| self.scalar(g, x)).collect()
    }

    /// CSV `u,v,method,value,tag`; tagged edges have an empty value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "u,v,method,value,tag")?;
        for e in &self.edges {
            if e.tag == EdgeTag::Ok {
                writeln!(w, "{},{},{},{},{}", e.u, e.v, self.method, e.value, e.tag.name())?;
            } else {
                writeln!(w, "{},{},{},,{}", e.u, e.v, self.method, e.tag.name())?;
            }
        }
        Ok(())
    }
}

/// Mean edge curvature around `vertex`; `Ok(None)` for an isolated vertex.
pub fn scalar_curvature(
    g: &NeighborGraph,
    vertex: usize,
    method: CurvatureMethod,
) -> Result<Option<f64>> {
    let n = g.n_vertices();
    if vertex >= n {
        return Err(Error::VertexOutOfRange { vertex, n });
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for &w in g.neighbors(vertex) {
        let value = match method {
            CurvatureMethod::Forman => forman(g, vertex, w).map(|f| f as f64),
            CurvatureMethod::AugmentedForman => augmented_forman(g, vertex, w).map(|f| f as f64),
            CurvatureMethod::OllivierApprox => ollivier_approx(g, vertex, w),
            CurvatureMethod::OllivierExact => ollivier_exact(g, vertex, w),
        };
        match value {
            Ok(x) => {
                sum += x;
                count += 1;
            }
            Err(Error::DisconnectedNeighborhood(..)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok((count > 0).then(|| sum / count as f64))
}
