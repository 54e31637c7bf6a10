//! kNN and r-neighborhood graphs on point clouds, plus the distance queries
//! the coefficient computations need.
//!
//! Graphs are immutable once built. Edge lengths are the Euclidean distances
//! between endpoint coordinates at build time, so later stages never touch the
//! raw coordinates again.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{sq_dist, PointCloud};
use crate::error::{Error, Result};

/// Sentinel hop count for unreachable vertices.
pub const UNREACHABLE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BuildParam {
    Knn { k: usize },
    Radius { r: f64 },
    /// Hand-assembled graphs (fixtures, imported edge lists).
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    param: BuildParam,
    edges: Vec<(usize, usize)>,
    lengths: Vec<f64>,
    adj: Vec<Vec<usize>>,
    adj_edges: Vec<Vec<usize>>,
}

impl NeighborGraph {
    /// Assembles a graph from undirected edges. Endpoint order within a pair
    /// does not matter; self-loops and duplicates are rejected.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize)],
        lengths: &[f64],
        param: BuildParam,
    ) -> Result<Self> {
        if edges.len() != lengths.len() {
            return Err(Error::LengthMismatch {
                expected: edges.len(),
                got: lengths.len(),
            });
        }
        let mut pairs: Vec<((usize, usize), f64)> = Vec::with_capacity(edges.len());
        for (&(a, b), &len) in edges.iter().zip(lengths) {
            for v in [a, b] {
                if v >= n {
                    return Err(Error::VertexOutOfRange { vertex: v, n });
                }
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {a}")));
            }
            if len.is_nan() {
                return Err(Error::BadEdgeLength { u: a, v: b, length: len });
            }
            pairs.push(((a.min(b), a.max(b)), len));
        }
        pairs.sort_by(|x, y| x.0.cmp(&y.0));
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge ({}, {})",
                w[0].0 .0, w[0].0 .1
            )));
        }
        Ok(Self::assemble(n, pairs, param))
    }

    /// `pairs` must be sorted, deduplicated and normalized to `u < v`.
    fn assemble(n: usize, pairs: Vec<((usize, usize), f64)>, param: BuildParam) -> Self {
        let mut incidence: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        let (edges, lengths): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        for (e, &(u, v)) in edges.iter().enumerate() {
            incidence[u].push((v, e));
            incidence[v].push((u, e));
        }
        let (adj, adj_edges): (Vec<Vec<usize>>, Vec<Vec<usize>>) = incidence
            .into_iter()
            .map(|mut list| {
                list.sort_unstable();
                list.into_iter().unzip()
            })
            .unzip();
        Self {
            param,
            edges,
            lengths,
            adj,
            adj_edges,
        }
    }

    pub fn param(&self) -> BuildParam {
        self.param
    }

    pub fn n_vertices(&self) -> usize {
        self.adj.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(u, v)` with `u < v`, sorted; the position is the edge id.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn edge_length(&self, edge: usize) -> f64 {
        self.lengths[edge]
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    /// Edge ids incident to `v`, aligned with [`Self::neighbors`].
    pub fn incident_edges(&self, v: usize) -> &[usize] {
        &self.adj_edges[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edge_id(u, v).is_some()
    }

    pub fn edge_id(&self, u: usize, v: usize) -> Option<usize> {
        let list = self.adj.get(u)?;
        list.binary_search(&v).ok().map(|pos| self.adj_edges[u][pos])
    }

    pub(crate) fn check_edge(&self, u: usize, v: usize) -> Result<usize> {
        let n = self.n_vertices();
        for x in [u, v] {
            if x >= n {
                return Err(Error::VertexOutOfRange { vertex: x, n });
            }
        }
        self.edge_id(u, v).ok_or(Error::EdgeNotFound(u, v))
    }

    /// |N(u) ∩ N(v)| by merging the sorted neighbor lists.
    pub fn common_neighbor_count(&self, u: usize, v: usize) -> usize {
        let (a, b) = (&self.adj[u], &self.adj[v]);
        let (mut i, mut j, mut count) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    count += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        count
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n_vertices();
        n <= 1 || bfs_hops(self, 0).iter().all(|&d| d != UNREACHABLE)
    }

    /// BFS hop counts from each source; [`UNREACHABLE`] marks disconnected pairs.
    pub fn hop_distances(&self, sources: &[usize]) -> Result<Vec<Vec<u32>>> {
        self.check_sources(sources)?;
        Ok(sources.iter().map(|&s| bfs_hops(self, s)).collect())
    }

    /// Shortest-path distances under the stored edge lengths;
    /// `f64::INFINITY` marks disconnected pairs.
    pub fn weighted_distances(&self, sources: &[usize]) -> Result<Vec<Vec<f64>>> {
        self.check_sources(sources)?;
        self.check_lengths()?;
        Ok(sources.iter().map(|&s| self.dijkstra(s, None)).collect())
    }

    pub fn check_lengths(&self) -> Result<()> {
        match self
            .lengths
            .iter()
            .position(|l| !(l.is_finite() && *l >= 0.0))
        {
            Some(e) => Err(Error::BadEdgeLength {
                u: self.edges[e].0,
                v: self.edges[e].1,
                length: self.lengths[e],
            }),
            None => Ok(()),
        }
    }

    fn check_sources(&self, sources: &[usize]) -> Result<()> {
        let n = self.n_vertices();
        match sources.iter().find(|&&s| s >= n) {
            Some(&s) => Err(Error::VertexOutOfRange { vertex: s, n }),
            None => Ok(()),
        }
    }

    /// Single-source Dijkstra. With `targets`, stops as soon as every target
    /// is settled; entries for unsettled vertices are then upper bounds only.
    pub fn dijkstra(&self, source: usize, targets: Option<&[usize]>) -> Vec<f64> {
        let n = self.n_vertices();
        let mut dist = vec![f64::INFINITY; n];
        let mut settled = vec![false; n];
        let mut remaining = match targets {
            Some(t) => {
                let mut want = vec![false; n];
                let mut count = 0;
                for &v in t {
                    if !want[v] {
                        want[v] = true;
                        count += 1;
                    }
                }
                Some((want, count))
            }
            None => None,
        };
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapEntry(0.0, source));
        while let Some(HeapEntry(d, u)) = heap.pop() {
            if settled[u] {
                continue;
            }
            settled[u] = true;
            if let Some((want, count)) = remaining.as_mut() {
                if want[u] {
                    *count -= 1;
                    if *count == 0 {
                        break;
                    }
                }
            }
            for (&v, &e) in self.adj[u].iter().zip(&self.adj_edges[u]) {
                let nd = d + self.lengths[e];
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(HeapEntry(nd, v));
                }
            }
        }
        dist
    }

    /// Edge-list export: a one-line JSON header followed by `u v length` lines.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        let header = EdgeListHeader {
            param: self.param,
            n_vertices: self.n_vertices(),
        };
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for (&(u, v), len) in self.edges.iter().zip(&self.lengths) {
            writeln!(w, "{u} {v} {len}")?;
        }
        Ok(())
    }

    pub fn read_edge_list<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header: EdgeListHeader = match lines.next() {
            Some(line) => serde_json::from_str(&line?)?,
            None => return Err(Error::Parse("missing edge-list header".into())),
        };
        let mut edges = Vec::new();
        let mut lengths = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Parse(format!("bad edge line {}: {line:?}", lineno + 2));
            let mut parts = line.split_whitespace();
            let u: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let v: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let len: f64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            edges.push((u, v));
            lengths.push(len);
        }
        Self::from_edges(header.n_vertices, &edges, &lengths, header.param)
    }
}

#[derive(Serialize, Deserialize)]
struct EdgeListHeader {
    #[serde(flatten)]
    param: BuildParam,
    n_vertices: usize,
}

#[derive(PartialEq)]
struct HeapEntry(f64, usize);

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties on vertex index
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn bfs_hops(g: &NeighborGraph, source: usize) -> Vec<u32> {
    let mut dist = vec![UNREACHABLE; g.n_vertices()];
    let mut queue = VecDeque::new();
    dist[source] = 0;
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        for &v in g.neighbors(u) {
            if dist[v] == UNREACHABLE {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Indices of the `k` nearest neighbors of `i`, ordered by (distance, index).
fn nearest(cloud: &PointCloud, i: usize, k: usize) -> Vec<(f64, usize)> {
    let p = cloud.point(i);
    let mut cand: Vec<(f64, usize)> = (0..cloud.len())
        .filter(|&j| j != i)
        .map(|j| (sq_dist(p, cloud.point(j)), j))
        .collect();
    let by_dist_then_index =
        |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, by_dist_then_index);
        cand.truncate(k);
    }
    cand.sort_unstable_by(by_dist_then_index);
    cand
}

/// Squared distances from `i` to every other point, sorted ascending with
/// index tie-break. Shared with the margin computations in `theory`.
pub(crate) fn sorted_sq_dists(cloud: &PointCloud, i: usize) -> Vec<(f64, usize)> {
    nearest(cloud, i, cloud.len() - 1)
}

/// kNN graph under the OR rule: `u ~ v` iff either is among the `k` nearest
/// neighbors of the other. Distance ties go to the lower vertex index.
pub fn build_knn_graph(cloud: &PointCloud, k: usize) -> Result<NeighborGraph> {
    let n = cloud.len();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if k >= n {
        return Err(Error::KTooLarge { k, n });
    }
    let lists: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| nearest(cloud, i, k))
        .collect();
    let mut pairs: Vec<((usize, usize), f64)> = lists
        .iter()
        .enumerate()
        .flat_map(|(i, list)| {
            list.iter()
                .map(move |&(d2, j)| ((i.min(j), i.max(j)), d2.sqrt()))
        })
        .collect();
    pairs.sort_by(|a, b| a.0.cmp(&b.0));
    pairs.dedup_by(|a, b| a.0 == b.0);
    Ok(NeighborGraph::assemble(n, pairs, BuildParam::Knn { k }))
}

/// r-neighborhood graph: `u ~ v` iff `‖x_u − x_v‖ < r` (strict).
pub fn build_r_graph(cloud: &PointCloud, r: f64) -> Result<NeighborGraph> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {r}")));
    }
    let n = cloud.len();
    let pairs: Vec<((usize, usize), f64)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let p = cloud.point(i);
            (i + 1..n).filter_map(move |j| {
                let d = sq_dist(p, cloud.point(j)).sqrt();
                (d < r).then_some(((i, j), d))
            })
        })
        .collect();
    Ok(NeighborGraph::assemble(n, pairs, BuildParam::Radius { r }))
}

/// Isomorphism under the index-preserving map: the edge sets coincide.
pub fn identity_isomorphic(g1: &NeighborGraph, g2: &NeighborGraph) -> Result<bool> {
    if g1.n_vertices() != g2.n_vertices() {
        return Err(Error::LengthMismatch {
            expected: g1.n_vertices(),
            got: g2.n_vertices(),
        });
    }
    Ok(g1.edges == g2.edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> PointCloud {
        PointCloud::new(1, xs.to_vec(), None).unwrap()
    }

    fn square() -> PointCloud {
        PointCloud::from_rows(
            &[vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]],
            None,
        )
        .unwrap()
    }

    fn explicit(n: usize, edges: &[(usize, usize)], lengths: &[f64]) -> NeighborGraph {
        NeighborGraph::from_edges(n, edges, lengths, BuildParam::Explicit).unwrap()
    }

    #[test]
    fn knn_on_a_line() {
        let g = build_knn_graph(&line(&[0.0, 1.0, 3.0]), 1).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.edge_lengths(), &[1.0, 2.0]);
    }

    #[test]
    fn knn_full_k_is_complete() {
        let g = build_knn_graph(&line(&[0.0, 0.3, 1.7, 2.0, 5.0]), 4).unwrap();
        assert_eq!(g.n_edges(), 10);
    }

    #[test]
    fn knn_square_is_a_cycle() {
        let g = build_knn_graph(&square(), 2).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 3), (1, 2), (2, 3)]);
    }

    #[test]
    fn knn_errors() {
        assert!(matches!(
            build_knn_graph(&line(&[0.0, 1.0]), 2),
            Err(Error::KTooLarge { k: 2, n: 2 })
        ));
        assert!(build_knn_graph(&line(&[0.0, 1.0]), 0).is_err());
    }

    #[test]
    fn knn_ties_go_to_lower_index() {
        // vertex 1 is equidistant from 0 and 2
        let g = build_knn_graph(&line(&[0.0, 1.0, 2.0, 10.0]), 1).unwrap();
        assert!(g.has_edge(0, 1));
        assert!(g.has_edge(1, 2)); // 2 picks 1
        assert!(g.has_edge(2, 3)); // 3 picks 2
        assert_eq!(g.n_edges(), 3);
    }

    #[test]
    fn r_graph_square() {
        assert_eq!(build_r_graph(&square(), 1.1).unwrap().n_edges(), 4);
        assert_eq!(build_r_graph(&square(), 0.5).unwrap().n_edges(), 0);
        assert_eq!(build_r_graph(&square(), 2.0).unwrap().n_edges(), 6);
        // strict inequality
        assert_eq!(build_r_graph(&square(), 1.0).unwrap().n_edges(), 0);
        assert!(build_r_graph(&square(), 0.0).is_err());
        assert!(build_r_graph(&square(), -1.0).is_err());
    }

    #[test]
    fn hop_distance_fixtures() {
        let path = explicit(3, &[(0, 1), (1, 2)], &[1.0, 1.0]);
        assert_eq!(path.hop_distances(&[0]).unwrap(), vec![vec![0, 1, 2]]);
        let pair = explicit(2, &[], &[]);
        assert_eq!(pair.hop_distances(&[0]).unwrap(), vec![vec![0, UNREACHABLE]]);
        let k4 = build_r_graph(&square(), 2.0).unwrap();
        assert_eq!(k4.hop_distances(&[2]).unwrap(), vec![vec![1, 1, 0, 1]]);
    }

    #[test]
    fn weighted_distance_fixtures() {
        let path = explicit(3, &[(0, 1), (1, 2)], &[1.0, 2.0]);
        assert_eq!(path.weighted_distances(&[0]).unwrap(), vec![vec![0.0, 1.0, 3.0]]);
        let pair = explicit(2, &[], &[]);
        assert_eq!(pair.weighted_distances(&[1]).unwrap()[0][0], f64::INFINITY);
        let tri = explicit(3, &[(0, 1), (1, 2), (0, 2)], &[1.0, 1.0, 3.0]);
        assert_eq!(tri.weighted_distances(&[0]).unwrap()[0][2], 2.0);
        let neg = explicit(2, &[(0, 1)], &[-1.0]);
        assert!(matches!(
            neg.weighted_distances(&[0]),
            Err(Error::BadEdgeLength { .. })
        ));
    }

    #[test]
    fn isomorphism_checks() {
        let c4 = explicit(4, &[(0, 1), (1, 2), (2, 3), (0, 3)], &[1.0; 4]);
        let p4 = explicit(4, &[(0, 1), (1, 2), (2, 3)], &[1.0; 3]);
        assert!(identity_isomorphic(&c4, &c4).unwrap());
        assert!(!identity_isomorphic(&c4, &p4).unwrap());
        assert!(identity_isomorphic(&c4, &explicit(3, &[], &[])).is_err());
        let cloud = line(&[0.0, 0.7, 1.9, 4.0, 4.2]);
        let g = build_knn_graph(&cloud, 2).unwrap();
        let h = build_knn_graph(&cloud.scaled(3.5).unwrap(), 2).unwrap();
        assert!(identity_isomorphic(&g, &h).unwrap());
    }

    #[test]
    fn from_edges_validation() {
        assert!(NeighborGraph::from_edges(2, &[(0, 0)], &[1.0], BuildParam::Explicit).is_err());
        assert!(NeighborGraph::from_edges(
            3,
            &[(0, 1), (1, 0)],
            &[1.0, 1.0],
            BuildParam::Explicit
        )
        .is_err());
        assert!(NeighborGraph::from_edges(2, &[(0, 2)], &[1.0], BuildParam::Explicit).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = build_knn_graph(&square(), 2).unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"kind":"knn","k":2,"n_vertices":4}"#));
        let back = NeighborGraph::read_edge_list(&buf[..]).unwrap();
        assert_eq!(back, g);
    }
}
