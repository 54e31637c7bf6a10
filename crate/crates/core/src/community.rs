//! Alignment between graph geometry and a binary label partition.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::curvature::{CurvatureField, EdgeTag};
use crate::error::{Error, Result};
use crate::graph::NeighborGraph;
use crate::stats::{mean, population_var};

/// Two-community assignment, one class id in `{0, 1}` per vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<u8>,
}

impl Partition {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l > 1) {
            return Err(Error::NonBinaryLabel { index, label });
        }
        Ok(Self { labels })
    }

    pub fn from_cloud(cloud: &PointCloud) -> Result<Self> {
        Self::new(cloud.binary_labels()?.to_vec())
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_single_class(&self) -> bool {
        self.labels.windows(2).all(|w| w[0] == w[1])
    }

    pub fn swapped(&self) -> Self {
        Self {
            labels: self.labels.iter().map(|l| 1 - l).collect(),
        }
    }

    fn check(&self, g: &NeighborGraph) -> Result<()> {
        if self.labels.len() != g.n_vertices() {
            return Err(Error::LengthMismatch {
                expected: g.n_vertices(),
                got: self.labels.len(),
            });
        }
        Ok(())
    }

    fn crosses(&self, u: usize, v: usize) -> bool {
        self.labels[u] != self.labels[v]
    }
}

/// Per-community `(internal edges, crossing edges, volume)`.
fn tallies(g: &NeighborGraph, p: &Partition) -> [(usize, usize, usize); 2] {
    let mut t = [(0, 0, 0); 2];
    for &(u, v) in g.edges() {
        let (cu, cv) = (p.labels[u] as usize, p.labels[v] as usize);
        if cu == cv {
            t[cu].0 += 1;
        } else {
            t[cu].1 += 1;
            t[cv].1 += 1;
        }
    }
    for (x, &c) in p.labels.iter().enumerate() {
        t[c as usize].2 += g.degree(x);
    }
    t
}

/// Newman modularity over ordered vertex pairs (including `u = v`).
pub fn modularity(g: &NeighborGraph, p: &Partition) -> Result<f64> {
    p.check(g)?;
    if g.n_edges() == 0 {
        return Err(Error::NoEdges);
    }
    let two_m = 2.0 * g.n_edges() as f64;
    Ok(tallies(g, p)
        .iter()
        .map(|&(internal, _, vol)| 2.0 * internal as f64 / two_m - (vol as f64 / two_m).powi(2))
        .sum())
}

/// `½ Σ_c cut(c) / vol(c)`.
pub fn normalized_cut(g: &NeighborGraph, p: &Partition) -> Result<f64> {
    p.check(g)?;
    let t = tallies(g, p);
    let mut total = 0.0;
    for (c, &(_, cut, vol)) in t.iter().enumerate() {
        if vol == 0 {
            return Err(Error::ZeroVolume(c as u8));
        }
        total += cut as f64 / vol as f64;
    }
    Ok(total / 2.0)
}

/// Second-smallest eigenvalue of the combinatorial Laplacian, clamped at 0.
pub fn algebraic_connectivity(g: &NeighborGraph) -> Result<f64> {
    let n = g.n_vertices();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "algebraic connectivity needs at least two vertices".into(),
        ));
    }
    let mut lap = DMatrix::<f64>::zeros(n, n);
    for &(u, v) in g.edges() {
        lap[(u, v)] = -1.0;
        lap[(v, u)] = -1.0;
    }
    for x in 0..n {
        lap[(x, x)] = g.degree(x) as f64;
    }
    let mut eig: Vec<f64> = lap.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig[1].max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapUndefined {
    NoIntraEdges,
    NoInterEdges,
    ZeroPooledVariance,
}

impl fmt::Display for GapUndefined {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NoIntraEdges => "no intra-community edges",
            Self::NoInterEdges => "no inter-community edges",
            Self::ZeroPooledVariance => "zero pooled variance",
        })
    }
}

/// Standardized difference of mean intra- and inter-community edge curvature,
/// pooled over population variances. Tagged edges are skipped.
pub fn curvature_gap(
    g: &NeighborGraph,
    field: &CurvatureField,
    p: &Partition,
) -> Result<std::result::Result<f64, GapUndefined>> {
    p.check(g)?;
    if field.edges.len() != g.n_edges() {
        return Err(Error::LengthMismatch {
            expected: g.n_edges(),
            got: field.edges.len(),
        });
    }
    let (mut intra, mut inter) = (Vec::new(), Vec::new());
    for e in field.edges.iter().filter(|e| e.tag == EdgeTag::Ok) {
        if p.crosses(e.u, e.v) {
            inter.push(e.value);
        } else {
            intra.push(e.value);
        }
    }
    Ok(gap_from_samples(&intra, &inter))
}

pub fn gap_from_samples(intra: &[f64], inter: &[f64]) -> std::result::Result<f64, GapUndefined> {
    let mi = mean(intra).ok_or(GapUndefined::NoIntraEdges)?;
    let mx = mean(inter).ok_or(GapUndefined::NoInterEdges)?;
    let var_i = population_var(intra).unwrap_or(0.0);
    let var_x = population_var(inter).unwrap_or(0.0);
    let sigma = ((var_i + var_x) / 2.0).sqrt();
    if sigma == 0.0 {
        return Err(GapUndefined::ZeroPooledVariance);
    }
    Ok((mi - mx) / sigma)
}

/// Drops points whose prediction differs from their label. Returns the
/// sub-cloud and, for each kept point, its index in the original cloud.
pub fn filter_misclassified(
    cloud: &PointCloud,
    predictions: &[u8],
) -> Result<(PointCloud, Vec<usize>)> {
    let labels = cloud.labels().ok_or(Error::MissingLabels)?;
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            got: predictions.len(),
        });
    }
    let kept: Vec<usize> = (0..labels.len())
        .filter(|&i| predictions[i] == labels[i])
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok((cloud.select(&kept)?, kept))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityReport {
    pub modularity: f64,
    pub ncut: f64,
    pub curvature_gap: Option<f64>,
    pub gap_undefined: Option<GapUndefined>,
    pub lambda2: f64,
    pub n_inter_edges: usize,
}

pub fn community_report(
    g: &NeighborGraph,
    field: &CurvatureField,
    p: &Partition,
) -> Result<CommunityReport> {
    let gap = curvature_gap(g, field, p)?;
    Ok(CommunityReport {
        modularity: modularity(g, p)?,
        ncut: normalized_cut(g, p)?,
        curvature_gap: gap.ok(),
        gap_undefined: gap.err(),
        lambda2: algebraic_connectivity(g)?,
        n_inter_edges: g.edges().iter().filter(|&&(u, v)| p.crosses(u, v)).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::{curvature_field, CurvatureMethod};
    use crate::graph::BuildParam;

    fn graph(n: usize, edges: &[(usize, usize)]) -> NeighborGraph {
        NeighborGraph::from_edges(n, edges, &vec![1.0; edges.len()], BuildParam::Explicit).unwrap()
    }

    fn two_triangles() -> NeighborGraph {
        graph(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
    }

    fn part(labels: &[u8]) -> Partition {
        Partition::new(labels.to_vec()).unwrap()
    }

    #[test]
    fn modularity_fixtures() {
        let components = part(&[0, 0, 0, 1, 1, 1]);
        assert!((modularity(&two_triangles(), &components).unwrap() - 0.5).abs() < 1e-15);
        let c4 = graph(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        assert!(modularity(&c4, &part(&[0, 0, 0, 0])).unwrap().abs() < 1e-15);
        let k2 = graph(2, &[(0, 1)]);
        assert_eq!(modularity(&k2, &part(&[0, 1])).unwrap(), -0.5);
        assert!(matches!(
            modularity(&graph(2, &[]), &part(&[0, 1])),
            Err(Error::NoEdges)
        ));
    }

    #[test]
    fn ncut_fixtures() {
        assert_eq!(normalized_cut(&two_triangles(), &part(&[0, 0, 0, 1, 1, 1])).unwrap(), 0.0);
        assert_eq!(normalized_cut(&graph(2, &[(0, 1)]), &part(&[0, 1])).unwrap(), 1.0);
        let c4 = graph(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        assert_eq!(normalized_cut(&c4, &part(&[0, 1, 0, 1])).unwrap(), 1.0);
        assert!(matches!(
            normalized_cut(&c4, &part(&[0, 0, 0, 0])),
            Err(Error::ZeroVolume(1))
        ));
    }

    #[test]
    fn lambda2_fixtures() {
        assert!(algebraic_connectivity(&two_triangles()).unwrap() < 1e-9);
        assert!((algebraic_connectivity(&graph(2, &[(0, 1)])).unwrap() - 2.0).abs() < 1e-12);
        let k3 = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        assert!((algebraic_connectivity(&k3).unwrap() - 3.0).abs() < 1e-12);
        assert!(algebraic_connectivity(&graph(1, &[])).is_err());
    }

    #[test]
    fn gap_fixtures() {
        assert_eq!(gap_from_samples(&[0.1, 0.3], &[0.3, 0.1]), Ok(0.0));
        let g = gap_from_samples(&[0.4, 0.6], &[-0.4, -0.6]).unwrap();
        assert!((g - 10.0).abs() < 1e-9);
        assert_eq!(
            gap_from_samples(&[0.5, 0.5], &[-0.5, -0.5]),
            Err(GapUndefined::ZeroPooledVariance)
        );
        assert_eq!(gap_from_samples(&[], &[1.0]), Err(GapUndefined::NoIntraEdges));
        assert_eq!(gap_from_samples(&[1.0], &[]), Err(GapUndefined::NoInterEdges));
    }

    #[test]
    fn gap_on_graph_is_swap_invariant() {
        let g = graph(
            6,
            &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3), (2, 4), (1, 5)],
        );
        let field = curvature_field(&g, CurvatureMethod::OllivierExact);
        let p = part(&[0, 0, 0, 1, 1, 1]);
        let a = curvature_gap(&g, &field, &p).unwrap().unwrap();
        let b = curvature_gap(&g, &field, &p.swapped()).unwrap().unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0);
        let report = community_report(&g, &field, &p).unwrap();
        assert_eq!(report.n_inter_edges, 3);
        assert!(report.lambda2 > 0.0);
    }

    #[test]
    fn filtering() {
        let cloud = PointCloud::from_rows(
            &[vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
            Some(vec![0, 0, 1, 1]),
        )
        .unwrap();
        let (same, kept) = filter_misclassified(&cloud, &[0, 0, 1, 1]).unwrap();
        assert_eq!(same, cloud);
        assert_eq!(kept, vec![0, 1, 2, 3]);
        let (sub, kept) = filter_misclassified(&cloud, &[0, 1, 1, 1]).unwrap();
        assert_eq!(kept, vec![0, 2, 3]);
        assert_eq!(sub.labels().unwrap(), &[0, 1, 1]);
        assert!(matches!(
            filter_misclassified(&cloud, &[1, 1, 0, 0]),
            Err(Error::EmptyCloud)
        ));
        let unlabeled = PointCloud::from_rows(&[vec![0.0]], None).unwrap();
        assert!(matches!(
            filter_misclassified(&unlabeled, &[0]),
            Err(Error::MissingLabels)
        ));
    }
}
