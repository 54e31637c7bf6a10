//! Point clouds: N samples in R^d with stable indices and optional class labels.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// N points in R^d stored row-major. Point `i` keeps index `i` for its whole
/// lifetime, which is what lets graphs built on different layers be compared
/// vertex by vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    labels: Option<Vec<u8>>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>, labels: Option<Vec<u8>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if coords.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if coords.len() % dim != 0 {
            return Err(Error::InvalidParameter(format!(
                "{} coordinates is not a multiple of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                point: pos / dim,
                dim: pos % dim,
            });
        }
        let n = coords.len() / dim;
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: l.len(),
                });
            }
        }
        Ok(Self {
            dim,
            coords,
            labels,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<u8>>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptyCloud)?;
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            coords.extend_from_slice(row);
        }
        Self::new(dim, coords, labels)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    /// Labels, checked to be binary class ids.
    pub fn binary_labels(&self) -> Result<&[u8]> {
        let labels = self.labels.as_deref().ok_or(Error::MissingLabels)?;
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l > 1) {
            return Err(Error::NonBinaryLabel { index, label });
        }
        Ok(labels)
    }

    pub fn with_labels(self, labels: Option<Vec<u8>>) -> Result<Self> {
        Self::new(self.dim, self.coords, labels)
    }

    /// Sub-cloud of the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let n = self.len();
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= n {
                return Err(Error::VertexOutOfRange { vertex: i, n });
            }
            coords.extend_from_slice(self.point(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Self::new(self.dim, coords, labels)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.dim,
            self.coords.iter().map(|c| c * factor).collect(),
            self.labels.clone(),
        )
    }

    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        sq_dist(self.point(i), self.point(j))
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.sq_dist(i, j).sqrt()
    }

    /// CSV with header `id,label,x_0,...,x_{d-1}`; the label column is empty
    /// for unlabeled clouds.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "id,label")?;
        for j in 0..self.dim {
            write!(w, ",x_{j}")?;
        }
        writeln!(w)?;
        for (i, p) in self.points().enumerate() {
            match &self.labels {
                Some(l) => write!(w, "{i},{}", l[i])?,
                None => write!(w, "{i},")?,
            }
            for c in p {
                write!(w, ",{c}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
