//! Point-cloud graphs, discrete Ricci curvature and the Ricci coefficient of
//! layer-to-layer graph evolution in feedforward networks.

pub mod cloud;
pub mod community;
pub mod curvature;
pub mod datasets;
pub mod error;
pub mod graph;
pub mod mlp;
pub mod ricci;
pub mod stats;
pub mod theory;
pub mod transport;

pub use cloud::PointCloud;
pub use error::{Error, Result};
pub use graph::{build_knn_graph, build_r_graph, identity_isomorphic, BuildParam, NeighborGraph};
