use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::autodiff::Tensor;
use crate::geo::{Graph, GraphMatrices, WindRecord};

/// Raw convection features per edge: wind speed, wind alignment, distance.
pub const EDGE_FEATURES: usize = 3;

/// Scaling applied to readings and edge features before they reach the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub pm_mean: f64,
    pub pm_std: f64,
    pub wind_scale: f64,
    pub dist_scale: f64,
}

impl Default for Normalizer {
    fn default() -> Self {
        Self { pm_mean: 0.0, pm_std: 1.0, wind_scale: 1.0, dist_scale: 1.0 }
    }
}

impl Normalizer {
    pub fn standardize(&self, pm: f64) -> f64 {
        (pm - self.pm_mean) / self.pm_std
    }

    pub fn destandardize(&self, z: f64) -> f64 {
        z * self.pm_std + self.pm_mean
    }
}

/// A graph together with its precomputed operators.
#[derive(Clone, Debug)]
pub struct GraphContext {
    pub graph: Graph,
    pub matrices: Arc<GraphMatrices>,
}

impl GraphContext {
    pub fn new(graph: Graph) -> Result<Self, ModelError> {
        let matrices = Arc::new(GraphMatrices::from_graph(&graph)?);
        Ok(Self { graph, matrices })
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    /// Normalized `(w_v, w_A, dist)` rows in edge order.
    pub fn edge_rows(&self, wind: &WindRecord, norm: &Normalizer) -> Vec<f64> {
        let f = self.graph.convection_edge_features(wind);
        let mut out = Vec::with_capacity(f.dist.len() * EDGE_FEATURES);
        for k in 0..f.dist.len() {
            out.push(f.wind_speed[k] / norm.wind_scale);
            out.push(f.alignment[k]);
            out.push(f.dist[k] / norm.dist_scale);
        }
        out
    }
}

/// One graph snapshot: `window` readings per node (row-major by node, oldest
/// first) and which nodes are observed. Unobserved nodes are fed as zeros with
/// flag 0.
#[derive(Clone, Debug)]
pub struct NodeWindow<'a> {
    pub readings: &'a [f64],
    pub observed: &'a [bool],
    pub wind: &'a WindRecord,
}

/// Stacked samples that share one graph.
#[derive(Clone, Debug)]
pub struct Batch {
    pub nodes: usize,
    pub blocks: usize,
    /// `(blocks * nodes) x (window + 1)`.
    pub node_inputs: Tensor,
    /// `(blocks * nodes * (nodes - 1)) x EDGE_FEATURES`.
    pub edge_raw: Arc<Tensor>,
    pub matrices: Arc<GraphMatrices>,
}

impl Batch {
    pub fn build(
        ctx: &GraphContext,
        norm: &Normalizer,
        window: usize,
        samples: &[NodeWindow<'_>],
    ) -> Result<Self, ModelError> {
        let n = ctx.len();
        if samples.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let mut inputs = Vec::with_capacity(samples.len() * n * (window + 1));
        let mut edges = Vec::with_capacity(samples.len() * n * (n - 1) * EDGE_FEATURES);
        for s in samples {
            if s.observed.len() != n || s.readings.len() != n * window {
                return Err(ModelError::NodeMismatch { expected: n, got: s.observed.len() });
            }
            for (i, &obs) in s.observed.iter().enumerate() {
                if obs {
                    inputs.extend(s.readings[i * window..(i + 1) * window].iter().map(|&v| norm.standardize(v)));
                    inputs.push(1.0);
                } else {
                    inputs.extend(std::iter::repeat_n(0.0, window + 1));
                }
            }
            edges.extend(ctx.edge_rows(s.wind, norm));
        }
        let blocks = samples.len();
        Ok(Self {
            nodes: n,
            blocks,
            node_inputs: Tensor::matrix(blocks * n, window + 1, inputs)?,
            edge_raw: Arc::new(Tensor::matrix(blocks * n * (n - 1), EDGE_FEATURES, edges)?),
            matrices: ctx.matrices.clone(),
        })
    }

    /// Direct construction from prepared tensors.
    pub fn from_parts(node_inputs: Tensor, edge_raw: Tensor, matrices: Arc<GraphMatrices>) -> Result<Self, ModelError> {
        let nodes = matrices.len();
        if nodes < 2 || !node_inputs.rows().is_multiple_of(nodes) {
            return Err(ModelError::NodeMismatch { expected: nodes, got: node_inputs.rows() });
        }
        let blocks = node_inputs.rows() / nodes;
        if edge_raw.rows() != blocks * nodes * (nodes - 1) || edge_raw.cols() != EDGE_FEATURES {
            return Err(ModelError::NodeMismatch { expected: blocks * nodes * (nodes - 1), got: edge_raw.rows() });
        }
        Ok(Self { nodes, blocks, node_inputs, edge_raw: Arc::new(edge_raw), matrices })
    }

    pub fn rows(&self) -> usize {
        self.nodes * self.blocks
    }

    /// Row of node `node` within block `block`.
    pub fn row_of(&self, block: usize, node: usize) -> usize {
        block * self.nodes + node
    }
}
