use std::collections::HashSet;

use super::sensor::{haversine_raw, planar_offset_km};
use super::{GeoError, SensorMeta, WindRecord};
use crate::autodiff::edge_index;

/// Smallest distance (km) used between two sensors; keeps `1/dist` finite.
pub const EPS_DIST_KM: f64 = 0.01;

/// Complete directed graph over a sensor set.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    nodes: Vec<SensorMeta>,
    dist: Vec<f64>,
    /// Unit (east, north) direction from node `j` to node `i`, stored at `i * n + j`.
    bearing: Vec<(f64, f64)>,
}

/// Per-edge convection inputs, indexed by [`edge_index`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConvectionEdges {
    pub wind_speed: Vec<f64>,
    pub alignment: Vec<f64>,
    pub dist: Vec<f64>,
}

impl Graph {
    pub fn build(sensors: Vec<SensorMeta>) -> Result<Self, GeoError> {
        if sensors.len() < 2 {
            return Err(GeoError::TooFewSensors(sensors.len()));
        }
        let mut seen = HashSet::new();
        for s in &sensors {
            s.validate()?;
            if !seen.insert(s.sensor_id.as_str()) {
                return Err(GeoError::DuplicateId(s.sensor_id.clone()));
            }
        }
        let n = sensors.len();
        let mut dist = vec![0.0; n * n];
        let mut bearing = vec![(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (a, b) = (&sensors[i], &sensors[j]);
                // Evaluate once per unordered pair so the matrix is exactly symmetric.
                let d = if i < j {
                    haversine_raw(a.latitude, a.longitude, b.latitude, b.longitude)
                } else {
                    dist[j * n + i]
                };
                dist[i * n + j] = d.max(EPS_DIST_KM);
                let (dx, dy) = planar_offset_km(b, a);
                let len = dx.hypot(dy);
                bearing[i * n + j] = if len > 0.0 { (dx / len, dy / len) } else { (0.0, 0.0) };
            }
        }
        Ok(Self { nodes: sensors, dist, bearing })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[SensorMeta] {
        &self.nodes
    }

    pub fn edge_count(&self) -> usize {
        let n = self.len();
        n * (n - 1)
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.len() + j]
    }

    /// All directed edges `(source, target)`, in [`edge_index`] order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.len();
        (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (j, i)))
    }

    /// Diffusion edge feature `1 / dist(j, i)`.
    pub fn inverse_distance(&self, source: usize, target: usize) -> f64 {
        1.0 / self.dist(source, target)
    }

    /// Cosine between the wind's blowing-toward vector and the direction from
    /// `source` to `target`. Zero for coincident sensors.
    pub fn wind_alignment(&self, source: usize, target: usize, wind: &WindRecord) -> f64 {
        let (we, wn) = wind.toward_unit();
        let (be, bn) = self.bearing[target * self.len() + source];
        (we * be + wn * bn).clamp(-1.0, 1.0)
    }

    /// `(w_v, w_A, dist)` for every edge.
    pub fn convection_edge_features(&self, wind: &WindRecord) -> ConvectionEdges {
        let n = self.len();
        let e = self.edge_count();
        let mut out =
            ConvectionEdges { wind_speed: vec![wind.speed_kmh; e], alignment: vec![0.0; e], dist: vec![0.0; e] };
        for (j, i) in self.edges() {
            let k = edge_index(n, i, j);
            out.alignment[k] = self.wind_alignment(j, i, wind);
            out.dist[k] = self.dist(j, i);
        }
        out
    }

    /// Weighted adjacency with `A[i][j] = 1 / dist(i, j)` and zero diagonal.
    pub fn adjacency(&self) -> Vec<f64> {
        let n = self.len();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    a[i * n + j] = 1.0 / self.dist[i * n + j];
                }
            }
        }
        a
    }

    /// Copy of the graph with `extra` appended as the last node.
    pub fn with_node(&self, extra: SensorMeta) -> Result<Self, GeoError> {
        let mut nodes = self.nodes.clone();
        nodes.push(extra);
        Self::build(nodes)
    }
}

/// Finds the wind record for the hour starting at `timestamp`.
pub fn wind_for_hour(
    records: &[WindRecord],
    timestamp: chrono::DateTime<chrono::Utc>,
) -> Result<&WindRecord, GeoError> {
    records
        .binary_search_by(|w| w.timestamp.cmp(&timestamp))
        .map(|k| &records[k])
        .map_err(|_| GeoError::MissingWind(timestamp.to_rfc3339()))
}
