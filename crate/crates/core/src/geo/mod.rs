//! Sensor graphs, edge features and the derived graph operators.

mod graph;
mod matrices;
mod sensor;

pub use graph::{wind_for_hour, ConvectionEdges, Graph, EPS_DIST_KM};
pub use matrices::{
    local_norm_diagonal, power_iteration, scaled_laplacian, GraphMatrices, ScaledLaplacian, LAMBDA_MAX_FALLBACK,
    POWER_ITER_MAX, POWER_ITER_TOL,
};
pub use sensor::{haversine_km, SensorMeta, WindRecord, EARTH_RADIUS_KM};

use crate::autodiff::TensorError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeoError {
    #[error("sensor {id}: coordinates ({latitude}, {longitude}) out of range")]
    InvalidCoordinate { id: String, latitude: f64, longitude: f64 },
    #[error("invalid wind record: speed {speed_kmh} km/h, direction {direction_deg} deg")]
    InvalidWind { speed_kmh: f64, direction_deg: f64 },
    #[error("duplicate sensor id {0}")]
    DuplicateId(String),
    #[error("a graph needs at least 2 sensors, got {0}")]
    TooFewSensors(usize),
    #[error("node {0} has zero degree")]
    ZeroDegree(usize),
    #[error("adjacency must be square, got {0:?}")]
    NotSquare(Vec<usize>),
    #[error("no wind record for hour {0}")]
    MissingWind(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
