//! Sensor data ingestion, the canonical dataset directory, and a
//! convection-diffusion simulator for synthetic ground truth.

mod dataset;
mod ingest;
mod simulate;
mod synth;

pub use dataset::{export_dataset, import_dataset, Dataset, Manifest, Provenance, MANIFEST_VERSION};
pub use ingest::{
    gap_filter, ingest_dir, ingest_pm25, ingest_wind, parse_timestamp, read_sensors, GapFilterResult, IngestReport,
    Pm25Series, RawReading, SpeedUnit,
};
pub use simulate::{FieldSnapshot, Grid, PointSource, Simulator, MAX_SUBSTEPS};
pub use synth::{generate_dataset, simulate_field, SimulationOutput, SourceSchedule, SynthDatasetSpec, WindSchedule};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{0}")]
    Invalid(String),
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Geo(#[from] crate::geo::GeoError),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        DataError::Csv { path: path.into(), message: message.to_string() }
    }
}
