//! Model files: a tensor checkpoint holding the parameters plus a JSON
//! sidecar with everything needed to rebuild the model and its inputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GraPhyModel, ModelConfig, ModelError, Normalizer};
use crate::autodiff::checkpoint::{self, write_atomic};
use crate::autodiff::Tensor;
use crate::geo::SensorMeta;

pub const SIDECAR_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub version: u32,
    pub config: ModelConfig,
    pub seed: u64,
    pub normalizer: Normalizer,
    /// Sensors that form the context graph at inference time.
    pub context_sensors: Vec<SensorMeta>,
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("json")
}

/// Writes `<path>` (parameters, plus any `extra` tensors such as optimizer
/// state) and `<path>.json` atomically.
pub fn save_model(
    path: &Path,
    model: &GraPhyModel,
    sidecar: &Sidecar,
    extra: &[(String, Tensor)],
) -> Result<(), ModelError> {
    let mut entries = model.store.named_tensors();
    entries.extend_from_slice(extra);
    checkpoint::save(path, &entries)?;
    let side = sidecar_path(path);
    let json = serde_json::to_vec_pretty(sidecar)
        .map_err(|e| ModelError::Sidecar { path: side.display().to_string(), message: e.to_string() })?;
    write_atomic(&side, &json)
        .map_err(|e| ModelError::Sidecar { path: side.display().to_string(), message: e.to_string() })?;
    Ok(())
}

pub fn load_sidecar(path: &Path) -> Result<Sidecar, ModelError> {
    let side = sidecar_path(path);
    let err = |message: String| ModelError::Sidecar { path: side.display().to_string(), message };
    let text = std::fs::read(&side).map_err(|e| err(e.to_string()))?;
    let sc: Sidecar = serde_json::from_slice(&text).map_err(|e| err(e.to_string()))?;
    if sc.version != SIDECAR_VERSION {
        return Err(err(format!("unsupported sidecar version {}", sc.version)));
    }
    Ok(sc)
}

/// Loads a model and returns it with its sidecar and any non-parameter
/// entries stored in the checkpoint.
pub fn load_model(path: &Path) -> Result<(GraPhyModel, Sidecar, Vec<(String, Tensor)>), ModelError> {
    let sc = load_sidecar(path)?;
    let entries = checkpoint::load(path)?;
    let mut model = GraPhyModel::new(sc.config.clone(), sc.seed)?;
    model.store.load_named(&entries)?;
    let extra = entries.into_iter().filter(|(n, _)| model.store.id_of(n).is_none()).collect();
    Ok((model, sc, extra))
}
