//! Mask-one-sensor training with Adam, sensor-wise splits, early stopping,
//! resumable checkpoints and seed ensembles.

mod problem;
mod split;

pub use problem::{epoch_seed, fit_normalizer, make_training_set, EvalTarget, MaskedSample, TrainingProblem};
pub use split::{split_counts, SensorSplit, SPLIT_RATIO};

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{checkpoint, Adam, Tape, Tensor, TensorError};
use crate::model::persist::{load_model, save_model, Sidecar, SIDECAR_VERSION};
use crate::model::{Batch, GraPhyModel, ModelConfig, ModelError, NodeWindow, Preset};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Geo(#[from] crate::geo::GeoError),
    #[error(transparent)]
    Checkpoint(#[from] checkpoint::CheckpointError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("non-finite loss at epoch {epoch}, batch {batch} (hours {hours:?}); largest parameter norms: {norms}")]
    NonFinite { epoch: usize, batch: usize, hours: Vec<usize>, norms: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub seed: u64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Validation uses every `val_hour_stride`-th hour.
    pub val_hour_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::preset(Preset::S),
            seed: 0,
            lr: Adam::DEFAULT_LR,
            batch_size: 32,
            max_epochs: 500,
            patience: 20,
            val_hour_stride: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Epochs completed.
    pub epoch: usize,
    pub best_val_mse: f64,
    pub best_epoch: usize,
    pub patience_counter: usize,
    pub seed: u64,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    fn new(seed: u64) -> Self {
        Self { epoch: 0, best_val_mse: f64::INFINITY, best_epoch: 0, patience_counter: 0, seed, history: Vec::new() }
    }

    fn to_tensors(&self) -> Vec<(String, Tensor)> {
        let mut rows: Vec<f64> = Vec::with_capacity(3 * self.history.len().max(1));
        for r in &self.history {
            rows.extend([r.epoch as f64, r.train_loss, r.val_mse]);
        }
        let mut out = vec![(
            "train.state".to_string(),
            Tensor::row_vector(vec![
                self.epoch as f64,
                self.best_val_mse,
                self.best_epoch as f64,
                self.patience_counter as f64,
                self.seed as f64,
            ]),
        )];
        if !self.history.is_empty() {
            out.push((
                "train.history".to_string(),
                Tensor::matrix(self.history.len(), 3, rows).expect("history shape"),
            ));
        }
        out
    }

    fn from_tensors(entries: &[(String, Tensor)]) -> Result<Self, TrainError> {
        let find = |n: &str| entries.iter().find(|(k, _)| k == n).map(|(_, t)| t);
        let s = find("train.state").ok_or_else(|| TrainError::Data("checkpoint has no training state".into()))?;
        let d = s.data();
        if d.len() != 5 {
            return Err(TrainError::Data("malformed training state".into()));
        }
        let history = find("train.history")
            .map(|h| {
                (0..h.rows())
                    .map(|r| EpochRecord { epoch: h.get(r, 0) as usize, train_loss: h.get(r, 1), val_mse: h.get(r, 2) })
                    .collect()
            })
            .unwrap_or_default();
        Ok(Self {
            epoch: d[0] as usize,
            best_val_mse: d[1],
            best_epoch: d[2] as usize,
            patience_counter: d[3] as usize,
            seed: d[4] as u64,
            history,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation MSE.
    pub model: GraPhyModel,
    pub state: TrainState,
    pub stopped_early: bool,
}

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const HISTORY_FILE: &str = "history.json";

fn adam_entries(adam: &Adam, model: &GraPhyModel) -> Vec<(String, Tensor)> {
    let mut out = vec![("adam.step".to_string(), Tensor::scalar(adam.steps() as f64))];
    for ((name, _), (m, v)) in model.store.iter().zip(adam.first_moments().iter().zip(adam.second_moments())) {
        out.push((format!("adam.m.{name}"), m.clone()));
        out.push((format!("adam.v.{name}"), v.clone()));
    }
    out
}

fn restore_adam(adam: &mut Adam, model: &GraPhyModel, extra: &[(String, Tensor)]) -> Result<(), TrainError> {
    let find = |n: &str| {
        extra
            .iter()
            .find(|(k, _)| k == n)
            .map(|(_, t)| t.clone())
            .ok_or_else(|| TrainError::Data(format!("checkpoint lacks {n}")))
    };
    let step = find("adam.step")?.item()? as u64;
    let mut m = Vec::new();
    let mut v = Vec::new();
    for (name, _) in model.store.iter() {
        m.push(find(&format!("adam.m.{name}"))?);
        v.push(find(&format!("adam.v.{name}"))?);
    }
    adam.restore(step, m, v)?;
    Ok(())
}

fn param_norm_summary(model: &GraPhyModel) -> String {
    let mut norms: Vec<(String, f64)> = model.store.iter().map(|(n, p)| (n.to_string(), p.tensor.norm())).collect();
    norms.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    norms.iter().take(5).map(|(n, v)| format!("{n}={v:.4e}")).collect::<Vec<_>>().join(", ")
}

/// Mean squared error (in PM2.5 units) over validation targets.
pub fn validation_mse(problem: &TrainingProblem, model: &GraPhyModel, stride: usize) -> Result<f64, TrainError> {
    let hours: Vec<usize> = problem.hours.iter().copied().step_by(stride.max(1)).collect();
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in &problem.val {
        let preds = problem.predict_target(model, &problem.norm, t, &hours)?;
        for (p, &h) in preds.iter().zip(&hours) {
            sum += (p - t.truth[h]).powi(2);
            count += 1;
        }
    }
    Ok(sum / count.max(1) as f64)
}

/// One optimisation epoch; returns the mean batch loss (standardized units).
fn run_epoch(
    problem: &TrainingProblem,
    model: &mut GraPhyModel,
    adam: &mut Adam,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<f64, TrainError> {
    let n = problem.num_context();
    let samples = make_training_set(n, &problem.hours, cfg.seed, epoch);
    let w = problem.window;
    let masks: Vec<Vec<bool>> = (0..n).map(|m| (0..n).map(|i| i != m).collect()).collect();
    let mut total = 0.0;
    let mut batches = 0usize;
    for (bi, chunk) in samples.chunks(cfg.batch_size.max(1)).enumerate() {
        let readings: Vec<Vec<f64>> = chunk.iter().map(|s| problem.readings(s.hour)).collect();
        let windows: Vec<NodeWindow<'_>> = chunk
            .iter()
            .zip(&readings)
            .map(|(s, r)| NodeWindow { readings: r, observed: &masks[s.masked], wind: &problem.wind[s.hour] })
            .collect();
        let batch = Batch::build(&problem.ctx, &problem.norm, w, &windows)?;
        let rows: Arc<[usize]> = chunk.iter().enumerate().map(|(b, s)| batch.row_of(b, s.masked)).collect();
        let targets: Vec<f64> =
            chunk.iter().map(|s| problem.norm.standardize(problem.values[s.masked][s.hour])).collect();
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &batch)?;
        let picked = tape.gather_rows(out, rows)?;
        let target = tape.constant(Tensor::column(targets));
        let loss = tape.mse(picked, target)?;
        let lv = tape.value(loss).item()?;
        if !lv.is_finite() {
            return Err(TrainError::NonFinite {
                epoch,
                batch: bi,
                hours: chunk.iter().map(|s| s.hour).collect(),
                norms: param_norm_summary(model),
            });
        }
        model.store.zero_grad();
        tape.backward_into(loss, &mut model.store)?;
        adam.step(&mut model.store)?;
        total += lv;
        batches += 1;
    }
    Ok(total / batches.max(1) as f64)
}

fn sidecar(problem: &TrainingProblem, model: &GraPhyModel, seed: u64) -> Sidecar {
    Sidecar {
        version: SIDECAR_VERSION,
        config: model.config.clone(),
        seed,
        normalizer: problem.norm,
        context_sensors: problem.context.clone(),
    }
}

/// Trains one model. With `out_dir`, the best model is saved to
/// `best.ckpt`, the full resumable state to `last.ckpt` after every epoch,
/// and a readable history to `history.json`; an existing `last.ckpt` is
/// resumed.
pub fn train(problem: &TrainingProblem, cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome, TrainError> {
    if cfg.model.window != problem.window {
        return Err(TrainError::Data(format!(
            "model window {} differs from problem window {}",
            cfg.model.window, problem.window
        )));
    }
    if problem.val.is_empty() {
        return Err(TrainError::Data("training needs at least one validation sensor".into()));
    }
    let mut model = GraPhyModel::new(cfg.model.clone(), cfg.seed)?;
    let mut adam = Adam::new(&model.store, cfg.lr);
    let mut state = TrainState::new(cfg.seed);
    let mut best = model.clone();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|source| TrainError::Io { path: dir.to_path_buf(), source })?;
        let last = dir.join(LAST_CHECKPOINT);
        if last.exists() {
            let (m, sc, extra) = load_model(&last)?;
            if sc.config != cfg.model || sc.seed != cfg.seed {
                return Err(TrainError::Data(format!(
                    "{} was written with a different model config or seed",
                    last.display()
                )));
            }
            model = m;
            restore_adam(&mut adam, &model, &extra)?;
            state = TrainState::from_tensors(&extra)?;
            best = if dir.join(BEST_CHECKPOINT).exists() {
                load_model(&dir.join(BEST_CHECKPOINT))?.0
            } else {
                model.clone()
            };
            log::info!("resuming seed {} after epoch {}", cfg.seed, state.epoch);
        }
    }
    let mut stopped_early = state.patience_counter >= cfg.patience && state.epoch > 0;
    while !stopped_early && state.epoch < cfg.max_epochs {
        let epoch = state.epoch + 1;
        let train_loss = run_epoch(problem, &mut model, &mut adam, cfg, epoch)?;
        let val_mse = validation_mse(problem, &model, cfg.val_hour_stride)?;
        state.epoch = epoch;
        state.history.push(EpochRecord { epoch, train_loss, val_mse });
        if val_mse < state.best_val_mse {
            state.best_val_mse = val_mse;
            state.best_epoch = epoch;
            state.patience_counter = 0;
            best = model.clone();
            if let Some(dir) = out_dir {
                save_model(&dir.join(BEST_CHECKPOINT), &best, &sidecar(problem, &best, cfg.seed), &[])?;
            }
        } else {
            state.patience_counter += 1;
        }
        log::info!(
            "seed {} epoch {epoch}: train loss {train_loss:.5}, val MSE {val_mse:.4} (best {:.4} @ {})",
            cfg.seed,
            state.best_val_mse,
            state.best_epoch
        );
        if let Some(dir) = out_dir {
            let mut extra = adam_entries(&adam, &model);
            extra.extend(state.to_tensors());
            save_model(&dir.join(LAST_CHECKPOINT), &model, &sidecar(problem, &model, cfg.seed), &extra)?;
            let hist = serde_json::to_vec_pretty(&state).map_err(|e| TrainError::Data(e.to_string()))?;
            let path = dir.join(HISTORY_FILE);
            checkpoint::write_atomic(&path, &hist).map_err(|source| TrainError::Io { path, source })?;
        }
        stopped_early = state.patience_counter >= cfg.patience;
    }
    Ok(TrainOutcome { model: best, state, stopped_early })
}

/// Output directory of one ensemble member.
pub fn seed_dir(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("seed_{seed}"))
}

/// Trains one model per seed on the same problem, in parallel on the rayon
/// pool. With `out_dir`, seed `s` writes to [`seed_dir`]. Results follow
/// `seeds` order.
pub fn train_ensemble(
    problem: &TrainingProblem,
    base: &TrainConfig,
    seeds: &[u64],
    out_dir: Option<&Path>,
) -> Result<Vec<TrainOutcome>, TrainError> {
    if seeds.is_empty() {
        return Err(TrainError::Data("ensemble needs at least one seed".into()));
    }
    seeds
        .par_iter()
        .map(|&seed| {
            let cfg = TrainConfig { seed, ..base.clone() };
            let dir = out_dir.map(|d| seed_dir(d, seed));
            train(problem, &cfg, dir.as_deref())
        })
        .collect()
}

/// Loads the best checkpoint of every seed. All members must share the
/// normalizer and context sensors.
pub fn load_ensemble(out_dir: &Path, seeds: &[u64]) -> Result<(Vec<GraPhyModel>, Sidecar), TrainError> {
    let mut models = Vec::with_capacity(seeds.len());
    let mut first: Option<Sidecar> = None;
    for &seed in seeds {
        let path = seed_dir(out_dir, seed).join(BEST_CHECKPOINT);
        if !path.exists() {
            return Err(TrainError::Data(format!("missing checkpoint {}", path.display())));
        }
        let (m, sc, _) = load_model(&path)?;
        if let Some(f) = &first {
            if f.context_sensors != sc.context_sensors || f.normalizer != sc.normalizer {
                return Err(TrainError::Data(format!("{} was trained on a different split", path.display())));
            }
        }
        first.get_or_insert(sc);
        models.push(m);
    }
    let sc = first.ok_or_else(|| TrainError::Data("ensemble has no models".into()))?;
    Ok((models, sc))
}

/// Arithmetic mean of several models' predictions.
pub fn ensemble_predict(predictions: &[Vec<f64>]) -> Result<Vec<f64>, TrainError> {
    let first = predictions.first().ok_or_else(|| TrainError::Data("ensemble has no models".into()))?;
    if predictions.iter().any(|p| p.len() != first.len()) {
        return Err(TrainError::Data("ensemble members predicted different sample counts".into()));
    }
    let k = predictions.len() as f64;
    Ok((0..first.len()).map(|i| predictions.iter().map(|p| p[i]).sum::<f64>() / k).collect())
}

/// Confirms no validation or test sensor feeds any training input.
pub fn leakage_scan(problem: &TrainingProblem, split: &SensorSplit) -> Result<(), TrainError> {
    let inputs = problem.training_input_ids();
    let graph_ids: Vec<&str> = problem.ctx.graph.nodes().iter().map(|s| s.sensor_id.as_str()).collect();
    for id in split.test.iter().chain(&split.val) {
        if inputs.contains(&id.as_str()) || graph_ids.contains(&id.as_str()) {
            return Err(TrainError::Data(format!("held-out sensor {id} appears in training inputs")));
        }
    }
    for t in problem.val.iter().chain(&problem.test) {
        let ctx_ids = &t.ctx.graph.nodes()[..t.ctx.len() - 1];
        if ctx_ids.iter().any(|s| split.test.contains(&s.sensor_id) || split.val.contains(&s.sensor_id)) {
            return Err(TrainError::Data(format!("target {} sees another held-out sensor", t.sensor.sensor_id)));
        }
    }
    Ok(())
}
