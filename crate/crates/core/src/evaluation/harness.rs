use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{metrics, spatial_heterogeneity, EvalError, Metrics};
use crate::baselines::{
    distance_matrix, distances_to, fit_gp_grid, fit_variogram, gp_predict, idw, mean_fill, okriging, GpGrid, GpHyper,
    VARIOGRAM_BINS,
};
use crate::data_io::Dataset;
use crate::geo::{Graph, WindRecord};
use crate::model::{predict_node, GraPhyModel, GraphContext};
use crate::training::{ensemble_predict, EvalTarget, TrainingProblem};

pub const MEAN_FILL: &str = "MeanFill";
pub const IDW: &str = "IDW";
pub const OKRIGING: &str = "Okriging";
pub const GP: &str = "GP";
pub const GRAPHY: &str = "GraPhy";
pub const BASELINES: [&str; 4] = [MEAN_FILL, IDW, OKRIGING, GP];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub idw_power: f64,
    pub gp: GpHyper,
}

/// Fits the GP hyperparameters on the context sensors over `hours`.
pub fn fit_baselines(problem: &TrainingProblem, hours: &[usize], idw_power: f64) -> Result<BaselineConfig, EvalError> {
    let dist = distance_matrix(&problem.context);
    let per_hour: Vec<Vec<f64>> = hours.iter().map(|&h| problem.values.iter().map(|s| s[h]).collect()).collect();
    let gp = fit_gp_grid(&GpGrid::default(), &dist, &per_hour)?;
    Ok(BaselineConfig { idw_power, gp })
}

/// Evaluation samples: one per (target, hour), target-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSamples {
    pub target_ids: Vec<String>,
    pub hours: Vec<usize>,
    pub target: Vec<usize>,
    pub hour: Vec<usize>,
    pub truth: Vec<f64>,
    /// Spatial heterogeneity of all dataset sensors at the sample's hour.
    pub sh: Vec<f64>,
}

impl EvalSamples {
    pub fn new(ds: &Dataset, targets: &[EvalTarget], hours: &[usize]) -> Result<Self, EvalError> {
        let sh_hour: Vec<f64> =
            hours.iter().map(|&h| spatial_heterogeneity(&ds.hour_values(h))).collect::<Result<_, _>>()?;
        let mut s = Self {
            target_ids: targets.iter().map(|t| t.sensor.sensor_id.clone()).collect(),
            hours: hours.to_vec(),
            target: Vec::new(),
            hour: Vec::new(),
            truth: Vec::new(),
            sh: Vec::new(),
        };
        for (ti, t) in targets.iter().enumerate() {
            for (k, &h) in hours.iter().enumerate() {
                s.target.push(ti);
                s.hour.push(h);
                s.truth.push(t.truth[h]);
                s.sh.push(sh_hour[k]);
            }
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    /// Indices of samples whose hour SH is at or above the `q` quantile of
    /// the evaluated hours.
    pub fn sh_quantile_subset(&self, q: f64) -> Vec<usize> {
        let per_hour: Vec<f64> = (0..self.hours.len()).map(|k| self.sh[k]).collect();
        let mut sorted = per_hour.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let cut = sorted[((sorted.len() - 1) as f64 * q).round() as usize];
        (0..self.len()).filter(|&i| self.sh[i] >= cut).collect()
    }
}

/// Predictions of one model aligned with [`EvalSamples`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelPredictions {
    pub model: String,
    pub values: Vec<f64>,
}

/// Context sensors kept (indices into the problem's context list).
fn context_graph(problem: &TrainingProblem, keep: &[usize], target: &EvalTarget) -> Result<GraphContext, EvalError> {
    if keep.len() == problem.num_context() {
        return Ok(target.ctx.clone());
    }
    let mut nodes: Vec<_> = keep.iter().map(|&i| problem.context[i].clone()).collect();
    nodes.push(target.sensor.clone());
    Ok(GraphContext::new(Graph::build(nodes)?)?)
}

/// Per-model GraPhy predictions at one target using the kept context.
pub fn graphy_target_predictions(
    problem: &TrainingProblem,
    models: &[GraPhyModel],
    keep: &[usize],
    target: &EvalTarget,
    hours: &[usize],
) -> Result<Vec<Vec<f64>>, EvalError> {
    let ctx = context_graph(problem, keep, target)?;
    let w = problem.window;
    let samples: Vec<(Vec<f64>, WindRecord)> = hours
        .iter()
        .map(|&h| {
            let mut r = Vec::with_capacity((keep.len() + 1) * w);
            for &i in keep {
                r.extend_from_slice(&problem.values[i][h + 1 - w..=h]);
            }
            r.extend(std::iter::repeat_n(0.0, w));
            (r, problem.wind[h].clone())
        })
        .collect();
    models.iter().map(|m| Ok(predict_node(m, &ctx, &problem.norm, &samples, ctx.len() - 1)?)).collect()
}

/// Baseline predictions (in [`BASELINES`] order) at one target.
pub fn baseline_target_predictions(
    problem: &TrainingProblem,
    cfg: &BaselineConfig,
    keep: &[usize],
    target: &EvalTarget,
    hours: &[usize],
) -> Result<[Vec<f64>; 4], EvalError> {
    let sensors: Vec<_> = keep.iter().map(|&i| problem.context[i].clone()).collect();
    let dist = distance_matrix(&sensors);
    let to_target = distances_to(&target.sensor, &sensors);
    let mut out: [Vec<f64>; 4] = Default::default();
    for &h in hours {
        let v: Vec<f64> = keep.iter().map(|&i| problem.values[i][h]).collect();
        out[0].push(mean_fill(&v)?);
        out[1].push(idw(&to_target, &v, cfg.idw_power)?);
        let vg = fit_variogram(&dist, &v, VARIOGRAM_BINS)?;
        out[2].push(okriging(&dist, &to_target, &v, &vg)?.prediction);
        out[3].push(gp_predict(&dist, &to_target, &v, &cfg.gp.model_for(&v))?);
    }
    Ok(out)
}

/// Predictions of every baseline, every GraPhy model and their ensemble
/// over all (target, hour) samples. Targets are processed in parallel.
pub fn predict_all(
    problem: &TrainingProblem,
    targets: &[EvalTarget],
    models: &[GraPhyModel],
    cfg: &BaselineConfig,
    keep: &[usize],
    hours: &[usize],
) -> Result<Vec<ModelPredictions>, EvalError> {
    let per_target: Vec<([Vec<f64>; 4], Vec<Vec<f64>>)> = targets
        .par_iter()
        .map(|t| {
            let b = baseline_target_predictions(problem, cfg, keep, t, hours)?;
            let g = graphy_target_predictions(problem, models, keep, t, hours)?;
            Ok((b, g))
        })
        .collect::<Result<_, EvalError>>()?;
    let mut out: Vec<ModelPredictions> =
        BASELINES.iter().map(|m| ModelPredictions { model: m.to_string(), values: Vec::new() }).collect();
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); models.len()];
    for (b, g) in per_target {
        for (k, vals) in b.into_iter().enumerate() {
            out[k].values.extend(vals);
        }
        for (k, vals) in g.into_iter().enumerate() {
            members[k].extend(vals);
        }
    }
    if !models.is_empty() {
        out.push(ModelPredictions { model: GRAPHY.to_string(), values: ensemble_predict(&members)? });
        for (k, vals) in members.into_iter().enumerate() {
            out.push(ModelPredictions { model: format!("{GRAPHY}#{k}"), values: vals });
        }
    }
    Ok(out)
}

/// One row of a metrics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub experiment: String,
    pub model: String,
    pub metrics: Metrics,
}

/// Metrics of each model over the samples selected by `subset`.
pub fn report_rows(
    experiment: &str,
    samples: &EvalSamples,
    preds: &[ModelPredictions],
    subset: Option<&[usize]>,
) -> Result<Vec<MetricReport>, EvalError> {
    let all: Vec<usize>;
    let idx = match subset {
        Some(s) => s,
        None => {
            all = (0..samples.len()).collect();
            &all
        }
    };
    let truth: Vec<f64> = idx.iter().map(|&i| samples.truth[i]).collect();
    preds
        .iter()
        .map(|p| {
            let pv: Vec<f64> = idx.iter().map(|&i| p.values[i]).collect();
            Ok(MetricReport {
                experiment: experiment.to_string(),
                model: p.model.clone(),
                metrics: metrics(&pv, &truth)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub fractions: Vec<f64>,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self { fractions: vec![0.0, 0.2, 0.4, 0.6, 0.8], repeats: 5, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub model: String,
    /// Mean MAE over repeats, one entry per fraction.
    pub mae: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityExperiment {
    pub fractions: Vec<f64>,
    pub remaining: Vec<usize>,
    pub rows: Vec<DensityRow>,
    /// Kept context indices for each (fraction, repeat).
    pub removal_sets: Vec<Vec<Vec<usize>>>,
}

/// Context indices kept after removing `fraction` of `n` sensors.
pub fn kept_context(n: usize, fraction: f64, seed: u64, fraction_index: usize, repeat: usize) -> Vec<usize> {
    let remove = (fraction * n as f64).round() as usize;
    if remove == 0 {
        return (0..n).collect();
    }
    let mix = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add((fraction_index as u64) << 32 | repeat as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(mix);
    let removed = sample(&mut rng, n, remove.min(n));
    let mut keep: Vec<usize> = (0..n).filter(|i| !removed.iter().any(|r| r == *i)).collect();
    keep.sort_unstable();
    keep
}

/// Removes context sensors at each fraction (several random draws), reruns
/// every model without retraining, and averages MAE over the draws.
pub fn density_experiment(
    problem: &TrainingProblem,
    samples: &EvalSamples,
    targets: &[EvalTarget],
    models: &[GraPhyModel],
    cfg: &BaselineConfig,
    density: &DensityConfig,
) -> Result<DensityExperiment, EvalError> {
    let n = problem.num_context();
    let mut rows: Vec<DensityRow> = Vec::new();
    let mut remaining = Vec::new();
    let mut removal_sets = Vec::new();
    for (fi, &f) in density.fractions.iter().enumerate() {
        let mut sets: Vec<Vec<usize>> = Vec::new();
        let mut maes: Vec<(String, Vec<f64>)> = Vec::new();
        let mut cache: Vec<(Vec<usize>, Vec<(String, f64)>)> = Vec::new();
        for r in 0..density.repeats.max(1) {
            let keep = kept_context(n, f, density.seed, fi, r);
            if keep.len() < 2 {
                return Err(EvalError::TooFew { need: 2, got: keep.len() });
            }
            let result = match cache.iter().find(|(k, _)| *k == keep) {
                Some((_, res)) => res.clone(),
                None => {
                    let preds = predict_all(problem, targets, models, cfg, &keep, &samples.hours)?;
                    let res: Vec<(String, f64)> = report_rows("density", samples, &preds, None)?
                        .into_iter()
                        .map(|r| (r.model, r.metrics.mae))
                        .collect();
                    cache.push((keep.clone(), res.clone()));
                    res
                }
            };
            for (k, (m, v)) in result.into_iter().enumerate() {
                if r == 0 {
                    maes.push((m, vec![v]));
                } else {
                    maes[k].1.push(v);
                }
            }
            sets.push(keep);
        }
        remaining.push(sets[0].len());
        removal_sets.push(sets);
        for (m, vals) in maes {
            let mean = repeat_mean(&vals);
            match rows.iter_mut().find(|row| row.model == m) {
                Some(row) => row.mae.push(mean),
                None => rows.push(DensityRow { model: m, mae: vec![mean] }),
            }
        }
    }
    Ok(DensityExperiment { fractions: density.fractions.clone(), remaining, rows, removal_sets })
}

/// Mean over repeats; identical draws return their common value unrounded.
fn repeat_mean(vals: &[f64]) -> f64 {
    if vals.iter().all(|v| v.to_bits() == vals[0].to_bits()) {
        return vals[0];
    }
    vals.iter().sum::<f64>() / vals.len() as f64
}
