use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{SensorSplit, TrainError};
use crate::data_io::Dataset;
use crate::geo::{Graph, SensorMeta, WindRecord};
use crate::model::{predict_node, GraPhyModel, GraphContext, Normalizer};

/// One training instance: at `hour`, training sensor `masked` is hidden.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskedSample {
    pub hour: usize,
    pub masked: usize,
}

/// A location whose values are predicted from the context sensors.
#[derive(Clone, Debug)]
pub struct EvalTarget {
    pub sensor: SensorMeta,
    /// Context sensors followed by the target as the last node.
    pub ctx: GraphContext,
    pub truth: Vec<f64>,
}

/// Context sensors, their readings, and the held-out targets of one split.
#[derive(Clone, Debug)]
pub struct TrainingProblem {
    pub window: usize,
    pub context: Vec<SensorMeta>,
    /// `values[s][h]` for context sensor `s`.
    pub values: Vec<Vec<f64>>,
    pub wind: Vec<WindRecord>,
    /// Hours usable as samples (those with a full history window).
    pub hours: Vec<usize>,
    pub ctx: GraphContext,
    pub norm: Normalizer,
    pub val: Vec<EvalTarget>,
    pub test: Vec<EvalTarget>,
}

fn lookup<'a>(ds: &'a Dataset, id: &str) -> Result<(usize, &'a SensorMeta), TrainError> {
    ds.sensor_index(id)
        .map(|i| (i, &ds.sensors[i]))
        .ok_or_else(|| TrainError::Data(format!("sensor {id} is not in the dataset")))
}

impl TrainingProblem {
    pub fn new(ds: &Dataset, split: &SensorSplit, window: usize) -> Result<Self, TrainError> {
        split.validate()?;
        if window == 0 || window > ds.num_hours() {
            return Err(TrainError::Data(format!("window {window} does not fit {} hours", ds.num_hours())));
        }
        let mut context = Vec::new();
        let mut values = Vec::new();
        for id in &split.train {
            let (i, s) = lookup(ds, id)?;
            context.push(s.clone());
            values.push(ds.pm25[i].clone());
        }
        let ctx = GraphContext::new(Graph::build(context.clone())?)?;
        let norm = fit_normalizer(&values, &ds.wind, &ctx.graph);
        let targets = |ids: &[String]| -> Result<Vec<EvalTarget>, TrainError> {
            ids.iter()
                .map(|id| {
                    let (i, s) = lookup(ds, id)?;
                    Ok(EvalTarget {
                        sensor: s.clone(),
                        ctx: GraphContext::new(ctx.graph.with_node(s.clone())?)?,
                        truth: ds.pm25[i].clone(),
                    })
                })
                .collect()
        };
        Ok(Self {
            window,
            val: targets(&split.val)?,
            test: targets(&split.test)?,
            context,
            values,
            wind: ds.wind.clone(),
            hours: (window - 1..ds.num_hours()).collect(),
            ctx,
            norm,
        })
    }

    pub fn num_context(&self) -> usize {
        self.context.len()
    }

    /// Context readings for `hour`: `window` values per sensor, oldest first.
    pub fn readings(&self, hour: usize) -> Vec<f64> {
        let w = self.window;
        let mut out = Vec::with_capacity(self.values.len() * w);
        for s in &self.values {
            out.extend_from_slice(&s[hour + 1 - w..=hour]);
        }
        out
    }

    /// GraPhy predictions at `target` for the given hours.
    pub fn predict_target(
        &self,
        model: &GraPhyModel,
        norm: &Normalizer,
        target: &EvalTarget,
        hours: &[usize],
    ) -> Result<Vec<f64>, TrainError> {
        let samples: Vec<(Vec<f64>, WindRecord)> = hours
            .iter()
            .map(|&h| {
                let mut r = self.readings(h);
                r.extend(std::iter::repeat_n(0.0, self.window));
                (r, self.wind[h].clone())
            })
            .collect();
        Ok(predict_node(model, &target.ctx, norm, &samples, target.ctx.len() - 1)?)
    }

    /// Ids of every sensor whose readings can enter a training input.
    pub fn training_input_ids(&self) -> Vec<&str> {
        self.context.iter().map(|s| s.sensor_id.as_str()).collect()
    }
}

/// Standardization from context data: PM2.5 mean/std, mean wind speed and
/// mean pairwise distance.
pub fn fit_normalizer(values: &[Vec<f64>], wind: &[WindRecord], graph: &Graph) -> Normalizer {
    let all: Vec<f64> = values.iter().flatten().copied().collect();
    let n = all.len().max(1) as f64;
    let pm_mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|v| (v - pm_mean).powi(2)).sum::<f64>() / n;
    let pm_std = if var > 0.0 { var.sqrt() } else { 1.0 };
    let wind_mean = wind.iter().map(|w| w.speed_kmh).sum::<f64>() / wind.len().max(1) as f64;
    let m = graph.len();
    let mut dsum = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                dsum += graph.dist(i, j);
            }
        }
    }
    let dist_mean = dsum / (m * (m - 1)).max(1) as f64;
    Normalizer {
        pm_mean,
        pm_std,
        wind_scale: if wind_mean > 0.0 { wind_mean } else { 1.0 },
        dist_scale: if dist_mean > 0.0 { dist_mean } else { 1.0 },
    }
}

/// Seed for epoch-level randomness, derived from the run seed.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (epoch as u64).wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// One sample per hour with a uniformly drawn masked sensor, in shuffled
/// order. Deterministic in `(seed, epoch)`.
pub fn make_training_set(n_sensors: usize, hours: &[usize], seed: u64, epoch: usize) -> Vec<MaskedSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(seed, epoch));
    let mut out: Vec<MaskedSample> =
        hours.iter().map(|&hour| MaskedSample { hour, masked: rng.random_range(0..n_sensors) }).collect();
    out.shuffle(&mut rng);
    out
}
