use std::io::Write as _;
use std::path::Path;

use chrono::{DateTime, Utc};
use graphy::data_io::{
    export_dataset, generate_dataset, import_dataset, ingest_dir, parse_timestamp, Dataset, SynthDatasetSpec,
};
use graphy::evaluation::{evaluate, DensityConfig, EvalOptions, BASELINES, GRAPHY};
use graphy::geo::{Graph, SensorMeta};
use graphy::model::{predict_node, GraphContext, ModelConfig};
use graphy::training::{load_ensemble, train_ensemble, SensorSplit, TrainConfig, TrainingProblem};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

pub const SPLIT_FILE: &str = "split.json";
pub const TRAIN_SUMMARY: &str = "train_summary.json";
pub const SYNTH_SPEC: &str = "synth_spec.json";

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    write_file(path, &bytes)
}

pub fn ingest(raw: &Path, out: &Path) -> Result<(), CliError> {
    let (ds, rep) = ingest_dir(raw)?;
    log::info!(
        "ingested {} pm2.5 rows: {} skipped, {} negative values clamped, {} hours filled",
        rep.pm25_rows,
        rep.skipped_rows,
        rep.clamped_negative,
        rep.hours_filled
    );
    log::info!(
        "wind: {} rows, {} skipped, {} hours filled from the previous record",
        rep.wind_rows,
        rep.skipped_wind_rows,
        rep.wind_hours_filled
    );
    if rep.skipped_rows > 0 || rep.skipped_wind_rows > 0 {
        log::warn!("skipped {} pm2.5 rows and {} wind rows", rep.skipped_rows, rep.skipped_wind_rows);
    }
    if !rep.dropped_sensors.is_empty() {
        log::warn!("dropped sensors: {}", rep.dropped_sensors.join(", "));
    }
    log::info!("kept {} of {} sensors over {} hours", rep.sensors_kept, rep.sensors_in, ds.num_hours());
    export_dataset(out, &ds)?;
    write_json(&out.join("ingest_report.json"), &rep)
}

pub fn synth(spec_path: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let mut spec = match spec_path {
        Some(p) => {
            let text =
                std::fs::read(p).map_err(|e| CliError::User(format!("cannot read spec {}: {e}", p.display())))?;
            serde_json::from_slice::<SynthDatasetSpec>(&text)
                .map_err(|e| CliError::User(format!("{}: {e}", p.display())))?
        }
        None => SynthDatasetSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let (ds, _) = generate_dataset(&spec)?;
    export_dataset(out, &ds)?;
    write_json(&out.join(SYNTH_SPEC), &spec)?;
    log::info!("wrote {} sensors x {} hours to {}", ds.sensors.len(), ds.num_hours(), out.display());
    Ok(())
}

fn sensor_ids(ds: &Dataset) -> Vec<String> {
    ds.sensors.iter().map(|s| s.sensor_id.clone()).collect()
}

fn train_config(cfg: &RunConfig) -> TrainConfig {
    let mut model = ModelConfig::preset(cfg.preset).with_window(cfg.window);
    model.local_norm = cfg.local_norm;
    model.aggregation = cfg.aggregation;
    TrainConfig {
        model,
        seed: 0,
        lr: cfg.lr,
        batch_size: cfg.batch_size,
        max_epochs: cfg.max_epochs,
        patience: cfg.patience,
        val_hour_stride: cfg.val_hour_stride,
    }
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    epochs: usize,
    best_epoch: usize,
    best_val_mse: f64,
    stopped_early: bool,
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.require_out()?;
    let ds = import_dataset(cfg.require_dataset()?)?;
    let split = SensorSplit::random(&sensor_ids(&ds), cfg.split_seed)?;
    let problem = TrainingProblem::new(&ds, &split, cfg.window)?;
    cfg.write_resolved(out)?;
    write_json(&out.join(SPLIT_FILE), &split)?;
    let base = train_config(cfg);
    log::info!(
        "training {} layers x {} hidden on {} context sensors, seeds {:?}",
        base.model.layers,
        base.model.hidden,
        problem.num_context(),
        cfg.seeds
    );
    let outcomes = train_ensemble(&problem, &base, &cfg.seeds, Some(out))?;
    let summary: Vec<SeedSummary> = cfg
        .seeds
        .iter()
        .zip(&outcomes)
        .map(|(&seed, o)| SeedSummary {
            seed,
            epochs: o.state.epoch,
            best_epoch: o.state.best_epoch,
            best_val_mse: o.state.best_val_mse,
            stopped_early: o.stopped_early,
        })
        .collect();
    write_json(&out.join(TRAIN_SUMMARY), &summary)
}

/// The split stored next to the checkpoints, or the configured one.
fn load_split(models: &Path, ds: &Dataset, cfg: &RunConfig) -> Result<SensorSplit, CliError> {
    let path = models.join(SPLIT_FILE);
    if path.exists() {
        let text = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        let split: SensorSplit =
            serde_json::from_slice(&text).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
        return Ok(split);
    }
    Ok(SensorSplit::random(&sensor_ids(ds), cfg.split_seed)?)
}

pub fn evaluate_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.require_out()?;
    let models_dir = cfg.require_models()?;
    let ds = import_dataset(cfg.require_dataset()?)?;
    let split = load_split(models_dir, &ds, cfg)?;
    let (models, sidecar) = load_ensemble(models_dir, &cfg.seeds)?;
    let problem = TrainingProblem::new(&ds, &split, sidecar.config.window)?;
    if sidecar.context_sensors != problem.context {
        return Err(CliError::User(format!(
            "checkpoints in {} were trained on different context sensors",
            models_dir.display()
        )));
    }
    cfg.write_resolved(out)?;
    let opts = EvalOptions {
        idw_power: cfg.idw_power,
        hour_stride: cfg.hour_stride,
        top_sh_quantile: cfg.top_sh_quantile,
        density: cfg.density.then(|| DensityConfig {
            repeats: cfg.density_repeats,
            seed: cfg.density_seed,
            ..DensityConfig::default()
        }),
        density_hour_stride: cfg.density_hour_stride,
    };
    let run = evaluate(&ds, &problem, &models, &opts)?;
    let text = run.report.render_text();
    write_file(&out.join("report.txt"), text.as_bytes())?;
    write_json(&out.join("summary.json"), &run.report.summary())?;
    write_json(&out.join("report.json"), &run.report)?;
    write_json(&out.join("baselines.json"), &run.baselines)?;
    let mut csv = String::from("sensor_id,timestamp,truth,sh");
    let order: Vec<&str> = BASELINES.iter().copied().chain(std::iter::once(GRAPHY)).collect();
    for m in &order {
        csv.push(',');
        csv.push_str(m);
    }
    csv.push('\n');
    let s = &run.samples;
    for i in 0..s.len() {
        csv.push_str(&format!(
            "{},{},{},{}",
            s.target_ids[s.target[i]],
            fmt_ts(&ds.hours[s.hour[i]]),
            s.truth[i],
            s.sh[i]
        ));
        for m in &order {
            let v = run.preds.iter().find(|p| p.model == *m).map_or(f64::NAN, |p| p.values[i]);
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    write_file(&out.join("predictions.csv"), csv.as_bytes())?;
    print!("{text}");
    Ok(())
}

fn fmt_ts(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Query locations for `interpolate`.
#[derive(Clone, Debug, PartialEq)]
pub enum Locations {
    Point {
        lat: f64,
        lon: f64,
    },
    /// Inclusive lat/lon ranges sampled on an `n_lat x n_lon` lattice.
    Grid {
        lat: (f64, f64),
        lon: (f64, f64),
        n_lat: usize,
        n_lon: usize,
    },
}

impl Locations {
    pub fn parse_grid(spec: &str) -> Result<Self, CliError> {
        let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
        let bad = || CliError::User(format!("grid {spec:?}: expected lat_min,lat_max,lon_min,lon_max,n_lat,n_lon"));
        if parts.len() != 6 {
            return Err(bad());
        }
        let f = |i: usize| parts[i].parse::<f64>().map_err(|_| bad());
        let n = |i: usize| parts[i].parse::<usize>().ok().filter(|&v| v >= 1).ok_or_else(bad);
        Ok(Locations::Grid { lat: (f(0)?, f(1)?), lon: (f(2)?, f(3)?), n_lat: n(4)?, n_lon: n(5)? })
    }

    fn points(&self) -> Vec<(f64, f64)> {
        let lerp =
            |(a, b): (f64, f64), i: usize, n: usize| if n == 1 { a } else { a + (b - a) * i as f64 / (n - 1) as f64 };
        match *self {
            Locations::Point { lat, lon } => vec![(lat, lon)],
            Locations::Grid { lat, lon, n_lat, n_lon } => {
                (0..n_lat).flat_map(|i| (0..n_lon).map(move |j| (lerp(lat, i, n_lat), lerp(lon, j, n_lon)))).collect()
            }
        }
    }
}

fn hour_index(ds: &Dataset, s: &str, window: usize) -> Result<usize, CliError> {
    let t = parse_timestamp(s).ok_or_else(|| CliError::User(format!("cannot parse timestamp {s:?}")))?;
    let h = ds.hour_index(t).ok_or_else(|| {
        CliError::User(format!(
            "hour {} is outside the dataset ({} to {})",
            fmt_ts(&t),
            fmt_ts(&ds.hours[0]),
            fmt_ts(ds.hours.last().expect("non-empty"))
        ))
    })?;
    if h + 1 < window {
        return Err(CliError::User(format!("hour {} lacks {window} hours of history", fmt_ts(&t))));
    }
    Ok(h)
}

pub fn interpolate(cfg: &RunConfig, locations: &Locations, from: &str, to: Option<&str>) -> Result<(), CliError> {
    let models_dir = cfg.require_models()?;
    let ds = import_dataset(cfg.require_dataset()?)?;
    let (models, sidecar) = load_ensemble(models_dir, &cfg.seeds)?;
    let w = sidecar.config.window;
    let h0 = hour_index(&ds, from, w)?;
    let h1 = match to {
        Some(t) => hour_index(&ds, t, w)?,
        None => h0,
    };
    if h1 < h0 {
        return Err(CliError::User("the end hour precedes the start hour".into()));
    }
    let context = &sidecar.context_sensors;
    let rows: Vec<usize> = context
        .iter()
        .map(|s| {
            ds.sensor_index(&s.sensor_id)
                .ok_or_else(|| CliError::User(format!("context sensor {} is not in the dataset", s.sensor_id)))
        })
        .collect::<Result<_, _>>()?;
    let samples: Vec<(Vec<f64>, graphy::geo::WindRecord)> = (h0..=h1)
        .map(|h| {
            let mut r: Vec<f64> = rows.iter().flat_map(|&i| ds.pm25[i][h + 1 - w..=h].iter().copied()).collect();
            r.extend(std::iter::repeat_n(0.0, w));
            (r, ds.wind[h].clone())
        })
        .collect();
    let mut body = String::from("latitude,longitude,timestamp,pm25\n");
    for (lat, lon) in locations.points() {
        let query = SensorMeta::new("__query__", lat, lon).map_err(|e| CliError::User(e.to_string()))?;
        let mut nodes = context.clone();
        nodes.push(query);
        let ctx = GraphContext::new(Graph::build(nodes).map_err(|e| CliError::User(e.to_string()))?)?;
        let target = ctx.len() - 1;
        let preds: Vec<Vec<f64>> = models
            .iter()
            .map(|m| predict_node(m, &ctx, &sidecar.normalizer, &samples, target))
            .collect::<Result<_, _>>()?;
        for (k, h) in (h0..=h1).enumerate() {
            let v = preds.iter().map(|p| p[k]).sum::<f64>() / preds.len() as f64;
            body.push_str(&format!("{lat},{lon},{},{v}\n", fmt_ts(&ds.hours[h])));
        }
    }
    match &cfg.out {
        Some(out) => {
            cfg.write_resolved(out)?;
            write_file(&out.join("interpolation.csv"), body.as_bytes())
        }
        None => std::io::stdout().write_all(body.as_bytes()).map_err(|e| CliError::Internal(format!("stdout: {e}"))),
    }
}
