use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::ingest::{parse_timestamp, read_sensors};
use super::DataError;
use crate::autodiff::checkpoint::write_atomic;
use crate::geo::{SensorMeta, WindRecord};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Real,
    Synthetic,
}

/// Self-description of a canonical dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub provenance: Provenance,
    pub seed: Option<u64>,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub hours: usize,
    pub sensors: usize,
    pub sensors_file: String,
    pub pm25_file: String,
    pub wind_file: String,
}

impl Manifest {
    pub fn new(provenance: Provenance, seed: Option<u64>, hours: &[DateTime<Utc>], sensors: usize) -> Self {
        Self {
            version: MANIFEST_VERSION,
            provenance,
            seed,
            start: hours.first().copied().unwrap_or_default(),
            end: hours.last().copied().unwrap_or_default(),
            hours: hours.len(),
            sensors,
            sensors_file: "sensors.csv".into(),
            pm25_file: "pm25.csv".into(),
            wind_file: "wind.csv".into(),
        }
    }
}

/// Hourly, gap-free PM2.5 at a fixed set of sensors plus city-level wind.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub sensors: Vec<SensorMeta>,
    /// Contiguous hourly timestamps.
    pub hours: Vec<DateTime<Utc>>,
    /// `pm25[s][h]` for sensor `s` at hour `h`.
    pub pm25: Vec<Vec<f64>>,
    /// One record per hour.
    pub wind: Vec<WindRecord>,
}

impl Dataset {
    pub fn num_hours(&self) -> usize {
        self.hours.len()
    }

    pub fn sensor_index(&self, id: &str) -> Option<usize> {
        self.sensors.iter().position(|s| s.sensor_id == id)
    }

    pub fn hour_index(&self, t: DateTime<Utc>) -> Option<usize> {
        let first = *self.hours.first()?;
        let off = (t - first).num_hours();
        (off >= 0 && (off as usize) < self.hours.len() && self.hours[off as usize] == t).then_some(off as usize)
    }

    /// Values of all sensors at hour `h`.
    pub fn hour_values(&self, h: usize) -> Vec<f64> {
        self.pm25.iter().map(|s| s[h]).collect()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let n = self.hours.len();
        if n == 0 {
            return Err(DataError::Invalid("dataset has no hours".into()));
        }
        if self.pm25.len() != self.sensors.len() || self.pm25.iter().any(|s| s.len() != n) || self.wind.len() != n {
            return Err(DataError::Invalid(format!(
                "hour-range mismatch: {} hours, wind has {}, pm25 lengths {:?}",
                n,
                self.wind.len(),
                self.pm25.iter().map(Vec::len).collect::<std::collections::BTreeSet<_>>()
            )));
        }
        for (k, w) in self.hours.windows(2).enumerate() {
            if w[1] - w[0] != Duration::hours(1) {
                return Err(DataError::Invalid(format!("hours not contiguous at index {}", k + 1)));
            }
        }
        for (h, w) in self.wind.iter().enumerate() {
            if w.timestamp != self.hours[h] {
                return Err(DataError::Invalid(format!("wind record {h} is for {}", w.timestamp)));
            }
        }
        if self.pm25.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(DataError::Invalid("PM2.5 values must be finite and non-negative".into()));
        }
        Ok(())
    }
}

fn fmt_ts(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| DataError::csv(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| DataError::csv(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| DataError::csv(path, e))?;
    write_atomic(path, &bytes).map_err(|e| DataError::io(path, e))
}

/// Writes `manifest.json`, `sensors.csv`, `pm25.csv` and `wind.csv`.
/// Floats use the shortest exact decimal form, so import is value-identical.
pub fn export_dataset(dir: &Path, ds: &Dataset) -> Result<(), DataError> {
    ds.validate()?;
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let m = &ds.manifest;
    write_csv(
        &dir.join(&m.sensors_file),
        &["sensor_id", "latitude", "longitude"],
        ds.sensors.iter().map(|s| vec![s.sensor_id.clone(), s.latitude.to_string(), s.longitude.to_string()]),
    )?;
    let stamps: Vec<String> = ds.hours.iter().map(fmt_ts).collect();
    write_csv(
        &dir.join(&m.pm25_file),
        &["sensor_id", "timestamp", "value"],
        ds.sensors.iter().zip(&ds.pm25).flat_map(|(s, vals)| {
            vals.iter().zip(&stamps).map(move |(v, t)| vec![s.sensor_id.clone(), t.clone(), v.to_string()])
        }),
    )?;
    write_csv(
        &dir.join(&m.wind_file),
        &["timestamp", "wind_speed_kmh", "wind_dir_deg"],
        ds.wind.iter().map(|w| vec![fmt_ts(&w.timestamp), w.speed_kmh.to_string(), w.direction_deg.to_string()]),
    )?;
    let mut manifest = m.clone();
    manifest.hours = ds.hours.len();
    manifest.sensors = ds.sensors.len();
    manifest.start = ds.hours[0];
    manifest.end = *ds.hours.last().expect("validated");
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| DataError::Invalid(e.to_string()))?;
    let path = dir.join("manifest.json");
    write_atomic(&path, &json).map_err(|e| DataError::io(path, e))
}

/// Loads a canonical dataset directory described by its manifest.
pub fn import_dataset(dir: &Path) -> Result<Dataset, DataError> {
    let mpath = dir.join("manifest.json");
    if !mpath.exists() {
        return Err(DataError::MissingFile(mpath));
    }
    let text = fs::read(&mpath).map_err(|e| DataError::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_slice(&text).map_err(|e| DataError::csv(&mpath, e))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(DataError::csv(&mpath, format!("unsupported manifest version {}", manifest.version)));
    }
    let sensors = read_sensors(&dir.join(&manifest.sensors_file))?;
    let hours: Vec<DateTime<Utc>> = (0..manifest.hours).map(|h| manifest.start + Duration::hours(h as i64)).collect();
    let n = hours.len();

    let ppath = dir.join(&manifest.pm25_file);
    if !ppath.exists() {
        return Err(DataError::MissingFile(ppath));
    }
    let mut pm25 = vec![vec![f64::NAN; n]; sensors.len()];
    let mut rdr = csv::Reader::from_path(&ppath).map_err(|e| DataError::csv(&ppath, e))?;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DataError::csv(&ppath, e))?;
        let bad = |what: &str| DataError::csv(&ppath, format!("row {}: {what}", line + 2));
        let s = sensors
            .iter()
            .position(|s| Some(s.sensor_id.as_str()) == rec.get(0))
            .ok_or_else(|| bad("unknown sensor"))?;
        let t = rec.get(1).and_then(parse_timestamp).ok_or_else(|| bad("bad timestamp"))?;
        let off = (t - manifest.start).num_hours();
        if off < 0 || off as usize >= n {
            return Err(bad("timestamp outside the manifest hour range"));
        }
        pm25[s][off as usize] = rec.get(2).and_then(|v| v.parse().ok()).ok_or_else(|| bad("bad value"))?;
    }
    if let Some(s) = pm25.iter().position(|v| v.iter().any(|x| x.is_nan())) {
        return Err(DataError::csv(&ppath, format!("sensor {} has missing hours", sensors[s].sensor_id)));
    }

    let wpath = dir.join(&manifest.wind_file);
    if !wpath.exists() {
        return Err(DataError::MissingFile(wpath));
    }
    let mut rdr = csv::Reader::from_path(&wpath).map_err(|e| DataError::csv(&wpath, e))?;
    let mut wind = Vec::with_capacity(n);
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DataError::csv(&wpath, e))?;
        let bad = || DataError::csv(&wpath, format!("row {}: malformed wind record", line + 2));
        let t = rec.get(0).and_then(parse_timestamp).ok_or_else(bad)?;
        let s: f64 = rec.get(1).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let d: f64 = rec.get(2).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        wind.push(WindRecord::new(t, s, d)?);
    }
    let ds = Dataset { manifest, sensors, hours, pm25, wind };
    ds.validate()?;
    Ok(ds)
}
