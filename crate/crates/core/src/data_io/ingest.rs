use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime, Timelike, Utc};

use super::{DataError, Dataset, Manifest, Provenance};
use crate::geo::{SensorMeta, WindRecord};

/// One sub-hourly PM2.5 row as read from a raw file.
#[derive(Clone, Debug, PartialEq)]
pub struct RawReading {
    pub sensor_id: String,
    pub timestamp: DateTime<Utc>,
    pub value: f64,
}

/// Hourly PM2.5 for one sensor; `None` marks an hour without data.
#[derive(Clone, Debug, PartialEq)]
pub struct Pm25Series {
    pub sensor_id: String,
    pub start: DateTime<Utc>,
    pub values: Vec<Option<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, serde::Serialize)]
pub struct IngestReport {
    pub pm25_rows: usize,
    pub skipped_rows: usize,
    pub clamped_negative: usize,
    pub wind_rows: usize,
    pub skipped_wind_rows: usize,
    pub wind_hours_filled: usize,
    pub sensors_in: usize,
    pub sensors_kept: usize,
    pub dropped_sensors: Vec<String>,
    pub hours_filled: usize,
}

/// Parses RFC 3339 or `YYYY-MM-DD HH:MM[:SS]` (taken as UTC).
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|n| n.and_utc())
}

pub(crate) fn floor_hour(t: DateTime<Utc>) -> DateTime<Utc> {
    t.with_minute(0).and_then(|t| t.with_second(0)).and_then(|t| t.with_nanosecond(0)).unwrap_or(t)
}

fn hour_offset(start: DateTime<Utc>, t: DateTime<Utc>) -> usize {
    (floor_hour(t) - start).num_hours() as usize
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>, DataError> {
    if !path.exists() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| DataError::csv(path, e))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize, DataError> {
    headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case(name))
        .ok_or_else(|| DataError::csv(path, format!("missing column {name}")))
}

/// Reads `sensor_id,latitude,longitude`.
pub fn read_sensors(path: &Path) -> Result<Vec<SensorMeta>, DataError> {
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers().map_err(|e| DataError::csv(path, e))?.clone();
    let (ci, cl, cn) = (
        column(&headers, "sensor_id", path)?,
        column(&headers, "latitude", path)?,
        column(&headers, "longitude", path)?,
    );
    let mut out: Vec<SensorMeta> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DataError::csv(path, e))?;
        let bad = || DataError::csv(path, format!("row {}: malformed sensor record", line + 2));
        let lat: f64 = rec.get(cl).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let lon: f64 = rec.get(cn).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let id = rec.get(ci).ok_or_else(bad)?;
        if out.iter().any(|s| s.sensor_id == id) {
            return Err(DataError::csv(path, format!("duplicate sensor id {id}")));
        }
        out.push(SensorMeta::new(id, lat, lon)?);
    }
    Ok(out)
}

/// Reads `sensor_id,timestamp,value` rows. Malformed rows are skipped and
/// counted.
pub fn read_raw_pm25(path: &Path) -> Result<(Vec<RawReading>, usize), DataError> {
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers().map_err(|e| DataError::csv(path, e))?.clone();
    let (ci, ct, cv) =
        (column(&headers, "sensor_id", path)?, column(&headers, "timestamp", path)?, column(&headers, "value", path)?);
    let mut rows = Vec::new();
    let mut skipped = 0;
    for rec in rdr.records() {
        let parsed = rec.ok().and_then(|r| {
            let id = r.get(ci)?.to_string();
            let ts = parse_timestamp(r.get(ct)?)?;
            let v: f64 = r.get(cv)?.parse().ok()?;
            (!id.is_empty() && v.is_finite()).then_some(RawReading { sensor_id: id, timestamp: ts, value: v })
        });
        match parsed {
            Some(r) => rows.push(r),
            None => skipped += 1,
        }
    }
    Ok((rows, skipped))
}

/// Hourly means of raw rows over `[start, end]` (inclusive hour range;
/// defaults to the span of the data). Negative values are clamped to zero.
/// Returns the series sorted by sensor id and the number of clamped values.
pub fn ingest_pm25(rows: &[RawReading], range: Option<(DateTime<Utc>, DateTime<Utc>)>) -> (Vec<Pm25Series>, usize) {
    if rows.is_empty() {
        return (Vec::new(), 0);
    }
    let (start, end) = range.unwrap_or_else(|| {
        let lo = rows.iter().map(|r| r.timestamp).min().expect("non-empty");
        let hi = rows.iter().map(|r| r.timestamp).max().expect("non-empty");
        (floor_hour(lo), floor_hour(hi))
    });
    let hours = (end - start).num_hours() as usize + 1;
    let mut acc: BTreeMap<&str, Vec<(f64, usize)>> = BTreeMap::new();
    let mut clamped = 0;
    for r in rows {
        let t = floor_hour(r.timestamp);
        if t < start || t > end {
            continue;
        }
        let v = if r.value < 0.0 {
            clamped += 1;
            0.0
        } else {
            r.value
        };
        let slot = &mut acc.entry(&r.sensor_id).or_insert_with(|| vec![(0.0, 0); hours])[hour_offset(start, t)];
        slot.0 += v;
        slot.1 += 1;
    }
    let series = acc
        .into_iter()
        .map(|(id, slots)| Pm25Series {
            sensor_id: id.to_string(),
            start,
            values: slots.into_iter().map(|(s, c)| (c > 0).then(|| s / c as f64)).collect(),
        })
        .collect();
    (series, clamped)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapFilterResult {
    /// Sensors kept, with every hour filled.
    pub kept: Vec<(String, Vec<f64>)>,
    pub dropped: Vec<String>,
    pub filled: usize,
}

/// Keeps sensors whose longest run of missing hours is at most `max_gap` and
/// fills those runs by linear interpolation (nearest value at the ends).
pub fn gap_filter(series: &[Pm25Series], max_gap: usize) -> GapFilterResult {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut filled = 0;
    for s in series {
        let v = &s.values;
        let mut longest = 0;
        let mut run = 0;
        for x in v {
            run = if x.is_none() { run + 1 } else { 0 };
            longest = longest.max(run);
        }
        if longest > max_gap || v.iter().all(Option::is_none) {
            dropped.push(s.sensor_id.clone());
            continue;
        }
        let mut out = vec![0.0; v.len()];
        let mut i = 0;
        while i < v.len() {
            if let Some(x) = v[i] {
                out[i] = x;
                i += 1;
                continue;
            }
            let lo = i;
            while i < v.len() && v[i].is_none() {
                i += 1;
            }
            let before = lo.checked_sub(1).and_then(|k| v[k]);
            let after = v.get(i).copied().flatten();
            for (k, slot) in out.iter_mut().enumerate().take(i).skip(lo) {
                *slot = match (before, after) {
                    (Some(a), Some(b)) => {
                        let frac = (k - lo + 1) as f64 / (i - lo + 1) as f64;
                        a + (b - a) * frac
                    }
                    (Some(a), None) => a,
                    (None, Some(b)) => b,
                    (None, None) => unreachable!("all-missing series are dropped"),
                };
                filled += 1;
            }
        }
        kept.push((s.sensor_id.clone(), out));
    }
    GapFilterResult { kept, dropped, filled }
}

/// Wind speed units accepted in raw wind headers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpeedUnit {
    Kmh,
    Mph,
    MetersPerSecond,
    Knots,
}

impl SpeedUnit {
    pub fn from_header(h: &str) -> Option<Self> {
        match h.trim().to_ascii_lowercase().strip_prefix("wind_speed_")? {
            "kmh" | "kph" => Some(SpeedUnit::Kmh),
            "mph" => Some(SpeedUnit::Mph),
            "ms" | "mps" => Some(SpeedUnit::MetersPerSecond),
            "kn" | "kt" | "knots" => Some(SpeedUnit::Knots),
            _ => None,
        }
    }

    pub fn to_kmh(self, v: f64) -> f64 {
        match self {
            SpeedUnit::Kmh => v,
            SpeedUnit::Mph => v * 1.609_344,
            SpeedUnit::MetersPerSecond => v * 3.6,
            SpeedUnit::Knots => v * 1.852,
        }
    }
}

/// Reads `timestamp,wind_speed_<unit>,wind_dir_deg` rows and averages them per
/// hour (mean speed, circular mean direction). Returns hourly records and the
/// number of skipped rows.
pub fn ingest_wind(path: &Path) -> Result<(Vec<WindRecord>, usize, usize), DataError> {
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers().map_err(|e| DataError::csv(path, e))?.clone();
    let ct = column(&headers, "timestamp", path)?;
    let cd = column(&headers, "wind_dir_deg", path)?;
    let (cs, unit) =
        headers.iter().enumerate().find_map(|(i, h)| SpeedUnit::from_header(h).map(|u| (i, u))).ok_or_else(|| {
            DataError::csv(path, "wind speed column must declare units: wind_speed_kmh, _mph, _ms or _kn")
        })?;
    let mut acc: BTreeMap<DateTime<Utc>, (f64, f64, f64, usize)> = BTreeMap::new();
    let mut skipped = 0;
    let mut rows = 0;
    for rec in rdr.records() {
        let parsed = rec.ok().and_then(|r| {
            let ts = parse_timestamp(r.get(ct)?)?;
            let s: f64 = r.get(cs)?.parse().ok()?;
            let d: f64 = r.get(cd)?.parse().ok()?;
            (s.is_finite() && s >= 0.0 && d.is_finite()).then_some((ts, unit.to_kmh(s), d))
        });
        let Some((ts, s, d)) = parsed else {
            skipped += 1;
            continue;
        };
        rows += 1;
        let e = acc.entry(floor_hour(ts)).or_insert((0.0, 0.0, 0.0, 0));
        e.0 += s;
        e.1 += d.to_radians().sin();
        e.2 += d.to_radians().cos();
        e.3 += 1;
    }
    let mut out = Vec::with_capacity(acc.len());
    for (t, (s, sx, cx, c)) in acc {
        let dir = if sx.abs() + cx.abs() < 1e-12 { 0.0 } else { sx.atan2(cx).to_degrees() };
        out.push(WindRecord::new(t, s / c as f64, dir)?);
    }
    Ok((out, rows, skipped))
}

/// Raw directory layout: `sensors.csv`, `pm25_raw.csv` and `wind_raw.csv`.
/// Produces a canonical dataset over the hour span of the PM2.5 data.
pub fn ingest_dir(raw: &Path) -> Result<(Dataset, IngestReport), DataError> {
    let sensors_path = raw.join("sensors.csv");
    let pm_path = raw.join("pm25_raw.csv");
    let wind_path = raw.join("wind_raw.csv");
    for p in [&sensors_path, &pm_path, &wind_path] {
        if !p.exists() {
            return Err(DataError::MissingFile(p.clone()));
        }
    }
    let sensors = read_sensors(&sensors_path)?;
    let (rows, skipped) = read_raw_pm25(&pm_path)?;
    let mut report = IngestReport { pm25_rows: rows.len(), skipped_rows: skipped, ..Default::default() };
    let known: Vec<RawReading> =
        rows.into_iter().filter(|r| sensors.iter().any(|s| s.sensor_id == r.sensor_id)).collect();
    if known.is_empty() {
        return Err(DataError::Invalid(format!("{}: no rows for known sensors", pm_path.display())));
    }
    let (series, clamped) = ingest_pm25(&known, None);
    report.clamped_negative = clamped;
    report.sensors_in = sensors.len();
    let gf = gap_filter(&series, 1);
    report.hours_filled = gf.filled;
    report.dropped_sensors = gf.dropped.clone();
    for s in &sensors {
        if !series.iter().any(|x| x.sensor_id == s.sensor_id) {
            report.dropped_sensors.push(s.sensor_id.clone());
        }
    }
    report.sensors_kept = gf.kept.len();
    let start = series[0].start;
    let n_hours = series[0].values.len();
    let hours: Vec<DateTime<Utc>> = (0..n_hours).map(|h| start + Duration::hours(h as i64)).collect();

    let (wind_rows, wind_count, wind_skipped) = ingest_wind(&wind_path)?;
    report.wind_rows = wind_count;
    report.skipped_wind_rows = wind_skipped;
    if wind_rows.is_empty() {
        return Err(DataError::Invalid(format!("{}: no usable wind rows", wind_path.display())));
    }
    let mut wind = Vec::with_capacity(n_hours);
    for &t in &hours {
        let idx = wind_rows.partition_point(|w| w.timestamp <= t);
        let rec = match wind_rows.get(idx.wrapping_sub(1)).filter(|w| w.timestamp == t) {
            Some(w) => w.clone(),
            None => {
                report.wind_hours_filled += 1;
                let near = wind_rows.get(idx.saturating_sub(1)).unwrap_or(&wind_rows[0]);
                WindRecord::new(t, near.speed_kmh, near.direction_deg)?
            }
        };
        wind.push(rec);
    }

    let kept_sensors: Vec<SensorMeta> = gf
        .kept
        .iter()
        .map(|(id, _)| sensors.iter().find(|s| &s.sensor_id == id).expect("known sensor").clone())
        .collect();
    let pm25 = gf.kept.into_iter().map(|(_, v)| v).collect();
    let manifest = Manifest::new(Provenance::Real, None, &hours, kept_sensors.len());
    Ok((Dataset { manifest, sensors: kept_sensors, hours, pm25, wind }, report))
}
