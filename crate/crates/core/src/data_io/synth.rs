use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, FieldSnapshot, Grid, Manifest, PointSource, Provenance, Simulator};
use crate::geo::{SensorMeta, WindRecord};

const KM_PER_DEG_LAT: f64 = 111.195;

/// Hourly city-level wind: a daily speed cycle and a slowly swinging
/// prevailing direction, both perturbed by AR(1) noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindSchedule {
    pub mean_speed_kmh: f64,
    pub daily_amplitude_kmh: f64,
    pub speed_jitter_kmh: f64,
    pub prevailing_from_deg: f64,
    pub swing_deg: f64,
    pub swing_period_hours: f64,
    pub direction_jitter_deg: f64,
}

impl Default for WindSchedule {
    fn default() -> Self {
        Self {
            mean_speed_kmh: 4.0,
            daily_amplitude_kmh: 3.0,
            speed_jitter_kmh: 1.5,
            prevailing_from_deg: 300.0,
            swing_deg: 90.0,
            swing_period_hours: 120.0,
            direction_jitter_deg: 30.0,
        }
    }
}

/// Random point-source generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceSchedule {
    pub min_sources: usize,
    pub max_sources: usize,
    pub min_rate: f64,
    pub max_rate: f64,
    pub min_on_hours: usize,
    pub max_on_hours: usize,
    pub min_off_hours: usize,
    pub max_off_hours: usize,
}

impl Default for SourceSchedule {
    fn default() -> Self {
        Self {
            min_sources: 2,
            max_sources: 4,
            min_rate: 20.0,
            max_rate: 100.0,
            min_on_hours: 6,
            max_on_hours: 48,
            min_off_hours: 6,
            max_off_hours: 72,
        }
    }
}

/// Everything needed to regenerate a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthDatasetSpec {
    pub grid: Grid,
    pub hours: usize,
    /// Hours simulated before the first recorded hour.
    pub spinup_hours: usize,
    /// Diffusion coefficient in km^2/h.
    pub diffusion: f64,
    /// First-order loss rate per hour.
    pub decay: f64,
    /// Uniform emission per cell (ug/m^3/h).
    pub background: f64,
    pub wind: WindSchedule,
    pub source_schedule: SourceSchedule,
    /// Explicit sources replace the random schedule when given.
    pub sources: Option<Vec<PointSource>>,
    pub n_sensors: usize,
    /// Random sensors avoid this many cells along each wall, where zero-flux
    /// boundaries pile up material carried by the wind.
    pub sensor_margin: usize,
    /// Explicit `(row, col)` sensor cells replace random placement.
    pub sensor_cells: Option<Vec<(usize, usize)>>,
    pub noise_sd: f64,
    pub seed: u64,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub start: DateTime<Utc>,
}

impl Default for SynthDatasetSpec {
    fn default() -> Self {
        Self {
            grid: Grid { width: 32, height: 32, cell_km: 0.5 },
            hours: 2928,
            spinup_hours: 48,
            diffusion: 0.3,
            decay: 0.1,
            background: 6.0,
            wind: WindSchedule::default(),
            source_schedule: SourceSchedule::default(),
            sources: None,
            n_sensors: 40,
            sensor_margin: 2,
            sensor_cells: None,
            noise_sd: 0.5,
            seed: 0,
            origin_lat: 36.74,
            origin_lon: -119.79,
            start: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).single().expect("valid date"),
        }
    }
}

impl SynthDatasetSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        self.grid.validate()?;
        if self.hours == 0 {
            return Err(DataError::Config("hours must be at least 1".into()));
        }
        if self.n_sensors < 2 && self.sensor_cells.is_none() {
            return Err(DataError::Config("need at least 2 sensors".into()));
        }
        if self.n_sensors > self.interior_cells() {
            return Err(DataError::Config(format!(
                "{} sensors do not fit in {} cells",
                self.n_sensors,
                self.interior_cells()
            )));
        }
        if let Some(cells) = &self.sensor_cells {
            if let Some(c) = cells.iter().find(|&&(r, c)| r >= self.grid.height || c >= self.grid.width) {
                return Err(DataError::Config(format!("sensor cell {c:?} lies outside the grid")));
            }
        }
        if !(self.noise_sd >= 0.0) {
            return Err(DataError::Config("noise_sd must be non-negative".into()));
        }
        let s = &self.source_schedule;
        if s.min_sources > s.max_sources
            || s.min_rate > s.max_rate
            || s.min_on_hours == 0
            || s.min_on_hours > s.max_on_hours
            || s.min_off_hours > s.max_off_hours
        {
            return Err(DataError::Config("inconsistent source schedule ranges".into()));
        }
        Ok(())
    }

    fn interior_cells(&self) -> usize {
        let m = 2 * self.sensor_margin;
        self.grid.width.saturating_sub(m) * self.grid.height.saturating_sub(m)
    }

    /// Latitude/longitude of a cell centre; the grid is centred on the origin.
    pub fn cell_location(&self, row: usize, col: usize) -> (f64, f64) {
        let g = &self.grid;
        let x = (col as f64 + 0.5) * g.cell_km - 0.5 * g.width as f64 * g.cell_km;
        let y = (row as f64 + 0.5) * g.cell_km - 0.5 * g.height as f64 * g.cell_km;
        let lat = self.origin_lat + y / KM_PER_DEG_LAT;
        let lon = self.origin_lon + x / (KM_PER_DEG_LAT * self.origin_lat.to_radians().cos());
        (lat, lon)
    }
}

/// Simulator output at sensor cells, plus full snapshots when requested.
#[derive(Clone, Debug)]
pub struct SimulationOutput {
    pub sensor_cells: Vec<(usize, usize)>,
    pub sensors: Vec<SensorMeta>,
    pub hours: Vec<DateTime<Utc>>,
    /// Noise-free cell values, `truth[s][h]`.
    pub truth: Vec<Vec<f64>>,
    /// Noisy readings clamped at zero, `readings[s][h]`.
    pub readings: Vec<Vec<f64>>,
    pub wind: Vec<WindRecord>,
    pub sources: Vec<PointSource>,
    pub snapshots: Vec<FieldSnapshot>,
    pub clamp_events: usize,
}

fn random_sources(spec: &SynthDatasetSpec, total_hours: usize, rng: &mut ChaCha8Rng) -> Vec<PointSource> {
    let s = &spec.source_schedule;
    let n = rng.random_range(s.min_sources..=s.max_sources);
    (0..n)
        .map(|_| {
            let row = rng.random_range(0..spec.grid.height);
            let col = rng.random_range(0..spec.grid.width);
            let rate = rng.random_range(s.min_rate..=s.max_rate);
            let mut windows = Vec::new();
            let mut t = rng.random_range(0..=s.max_off_hours);
            while t < total_hours {
                let on = rng.random_range(s.min_on_hours..=s.max_on_hours);
                windows.push((t, t + on));
                t += on + rng.random_range(s.min_off_hours..=s.max_off_hours);
            }
            PointSource { row, col, rate, windows }
        })
        .collect()
}

fn wind_series(spec: &SynthDatasetSpec, total_hours: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let w = &spec.wind;
    let rho: f64 = 0.9;
    let innov = (1.0 - rho * rho).sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let (mut ns, mut nd) = (0.0, 0.0);
    (0..total_hours)
        .map(|t| {
            ns = rho * ns + innov * w.speed_jitter_kmh * std_normal.sample(rng);
            nd = rho * nd + innov * w.direction_jitter_deg * std_normal.sample(rng);
            let tf = t as f64;
            let speed = (w.mean_speed_kmh
                + w.daily_amplitude_kmh * (2.0 * std::f64::consts::PI * (tf - 9.0) / 24.0).sin()
                + ns)
                .max(0.3);
            let dir = w.prevailing_from_deg
                + w.swing_deg * (2.0 * std::f64::consts::PI * tf / w.swing_period_hours.max(1.0)).sin()
                + nd;
            (speed, dir.rem_euclid(360.0))
        })
        .collect()
}

/// Runs the simulator for `spinup_hours + hours` and samples the sensor cells
/// at the end of every recorded hour.
pub fn simulate_field(spec: &SynthDatasetSpec, keep_snapshots: bool) -> Result<SimulationOutput, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total = spec.spinup_hours + spec.hours;
    let sources = match &spec.sources {
        Some(s) => s.clone(),
        None => random_sources(spec, total, &mut rng),
    };
    let winds = wind_series(spec, total, &mut rng);
    let cells: Vec<(usize, usize)> = match &spec.sensor_cells {
        Some(c) => c.clone(),
        None => {
            let m = spec.sensor_margin;
            let w = spec.grid.width - 2 * m;
            sample(&mut rng, spec.interior_cells(), spec.n_sensors)
                .into_iter()
                .map(|i| (m + i / w, m + i % w))
                .collect()
        }
    };
    let sensors = cells
        .iter()
        .enumerate()
        .map(|(k, &(r, c))| {
            let (lat, lon) = spec.cell_location(r, c);
            SensorMeta::new(format!("S{k:03}"), lat, lon)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut sim = Simulator::new(spec.grid, spec.diffusion, spec.decay, spec.background, sources.clone())?;
    let noise = Normal::new(0.0, spec.noise_sd.max(0.0)).map_err(|e| DataError::Config(e.to_string()))?;
    let mut truth = vec![Vec::with_capacity(spec.hours); cells.len()];
    let mut readings = vec![Vec::with_capacity(spec.hours); cells.len()];
    let mut wind = Vec::with_capacity(spec.hours);
    let mut hours = Vec::with_capacity(spec.hours);
    let mut snapshots = Vec::new();
    for (t, &(speed, dir)) in winds.iter().enumerate() {
        let rec_time = spec.start + Duration::hours(t as i64 - spec.spinup_hours as i64);
        let rec = WindRecord::new(rec_time, speed, dir)?;
        let (u, v) = rec.velocity();
        let snap = sim.step_hour(u, v)?;
        if t < spec.spinup_hours {
            continue;
        }
        for (k, &(r, c)) in cells.iter().enumerate() {
            let x = snap.concentration[spec.grid.index(r, c)];
            truth[k].push(x);
            let e = if spec.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            readings[k].push((x + e).max(0.0));
        }
        hours.push(rec_time);
        wind.push(rec);
        if keep_snapshots {
            snapshots.push(snap);
        }
    }
    Ok(SimulationOutput {
        sensor_cells: cells,
        sensors,
        hours,
        truth,
        readings,
        wind,
        sources,
        snapshots,
        clamp_events: sim.clamp_events,
    })
}

/// Simulates `spec` and packages the noisy readings as a canonical dataset.
pub fn generate_dataset(spec: &SynthDatasetSpec) -> Result<(Dataset, SimulationOutput), DataError> {
    let out = simulate_field(spec, false)?;
    let manifest = Manifest::new(Provenance::Synthetic, Some(spec.seed), &out.hours, out.sensors.len());
    let ds = Dataset {
        manifest,
        sensors: out.sensors.clone(),
        hours: out.hours.clone(),
        pm25: out.readings.clone(),
        wind: out.wind.clone(),
    };
    ds.validate()?;
    Ok((ds, out))
}
