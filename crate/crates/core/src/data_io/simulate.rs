use serde::{Deserialize, Serialize};

use super::DataError;

/// Upper bound on explicit sub-steps per simulated hour.
pub const MAX_SUBSTEPS: usize = 100_000;

/// Regular grid; row 0 is the southern edge and column 0 the western edge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub cell_km: f64,
}

impl Grid {
    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.width < 2 || self.height < 2 || !(self.cell_km > 0.0 && self.cell_km.is_finite()) {
            return Err(DataError::Config(format!(
                "grid must be at least 2x2 with positive cell size, got {}x{} cells of {} km",
                self.width, self.height, self.cell_km
            )));
        }
        Ok(())
    }
}

/// Constant-rate emission into one cell during the listed `[start, end)`
/// hour windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSource {
    pub row: usize,
    pub col: usize,
    /// Concentration added per hour (ug/m^3/h).
    pub rate: f64,
    pub windows: Vec<(usize, usize)>,
}

impl PointSource {
    pub fn active(&self, hour: usize) -> bool {
        self.windows.iter().any(|&(a, b)| hour >= a && hour < b)
    }
}

/// State of the field at the end of an hour.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSnapshot {
    pub hour: usize,
    pub grid: Grid,
    pub concentration: Vec<f64>,
    /// Wind velocity (east, north) in km/h used during the hour.
    pub wind: (f64, f64),
    /// Source term per cell during the hour (ug/m^3/h).
    pub source: Vec<f64>,
    pub diffusion: f64,
}

/// Explicit finite-volume solver for
/// `dx/dt = d lap(x) - v . grad(x) + R - decay * x` with zero-flux walls.
/// Convection uses first-order upwind fluxes and diffusion central
/// differences, so the scheme conserves mass exactly when `R = 0` and
/// `decay = 0`.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub grid: Grid,
    pub diffusion: f64,
    pub decay: f64,
    pub background: f64,
    pub sources: Vec<PointSource>,
    pub field: Vec<f64>,
    pub hour: usize,
    pub clamp_events: usize,
    pub substeps_last_hour: usize,
    scratch: Vec<f64>,
}

impl Simulator {
    pub fn new(
        grid: Grid,
        diffusion: f64,
        decay: f64,
        background: f64,
        sources: Vec<PointSource>,
    ) -> Result<Self, DataError> {
        grid.validate()?;
        if !(diffusion >= 0.0 && decay >= 0.0 && background >= 0.0) {
            return Err(DataError::Config("diffusion, decay and background must be non-negative".into()));
        }
        if let Some(s) = sources.iter().find(|s| s.row >= grid.height || s.col >= grid.width) {
            return Err(DataError::Config(format!("source at ({}, {}) lies outside the grid", s.row, s.col)));
        }
        Ok(Self {
            grid,
            diffusion,
            decay,
            background,
            sources,
            field: vec![0.0; grid.cells()],
            hour: 0,
            clamp_events: 0,
            substeps_last_hour: 0,
            scratch: vec![0.0; grid.cells()],
        })
    }

    /// Source term per cell for the current hour.
    pub fn source_field(&self) -> Vec<f64> {
        let mut r = vec![self.background; self.grid.cells()];
        for s in self.sources.iter().filter(|s| s.active(self.hour)) {
            r[self.grid.index(s.row, s.col)] += s.rate;
        }
        r
    }

    /// Stable sub-step count for one hour at wind `(u, v)` km/h.
    pub fn substeps(&self, u: f64, v: f64) -> Result<usize, DataError> {
        let ds = self.grid.cell_km;
        let rate = u.abs() / ds + v.abs() / ds + 4.0 * self.diffusion / (ds * ds) + self.decay;
        if !rate.is_finite() {
            return Err(DataError::Config(format!("non-finite stability rate for wind ({u}, {v})")));
        }
        let n = rate.ceil().max(1.0) as usize;
        if n > MAX_SUBSTEPS {
            return Err(DataError::Config(format!(
                "CFL condition needs {n} sub-steps per hour (limit {MAX_SUBSTEPS})"
            )));
        }
        Ok(n)
    }

    /// Advances one hour with uniform wind `(u, v)` km/h (east, north).
    pub fn step_hour(&mut self, u: f64, v: f64) -> Result<FieldSnapshot, DataError> {
        let steps = self.substeps(u, v)?;
        let dt = 1.0 / steps as f64;
        let source = self.source_field();
        for _ in 0..steps {
            self.substep(u, v, dt, &source);
        }
        self.substeps_last_hour = steps;
        let snap = FieldSnapshot {
            hour: self.hour,
            grid: self.grid,
            concentration: self.field.clone(),
            wind: (u, v),
            source,
            diffusion: self.diffusion,
        };
        self.hour += 1;
        Ok(snap)
    }

    fn substep(&mut self, u: f64, v: f64, dt: f64, source: &[f64]) {
        let Grid { width: w, height: h, cell_km: ds } = self.grid;
        let x = &self.field;
        let out = &mut self.scratch;
        out.copy_from_slice(x);
        let dcoef = self.diffusion / ds;
        let k = dt / ds;
        // East-west faces between (r, c) and (r, c + 1).
        for r in 0..h {
            for c in 0..w - 1 {
                let (a, b) = (r * w + c, r * w + c + 1);
                let adv = if u >= 0.0 { u * x[a] } else { u * x[b] };
                let flux = adv - dcoef * (x[b] - x[a]);
                out[a] -= k * flux;
                out[b] += k * flux;
            }
        }
        // South-north faces between (r, c) and (r + 1, c).
        for r in 0..h - 1 {
            for c in 0..w {
                let (a, b) = (r * w + c, (r + 1) * w + c);
                let adv = if v >= 0.0 { v * x[a] } else { v * x[b] };
                let flux = adv - dcoef * (x[b] - x[a]);
                out[a] -= k * flux;
                out[b] += k * flux;
            }
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += dt * (source[i] - self.decay * x[i]);
            if *o < 0.0 {
                *o = 0.0;
                self.clamp_events += 1;
            }
        }
        std::mem::swap(&mut self.field, &mut self.scratch);
    }

    pub fn total_mass(&self) -> f64 {
        self.field.iter().sum()
    }

    /// Mass-weighted centre `(x_east_km, y_north_km)` of cell centres.
    pub fn center_of_mass(&self) -> (f64, f64) {
        let Grid { width: w, cell_km: ds, .. } = self.grid;
        let m = self.total_mass();
        let (mut cx, mut cy) = (0.0, 0.0);
        for (i, &val) in self.field.iter().enumerate() {
            cx += val * ((i % w) as f64 + 0.5) * ds;
            cy += val * ((i / w) as f64 + 0.5) * ds;
        }
        (cx / m, cy / m)
    }

    /// Mass-weighted spatial variance (sum over both axes) in km^2.
    pub fn spatial_variance(&self) -> f64 {
        let Grid { width: w, cell_km: ds, .. } = self.grid;
        let (cx, cy) = self.center_of_mass();
        let m = self.total_mass();
        self.field
            .iter()
            .enumerate()
            .map(|(i, &val)| {
                let x = ((i % w) as f64 + 0.5) * ds - cx;
                let y = ((i / w) as f64 + 0.5) * ds - cy;
                val * (x * x + y * y)
            })
            .sum::<f64>()
            / m
    }
}
