//! Reference interpolators: mean fill, inverse distance weighting, ordinary
//! kriging with a linear variogram, and a Gaussian process with an
//! exponential (Matern 1/2) kernel.

mod gp;
mod idw;
mod kriging;

pub use gp::{fit_gp_grid, gp_log_marginal, gp_predict, GpGrid, GpHyper, GpModel, JITTER};
pub use idw::{idw, DEFAULT_IDW_POWER};
pub use kriging::{fit_variogram, okriging, KrigingSolution, Variogram, VARIOGRAM_BINS};

use crate::geo::{haversine_km, SensorMeta};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BaselineError {
    #[error("no context values")]
    EmptyContext,
    #[error("need at least {need} context sensors, got {got}")]
    TooFewContexts { need: usize, got: usize },
    #[error("{0} and value counts differ")]
    LengthMismatch(&'static str),
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Arithmetic mean of the context values.
pub fn mean_fill(values: &[f64]) -> Result<f64, BaselineError> {
    if values.is_empty() {
        return Err(BaselineError::EmptyContext);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Row-major `N x N` haversine distances in km.
pub fn distance_matrix(sensors: &[SensorMeta]) -> Vec<f64> {
    let n = sensors.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = haversine_km(&sensors[i], &sensors[j]).unwrap_or(f64::NAN);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Distances from `target` to each sensor, in km.
pub fn distances_to(target: &SensorMeta, sensors: &[SensorMeta]) -> Vec<f64> {
    sensors.iter().map(|s| haversine_km(target, s).unwrap_or(f64::NAN)).collect()
}

/// Sample variance with divisor `n` (0 for fewer than two values).
pub(crate) fn population_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}
