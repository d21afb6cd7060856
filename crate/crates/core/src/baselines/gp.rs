use nalgebra::{DMatrix, DVector};

use super::{population_variance, BaselineError};

/// Diagonal jitter keeping the covariance numerically positive definite.
pub const JITTER: f64 = 1e-8;

/// GP with constant mean and kernel `variance * exp(-r / lengthscale)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpModel {
    pub mean: f64,
    pub variance: f64,
    pub lengthscale: f64,
    pub noise: f64,
}

impl GpModel {
    pub fn kernel(&self, r: f64) -> f64 {
        self.variance * (-r / self.lengthscale).exp()
    }

    fn check(&self) -> Result<(), BaselineError> {
        if !(self.lengthscale > 0.0) || self.variance < 0.0 || self.noise < 0.0 {
            return Err(BaselineError::InvalidParameter(format!("{self:?}")));
        }
        Ok(())
    }

    fn cholesky(&self, dist: &[f64], n: usize) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, BaselineError> {
        let k = DMatrix::from_fn(n, n, |i, j| {
            let base = self.kernel(dist[i * n + j]);
            if i == j {
                base + self.noise + JITTER
            } else {
                base
            }
        });
        k.cholesky().ok_or(BaselineError::NotPositiveDefinite)
    }
}

fn check_lengths(dist: &[f64], values: &[f64]) -> Result<usize, BaselineError> {
    let n = values.len();
    if n == 0 {
        return Err(BaselineError::EmptyContext);
    }
    if dist.len() != n * n {
        return Err(BaselineError::LengthMismatch("distance matrix"));
    }
    Ok(n)
}

/// Posterior mean `c + k*^T (K + noise I)^{-1} (v - c)`.
pub fn gp_predict(dist: &[f64], to_target: &[f64], values: &[f64], model: &GpModel) -> Result<f64, BaselineError> {
    let n = check_lengths(dist, values)?;
    if to_target.len() != n {
        return Err(BaselineError::LengthMismatch("target distance"));
    }
    model.check()?;
    let chol = model.cholesky(dist, n)?;
    let resid = DVector::from_iterator(n, values.iter().map(|v| v - model.mean));
    let alpha = chol.solve(&resid);
    let ks = DVector::from_iterator(n, to_target.iter().map(|&r| model.kernel(r)));
    Ok(model.mean + ks.dot(&alpha))
}

/// Log marginal likelihood of `values` under `model`.
pub fn gp_log_marginal(dist: &[f64], values: &[f64], model: &GpModel) -> Result<f64, BaselineError> {
    let n = check_lengths(dist, values)?;
    model.check()?;
    let chol = model.cholesky(dist, n)?;
    let resid = DVector::from_iterator(n, values.iter().map(|v| v - model.mean));
    let alpha = chol.solve(&resid);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    Ok(-0.5 * resid.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Hyperparameters relative to each hour's context variance.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GpHyper {
    pub variance_factor: f64,
    pub lengthscale_km: f64,
    pub noise_factor: f64,
}

impl GpHyper {
    /// Model for one hour: mean and variance come from that hour's values.
    pub fn model_for(&self, values: &[f64]) -> GpModel {
        let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
        let var = population_variance(values);
        GpModel {
            mean,
            variance: self.variance_factor * var,
            lengthscale: self.lengthscale_km,
            noise: self.noise_factor * var,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GpGrid {
    pub variance_factors: Vec<f64>,
    pub lengthscales_km: Vec<f64>,
    pub noise_factors: Vec<f64>,
}

impl Default for GpGrid {
    fn default() -> Self {
        Self {
            variance_factors: vec![0.5, 1.0, 2.0, 4.0],
            lengthscales_km: vec![1.0, 2.0, 5.0, 10.0, 20.0],
            noise_factors: vec![0.0, 0.01, 0.1, 1.0],
        }
    }
}

/// Grid point maximizing the log marginal likelihood summed over `hours`
/// (each a vector of values at the sensors described by `dist`). Hours with
/// zero variance carry no information and are skipped.
pub fn fit_gp_grid(grid: &GpGrid, dist: &[f64], hours: &[Vec<f64>]) -> Result<GpHyper, BaselineError> {
    let mut best: Option<(f64, GpHyper)> = None;
    for &variance_factor in &grid.variance_factors {
        for &lengthscale_km in &grid.lengthscales_km {
            for &noise_factor in &grid.noise_factors {
                let hyper = GpHyper { variance_factor, lengthscale_km, noise_factor };
                let mut total = 0.0;
                for values in hours.iter().filter(|v| population_variance(v) > 0.0) {
                    match gp_log_marginal(dist, values, &hyper.model_for(values)) {
                        Ok(l) => total += l,
                        Err(_) => {
                            total = f64::NEG_INFINITY;
                            break;
                        }
                    }
                }
                if total.is_finite() && best.is_none_or(|(b, _)| total > b) {
                    best = Some((total, hyper));
                }
            }
        }
    }
    best.map(|(_, h)| h).ok_or(BaselineError::NotPositiveDefinite)
}
