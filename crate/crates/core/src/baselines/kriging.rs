use nalgebra::{DMatrix, DVector};

use super::{idw, BaselineError, DEFAULT_IDW_POWER};

/// Distance bins used by [`fit_variogram`].
pub const VARIOGRAM_BINS: usize = 10;

/// Linear variogram `gamma(h) = nugget + slope * h` for `h > 0`, `gamma(0) = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Variogram {
    pub nugget: f64,
    pub slope: f64,
}

impl Variogram {
    pub fn gamma(&self, h: f64) -> f64 {
        if h <= 0.0 {
            0.0
        } else {
            self.nugget + self.slope * h
        }
    }
}

/// Least-squares line through the binned empirical semivariogram.
///
/// Pairs are grouped into `bins` equal-width distance bins over
/// `(0, max distance]`; each non-empty bin contributes its centre and mean
/// semivariance. Slope and nugget are clamped at zero (refitting the other
/// term when one clamps).
pub fn fit_variogram(dist: &[f64], values: &[f64], bins: usize) -> Result<Variogram, BaselineError> {
    let n = values.len();
    if n < 2 {
        return Err(BaselineError::TooFewContexts { need: 2, got: n });
    }
    if dist.len() != n * n {
        return Err(BaselineError::LengthMismatch("distance matrix"));
    }
    let bins = bins.max(1);
    let max_h = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| dist[i * n + j]).fold(0.0, f64::max);
    if max_h <= 0.0 {
        return Ok(Variogram { nugget: 0.0, slope: 0.0 });
    }
    let width = max_h / bins as f64;
    let mut sum = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for i in 0..n {
        for j in i + 1..n {
            let h = dist[i * n + j];
            let k = ((h / width) as usize).min(bins - 1);
            sum[k] += 0.5 * (values[i] - values[j]).powi(2);
            count[k] += 1;
        }
    }
    let pts: Vec<(f64, f64)> =
        (0..bins).filter(|&k| count[k] > 0).map(|k| ((k as f64 + 0.5) * width, sum[k] / count[k] as f64)).collect();
    let m = pts.len() as f64;
    let mean_h = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_g = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_h).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_h) * (p.1 - mean_g)).sum();
    let (mut slope, mut nugget) = if sxx > 0.0 {
        let s = sxy / sxx;
        (s, mean_g - s * mean_h)
    } else {
        (mean_g / mean_h, 0.0)
    };
    if slope < 0.0 {
        slope = 0.0;
        nugget = mean_g;
    }
    if nugget < 0.0 {
        nugget = 0.0;
        let shh: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        slope = (pts.iter().map(|p| p.0 * p.1).sum::<f64>() / shh).max(0.0);
    }
    Ok(Variogram { nugget, slope })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KrigingSolution {
    pub prediction: f64,
    pub weights: Vec<f64>,
    pub multiplier: f64,
    /// True when the system was singular and IDW was used instead.
    pub fell_back: bool,
}

/// Ordinary kriging prediction from context distances `dist` (`N x N`),
/// target distances `to_target` and context values.
pub fn okriging(
    dist: &[f64],
    to_target: &[f64],
    values: &[f64],
    vg: &Variogram,
) -> Result<KrigingSolution, BaselineError> {
    let n = values.len();
    if n < 2 {
        return Err(BaselineError::TooFewContexts { need: 2, got: n });
    }
    if dist.len() != n * n || to_target.len() != n {
        return Err(BaselineError::LengthMismatch("distance"));
    }
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut rhs = DVector::<f64>::zeros(n + 1);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = if i == j { 0.0 } else { vg.gamma(dist[i * n + j]) };
        }
        a[(i, n)] = 1.0;
        a[(n, i)] = 1.0;
        rhs[i] = vg.gamma(to_target[i]);
    }
    rhs[n] = 1.0;
    let solved = a.clone().lu().solve(&rhs).filter(|x| {
        let resid = (&a * x - &rhs).amax();
        x.iter().all(|v| v.is_finite()) && resid <= 1e-8 * (1.0 + rhs.amax())
    });
    match solved {
        Some(x) => {
            let weights: Vec<f64> = x.iter().take(n).copied().collect();
            let prediction = weights.iter().zip(values).map(|(w, v)| w * v).sum();
            Ok(KrigingSolution { prediction, weights, multiplier: x[n], fell_back: false })
        }
        None => {
            log::warn!("singular kriging system; falling back to inverse distance weighting");
            let prediction = idw(to_target, values, DEFAULT_IDW_POWER)?;
            Ok(KrigingSolution { prediction, weights: Vec::new(), multiplier: 0.0, fell_back: true })
        }
    }
}
