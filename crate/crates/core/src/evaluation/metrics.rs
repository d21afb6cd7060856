use serde::{Deserialize, Serialize};

use super::EvalError;

/// Error metrics over `n` samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub mse: f64,
    pub mae: f64,
    pub r2: f64,
}

/// MSE, MAE and R^2 (against the mean of the truths).
pub fn metrics(predictions: &[f64], truths: &[f64]) -> Result<Metrics, EvalError> {
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch { left: predictions.len(), right: truths.len() });
    }
    let n = truths.len();
    if n < 2 {
        return Err(EvalError::TooFew { need: 2, got: n });
    }
    let m = n as f64;
    let sse: f64 = predictions.iter().zip(truths).map(|(p, t)| (t - p).powi(2)).sum();
    let sae: f64 = predictions.iter().zip(truths).map(|(p, t)| (t - p).abs()).sum();
    let mean = truths.iter().sum::<f64>() / m;
    let sst: f64 = truths.iter().map(|t| (t - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(EvalError::UndefinedR2);
    }
    Ok(Metrics { n, mse: sse / m, mae: sae / m, r2: 1.0 - sse / sst })
}

/// Spatial heterogeneity: unbiased variance of all sensors at one hour.
pub fn spatial_heterogeneity(values: &[f64]) -> Result<f64, EvalError> {
    let n = values.len();
    if n < 2 {
        return Err(EvalError::TooFew { need: 2, got: n });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    Ok(values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64)
}

/// Half-open `[lo, hi)` bin statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `None` for empty bins.
    pub mae: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedMae {
    pub bins: Vec<BinStat>,
    /// Samples below the first edge or at/after the last edge.
    pub outside: usize,
}

/// Axis of a binned breakdown.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinAxis {
    GroundTruth,
    Sh,
}

/// Edges `0, width, 2 width, ...` covering `max`.
pub fn uniform_edges(width: f64, max: f64) -> Vec<f64> {
    let k = ((max / width).floor() as usize + 1).max(1);
    (0..=k).map(|i| i as f64 * width).collect()
}

/// Ground-truth bins of width 10 from 0.
pub fn gt_edges(max_truth: f64) -> Vec<f64> {
    uniform_edges(10.0, max_truth)
}

/// SH bins: width 20 up to 200, then three bins of width 200.
pub fn sh_edges() -> Vec<f64> {
    let mut e: Vec<f64> = (0..=10).map(|i| i as f64 * 20.0).collect();
    e.extend([400.0, 600.0, 800.0]);
    e
}

/// Mean absolute error per bin of `axis` values.
pub fn binned_mae(axis: &[f64], abs_errors: &[f64], edges: &[f64]) -> Result<BinnedMae, EvalError> {
    if axis.len() != abs_errors.len() {
        return Err(EvalError::LengthMismatch { left: axis.len(), right: abs_errors.len() });
    }
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(EvalError::BadEdges);
    }
    let nb = edges.len() - 1;
    let mut sums = vec![0.0; nb];
    let mut counts = vec![0usize; nb];
    let mut outside = 0;
    for (&x, &e) in axis.iter().zip(abs_errors) {
        // Index of the last edge <= x.
        let k = edges.partition_point(|&lo| lo <= x);
        if k == 0 || k > nb {
            outside += 1;
            continue;
        }
        sums[k - 1] += e;
        counts[k - 1] += 1;
    }
    let bins = (0..nb)
        .map(|k| BinStat {
            lo: edges[k],
            hi: edges[k + 1],
            count: counts[k],
            mae: (counts[k] > 0).then(|| sums[k] / counts[k] as f64),
        })
        .collect();
    Ok(BinnedMae { bins, outside })
}

/// Count-weighted recombination of bin MAEs.
pub fn recombine(b: &BinnedMae) -> Option<f64> {
    let n: usize = b.bins.iter().map(|s| s.count).sum();
    (n > 0).then(|| b.bins.iter().filter_map(|s| s.mae.map(|m| m * s.count as f64)).sum::<f64>() / n as f64)
}

/// Baseline MAE over GraPhy MAE per bin; `None` where undefined.
pub fn mae_ratio(baseline: &BinnedMae, graphy: &BinnedMae) -> Result<Vec<Option<f64>>, EvalError> {
    if baseline.bins.len() != graphy.bins.len()
        || baseline.bins.iter().zip(&graphy.bins).any(|(a, b)| a.lo != b.lo || a.hi != b.hi || a.count != b.count)
    {
        return Err(EvalError::BinMismatch);
    }
    Ok(baseline
        .bins
        .iter()
        .zip(&graphy.bins)
        .map(|(a, b)| match (a.mae, b.mae) {
            (Some(x), Some(y)) if y > 0.0 => Some(x / y),
            _ => None,
        })
        .collect())
}
