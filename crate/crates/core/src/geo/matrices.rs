use std::sync::Arc;

use super::{GeoError, Graph};
use crate::autodiff::Tensor;

pub const POWER_ITER_TOL: f64 = 1e-6;
pub const POWER_ITER_MAX: usize = 1000;
/// Upper bound of the normalized Laplacian spectrum, used when power
/// iteration does not converge.
pub const LAMBDA_MAX_FALLBACK: f64 = 2.0;

/// Result of [`scaled_laplacian`].
#[derive(Clone, Debug)]
pub struct ScaledLaplacian {
    pub laplacian: Tensor,
    pub lambda_max: f64,
    pub converged: bool,
    pub scaled: Tensor,
}

/// `L = I - D^{-1/2} A D^{-1/2}`, its largest eigenvalue by power iteration,
/// and `L_D = 2 L / lambda_max - I`.
pub fn scaled_laplacian(adjacency: &Tensor) -> Result<ScaledLaplacian, GeoError> {
    let n = adjacency.rows();
    if adjacency.cols() != n {
        return Err(GeoError::NotSquare(adjacency.shape().to_vec()));
    }
    let a = adjacency.data();
    let mut inv_sqrt_deg = vec![0.0; n];
    for i in 0..n {
        let d: f64 = a[i * n..(i + 1) * n].iter().sum();
        if d <= 0.0 || !d.is_finite() {
            return Err(GeoError::ZeroDegree(i));
        }
        inv_sqrt_deg[i] = 1.0 / d.sqrt();
    }
    let mut lap = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let norm = inv_sqrt_deg[i] * a[i * n + j] * inv_sqrt_deg[j];
            lap[i * n + j] = if i == j { 1.0 - norm } else { -norm };
        }
    }
    let laplacian = Tensor::matrix(n, n, lap)?;
    let (lambda, converged) = match power_iteration(&laplacian, POWER_ITER_TOL, POWER_ITER_MAX) {
        Some(l) if l > 0.0 => (l, true),
        _ => (LAMBDA_MAX_FALLBACK, false),
    };
    if !converged {
        log::warn!("power iteration did not converge on a {n}-node graph; using lambda_max = {LAMBDA_MAX_FALLBACK}");
    }
    let scaled = laplacian.map(|v| 2.0 * v / lambda);
    let mut scaled = scaled;
    for i in 0..n {
        let v = scaled.get(i, i);
        scaled.set(i, i, v - 1.0);
    }
    Ok(ScaledLaplacian { laplacian, lambda_max: lambda, converged, scaled })
}

/// Dominant eigenvalue of a symmetric positive semidefinite matrix, stopping
/// when the eigen-residual `||M v - lambda v||` drops below `tol`.
pub fn power_iteration(m: &Tensor, tol: f64, max_iter: usize) -> Option<f64> {
    let n = m.rows();
    // Deterministic start vector with no special alignment to graph structure.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 1.618_033_988_75 + 0.3).sin()).collect();
    normalize(&mut v);
    let mut w = vec![0.0; n];
    for _ in 0..max_iter {
        matvec(m, &v, &mut w);
        let lambda: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let residual = v.iter().zip(&w).map(|(a, b)| (b - lambda * a).powi(2)).sum::<f64>().sqrt();
        if residual < tol {
            return Some(lambda);
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Some(0.0);
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
    }
    None
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

fn matvec(m: &Tensor, v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = m.data()[i * n..(i + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

/// Diagonal of `M` with `M[i][i] = 1 + sum_j e(j, i)` for a dense `N x N`
/// edge-feature matrix whose diagonal is ignored.
pub fn local_norm_diagonal(edge_features: &Tensor) -> Vec<f64> {
    let n = edge_features.rows();
    (0..n).map(|i| 1.0 + (0..n).filter(|&j| j != i).map(|j| edge_features.get(j, i)).sum::<f64>()).collect()
}

/// Everything the GraPhy layers need from a graph, shared read-only.
#[derive(Clone, Debug)]
pub struct GraphMatrices {
    pub adjacency: Tensor,
    pub degree: Vec<f64>,
    pub laplacian: Tensor,
    pub lambda_max: f64,
    pub scaled_laplacian: Arc<Tensor>,
    /// `I + A` with the local (inverse-distance) edge feature.
    pub local_mix: Arc<Tensor>,
    pub local_norm: Vec<f64>,
    pub local_norm_inv: Vec<f64>,
}

impl GraphMatrices {
    pub fn from_graph(graph: &Graph) -> Result<Self, GeoError> {
        let n = graph.len();
        let adjacency = Tensor::matrix(n, n, graph.adjacency())?;
        let degree = (0..n).map(|i| adjacency.row(i).iter().sum()).collect();
        let sl = scaled_laplacian(&adjacency)?;
        let mut mix = adjacency.clone();
        for i in 0..n {
            mix.set(i, i, 1.0);
        }
        let local_norm = local_norm_diagonal(&adjacency);
        let local_norm_inv = local_norm.iter().map(|m| 1.0 / m).collect();
        Ok(Self {
            adjacency,
            degree,
            laplacian: sl.laplacian,
            lambda_max: sl.lambda_max,
            scaled_laplacian: Arc::new(sl.scaled),
            local_mix: Arc::new(mix),
            local_norm,
            local_norm_inv,
        })
    }

    pub fn len(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
