use super::Tensor;

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn finite_diff_grad(mut f: impl FnMut(&Tensor) -> f64, x: &Tensor, h: f64) -> Tensor {
    assert!(h > 0.0, "finite difference step must be positive");
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for k in 0..x.numel() {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + h;
        let up = f(&probe);
        probe.data_mut()[k] = orig - h;
        let down = f(&probe);
        probe.data_mut()[k] = orig;
        grad.data_mut()[k] = (up - down) / (2.0 * h);
    }
    grad
}

/// Largest `|a - b| / max(1, |a|)` over all entries.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic.data().iter().zip(numeric.data()).map(|(a, n)| (a - n).abs() / a.abs().max(1.0)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares() {
        let x = Tensor::row_vector(vec![1.0, 2.0]);
        let g = finite_diff_grad(|t| t.data().iter().map(|v| v * v).sum(), &x, 1e-5);
        assert!((g.data()[0] - 2.0).abs() < 1e-6);
        assert!((g.data()[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let x = Tensor::row_vector(vec![3.0, -1.0, 8.0]);
        let g = finite_diff_grad(|_| 7.5, &x, 1e-5);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }
}
