//! Slow reference implementations used to verify the fast paths in tests:
//! finite differences and brute-force quadrature. Nothing here is meant for
//! production use; everything favors transparency over speed.

use ndarray::{Array1, ArrayView1};

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn central_diff_grad<F>(x: ArrayView1<'_, f64>, h: f64, f: F) -> Array1<f64>
where
    F: Fn(ArrayView1<'_, f64>) -> f64,
{
    let mut grad = Array1::zeros(x.len());
    let mut probe = x.to_owned();
    for j in 0..x.len() {
        let orig = probe[j];
        probe[j] = orig + h;
        let up = f(probe.view());
        probe[j] = orig - h;
        let down = f(probe.view());
        probe[j] = orig;
        grad[j] = (up - down) / (2.0 * h);
    }
    grad
}

/// Largest elementwise discrepancy, scaled by max(1, |a|, |b|) so the same
/// tolerance works for both tiny and large gradient entries.
pub fn max_rel_err(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch in comparison");
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Log of a 2-D integral of exp(log_f) over [lo, hi]^2, by midpoint rule on
/// a uniform grid with the given step. Accurate when the integrand is
/// smooth and decays well inside the box.
pub fn log_integral_2d<F>(lo: f64, hi: f64, step: f64, log_f: F) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    assert!(hi > lo && step > 0.0);
    let n = ((hi - lo) / step).round() as usize;
    let mut terms = Vec::with_capacity(n * n);
    for i in 0..n {
        let x = lo + (i as f64 + 0.5) * step;
        for j in 0..n {
            let y = lo + (j as f64 + 0.5) * step;
            terms.push(log_f(x, y));
        }
    }
    crate::math::log_sum_exp(&terms) + 2.0 * step.ln()
}

/// Log of a 1-D integral of exp(log_f) over [lo, hi] by midpoint rule.
pub fn log_integral_1d<F>(lo: f64, hi: f64, step: f64, log_f: F) -> f64
where
    F: Fn(f64) -> f64,
{
    assert!(hi > lo && step > 0.0);
    let n = ((hi - lo) / step).round() as usize;
    let terms: Vec<f64> = (0..n)
        .map(|i| log_f(lo + (i as f64 + 0.5) * step))
        .collect();
    crate::math::log_sum_exp(&terms) + step.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn central_diff_on_quadratic_is_exact_to_truncation() {
        // f(x) = x0^2 + 3 x0 x1, grad = [2 x0 + 3 x1, 3 x0].
        let f = |x: ArrayView1<'_, f64>| x[0] * x[0] + 3.0 * x[0] * x[1];
        let x = array![1.5, -2.0];
        let g = central_diff_grad(x.view(), 1e-5, f);
        assert!((g[0] - (2.0 * 1.5 + 3.0 * -2.0)).abs() < 1e-9);
        assert!((g[1] - 3.0 * 1.5).abs() < 1e-9);
    }

    #[test]
    fn log_integral_matches_gaussian_normalizer() {
        // log ∫∫ exp(-(x²+y²)/2) = log(2π).
        let got = log_integral_2d(-8.0, 8.0, 0.01, |x, y| -0.5 * (x * x + y * y));
        let expect = (2.0 * std::f64::consts::PI).ln();
        assert!((got - expect).abs() < 1e-6, "{got} vs {expect}");
    }

    #[test]
    fn log_integral_1d_matches_gaussian_normalizer() {
        // log ∫ exp(-x²/2) = 0.5 log(2π).
        let got = log_integral_1d(-10.0, 10.0, 0.001, |x| -0.5 * x * x);
        let expect = 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
    }

    #[test]
    fn max_rel_err_reports_worst_entry() {
        let a = array![1.0, 100.0, 1e-12];
        let b = array![1.0, 101.0, 2e-12];
        let err = max_rel_err(a.view(), b.view());
        assert!((err - 1.0 / 101.0).abs() < 1e-12);
    }
}
