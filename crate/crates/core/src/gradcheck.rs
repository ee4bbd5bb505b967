//! Central finite-difference gradient checking. Deliberately independent of
//! the analytic backward paths it validates: it only needs a scalar function
//! of a parameter vector.

/// Central difference (f(x+h) - f(x-h)) / 2h applied coordinate-wise.
///
/// `f` is evaluated 2·len times; `x` is restored between probes.
pub fn central_diff<F>(x: &[f64], h: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Absolute tolerance floor absorbing central-difference rounding noise
/// (~eps * |f| / h for h = 1e-5).
pub const FD_NOISE_FLOOR: f64 = 1e-9;

/// Worst violation ratio of |a - n| <= atol + rtol * max(|a|, |n|) over all
/// components; <= 1 means the gradients agree at (rtol, atol).
pub fn max_violation(analytic: &[f64], numeric: &[f64], rtol: f64, atol: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| (a - n).abs() / (atol + rtol * a.abs().max(n.abs())))
        .fold(0.0, f64::max)
}

/// Relative agreement at `rtol` with the noise-floor absolute tolerance.
pub fn grads_close(analytic: &[f64], numeric: &[f64], rtol: f64) -> bool {
    max_violation(analytic, numeric, rtol, FD_NOISE_FLOOR) <= 1.0
}

/// Assert an analytic gradient against central differences at relative
/// tolerance `rtol` (absolute floor `FD_NOISE_FLOOR`).
pub fn assert_grad_close<F>(x: &[f64], analytic: &[f64], h: f64, rtol: f64, f: F)
where
    F: FnMut(&[f64]) -> f64,
{
    let numeric = central_diff(x, h, f);
    let violation = max_violation(analytic, &numeric, rtol, FD_NOISE_FLOOR);
    assert!(
        violation <= 1.0,
        "gradient check failed: worst violation {violation:.3e} of rtol {rtol:.1e}\n analytic: {analytic:?}\n numeric:  {numeric:?}"
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        // f(x) = Σ i·x_i², ∇f = 2·i·x_i
        let x = [0.5, -1.25, 2.0];
        let f = |p: &[f64]| p.iter().enumerate().map(|(i, v)| i as f64 * v * v).sum();
        let analytic: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| 2.0 * i as f64 * v)
            .collect();
        assert_grad_close(&x, &analytic, 1e-5, 1e-8, f);
    }

    #[test]
    fn detects_wrong_gradient() {
        let x = [1.0, 2.0];
        let f = |p: &[f64]| p[0] * p[0] + p[1];
        let wrong = [2.0, 0.5];
        let numeric = central_diff(&x, 1e-5, f);
        assert!(!grads_close(&wrong, &numeric, 1e-5));
    }

    #[test]
    fn zero_components_tolerate_fd_noise() {
        // An exactly-zero analytic component against sub-noise-floor FD
        // residue passes; a real discrepancy does not.
        assert!(grads_close(&[0.0, 1.0], &[3e-11, 1.0], 1e-6));
        assert!(!grads_close(&[0.0, 1.0], &[1e-4, 1.0], 1e-6));
    }
}
