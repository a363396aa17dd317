//! Central finite differences, used as the independent gradient oracle.

/// Central-difference gradient of a scalar function at `x`.
///
/// Step size per coordinate is `1e-6 * max(1, |x_i|)`, a good trade-off
/// between truncation and round-off error in f64 for the smooth losses this
/// crate verifies.
pub fn central_difference_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Relative-error comparison with an absolute floor, the standard way to
/// check analytic gradients against finite differences: near-zero
/// coordinates are compared absolutely (floor `scale_floor`), everything
/// else relatively.
pub fn gradients_match(analytic: &[f64], fd: &[f64], rel_tol: f64, scale_floor: f64) -> bool {
    analytic.len() == fd.len()
        && analytic
            .iter()
            .zip(fd)
            .all(|(a, f)| (a - f).abs() <= rel_tol * a.abs().max(f.abs()).max(scale_floor))
}
