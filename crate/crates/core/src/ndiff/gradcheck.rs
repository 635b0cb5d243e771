//! Finite-difference gradient checking, the independent oracle for every
//! differentiable operation.

/// Central differences with step `h_rel · max(1, |xᵢ|)` per coordinate.
pub fn central_difference(f: &impl Fn(&[f64]) -> f64, x: &[f64], h_rel: f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = h_rel * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// `max_i |aᵢ - bᵢ| / max(1, |aᵢ|, |bᵢ|)`.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}
