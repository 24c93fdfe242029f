use nalgebra::DMatrix;

/// Number of free correlations for `k` dimensions.
pub fn n_correlations(k: usize) -> usize {
    k * k.saturating_sub(1) / 2
}

/// Position of `(a, b)` (`a > b`) in the lower-triangle, row-major correlation vector.
pub fn correlation_index(a: usize, b: usize) -> usize {
    debug_assert!(a > b);
    a * (a - 1) / 2 + b
}

/// Unit-diagonal symmetric matrix from lower-triangle, row-major correlations
/// `(ρ_21, ρ_31, ρ_32, ...)`, and whether it admits a Cholesky factorization.
pub fn build_correlation(rho: &[f64]) -> (DMatrix<f64>, bool) {
    // Solve k(k-1)/2 = len for k.
    let k = ((1.0 + (1.0 + 8.0 * rho.len() as f64).sqrt()) / 2.0).round() as usize;
    assert_eq!(n_correlations(k), rho.len(), "correlation vector length is not triangular");
    let mut r = DMatrix::identity(k, k);
    for a in 1..k {
        for b in 0..a {
            let v = rho[correlation_index(a, b)];
            r[(a, b)] = v;
            r[(b, a)] = v;
        }
    }
    let pd = r.clone().cholesky().is_some();
    (r, pd)
}
