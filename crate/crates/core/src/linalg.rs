//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

/// Cholesky factor, log-determinant and inverse of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    pub lower: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    pub log_det: f64,
}

impl SpdFactor {
    pub fn new(m: &DMatrix<f64>) -> Option<Self> {
        let chol = m.clone().cholesky()?;
        let lower = chol.l();
        let log_det = 2.0 * lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return None;
        }
        let inverse = chol.inverse();
        Some(Self { lower, inverse, log_det })
    }

    /// `x' M⁻¹ x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.inverse * x)[(0, 0)]
    }
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.clone().cholesky().is_some()
}

/// Replaces `m` by `(m + m') / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigenvalue clipping: eigenvalues below `rel_floor * λ_max` are raised to that floor.
/// Returns the repaired matrix and whether any eigenvalue was changed.
pub fn clip_to_positive_definite(m: &DMatrix<f64>, rel_floor: f64) -> (DMatrix<f64>, bool) {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = sym.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        // Nothing sensible to anchor the floor to: fall back to a scaled identity.
        let n = m.nrows();
        return (DMatrix::identity(n, n) * rel_floor.max(f64::MIN_POSITIVE), true);
    }
    let floor = rel_floor * max;
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return (sym, false);
    }
    let clipped = eig.eigenvalues.map(|l| l.max(floor));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    (out, true)
}

/// Numerical rank of a tall matrix via its singular values.
pub fn column_rank(m: &DMatrix<f64>) -> usize {
    if m.ncols() == 0 {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = max * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON;
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}
