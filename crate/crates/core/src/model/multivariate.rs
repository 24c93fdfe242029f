//! Multivariate normal hierarchical logistic model for K dimensional scores.
//!
//! Level 1: `y_i ~ N_K(θ_i, Σ_i)` with `θ_ik = inv_logit(Λ_ik)`.
//! Level 2: `Λ_i ~ N_K(X_i β, σ² R)`.
//!
//! Parameter layout: `(β_1..β_q, log σ, logit ρ_1..logit ρ_c, Λ_1, ..., Λ_m)` where the
//! `c = K(K-1)/2` correlations are omitted when the correlation prior is `Zero`.

use nalgebra::{DMatrix, DVector};

use super::correlation::{build_correlation, correlation_index, n_correlations};
use super::priors::{half_cauchy_log_scale, normal_coefficients, uniform_logit, CorrelationPrior, Priors};
use super::LogDensity;
use crate::error::ModelError;
use crate::linalg::{column_rank, SpdFactor};
use crate::math::{inv_logit, HALF_LN_2PI};

#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateData {
    pub area_ids: Vec<String>,
    pub k: usize,
    /// Direct dimensional estimates; `None` for areas without poor respondents.
    pub y: Vec<Option<Vec<f64>>>,
    /// Smoothed sampling covariances, present exactly where `y` is.
    pub sigma: Vec<Option<DMatrix<f64>>>,
    /// Per-area `K × q` design matrices.
    pub design: Vec<DMatrix<f64>>,
}

impl MultivariateData {
    /// `X_i β = (x_i'β) 1_K`.
    pub fn shared_design(x: &DMatrix<f64>, k: usize) -> Vec<DMatrix<f64>> {
        (0..x.nrows())
            .map(|i| DMatrix::from_fn(k, x.ncols(), |_, j| x[(i, j)]))
            .collect()
    }

    /// Separate coefficients per dimension: `X_i = I_K ⊗ x_i'`, with `β` ordered dimension-major.
    pub fn dimension_specific_design(x: &DMatrix<f64>, k: usize) -> Vec<DMatrix<f64>> {
        let p = x.ncols();
        (0..x.nrows())
            .map(|i| {
                DMatrix::from_fn(k, k * p, |row, col| if col / p == row { x[(i, col % p)] } else { 0.0 })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct MultivariateModel {
    data: MultivariateData,
    priors: Priors,
    factors: Vec<Option<SpdFactor>>,
    q: usize,
    n_rho: usize,
}

impl MultivariateModel {
    pub fn new(data: MultivariateData, priors: Priors) -> Result<Self, ModelError> {
        priors.validate().map_err(ModelError::Config)?;
        let m = data.area_ids.len();
        let k = data.k;
        if m == 0 || k == 0 {
            return Err(ModelError::InvalidData("need at least one area and one dimension".into()));
        }
        if data.y.len() != m || data.sigma.len() != m || data.design.len() != m {
            return Err(ModelError::InvalidData("per-area inputs have inconsistent lengths".into()));
        }
        let q = data.design[0].ncols();
        if data.design.iter().any(|x| x.nrows() != k || x.ncols() != q) {
            return Err(ModelError::InvalidData(format!("every design matrix must be {k} x {q}")));
        }
        if data.design.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
            return Err(ModelError::InvalidData("non-finite covariate".into()));
        }
        let stacked = DMatrix::from_fn(m * k, q, |r, c| data.design[r / k][(r % k, c)]);
        if q > m * k || column_rank(&stacked) < q {
            return Err(ModelError::RankDeficient);
        }
        let mut factors = Vec::with_capacity(m);
        for i in 0..m {
            match (&data.y[i], &data.sigma[i]) {
                (Some(y), Some(s)) => {
                    if y.len() != k || s.nrows() != k || s.ncols() != k {
                        return Err(ModelError::InvalidData(format!("area {} has wrong dimensions", data.area_ids[i])));
                    }
                    if y.iter().any(|v| !v.is_finite()) {
                        return Err(ModelError::InvalidData(format!("area {} has a non-finite y", data.area_ids[i])));
                    }
                    let f = SpdFactor::new(s).ok_or_else(|| ModelError::SamplingCovarianceNotPd(data.area_ids[i].clone()))?;
                    factors.push(Some(f));
                }
                (None, None) => factors.push(None),
                _ => {
                    return Err(ModelError::InvalidData(format!(
                        "area {} must have both or neither of y and sigma",
                        data.area_ids[i]
                    )))
                }
            }
        }
        let n_rho = match priors.correlation {
            CorrelationPrior::Uniform => n_correlations(k),
            CorrelationPrior::Zero => 0,
        };
        Ok(Self { data, priors, factors, q, n_rho })
    }

    pub fn data(&self) -> &MultivariateData {
        &self.data
    }

    pub fn priors(&self) -> &Priors {
        &self.priors
    }

    pub fn k(&self) -> usize {
        self.data.k
    }

    pub fn n_areas(&self) -> usize {
        self.data.area_ids.len()
    }

    pub fn n_coefficients(&self) -> usize {
        self.q
    }

    pub fn n_rho(&self) -> usize {
        self.n_rho
    }

    /// Offset of `Λ_1` in the parameter vector.
    pub fn lambda_offset(&self) -> usize {
        self.q + 1 + self.n_rho
    }

    /// Correlations at an unconstrained point (all zero under the `Zero` prior).
    pub fn correlations(&self, params: &[f64]) -> Vec<f64> {
        let k = self.data.k;
        if self.n_rho == 0 {
            return vec![0.0; n_correlations(k)];
        }
        params[self.q + 1..self.q + 1 + self.n_rho].iter().map(|&t| inv_logit(t)).collect()
    }

    /// Level-1 log density of each area with an observed `y_i`.
    pub fn pointwise_loglik(&self, params: &[f64]) -> Vec<f64> {
        let k = self.data.k;
        let off = self.lambda_offset();
        (0..self.n_areas())
            .filter_map(|i| {
                let f = self.factors[i].as_ref()?;
                let y = self.data.y[i].as_ref()?;
                let r = DVector::from_fn(k, |j, _| y[j] - inv_logit(params[off + i * k + j]));
                Some(-(k as f64) * HALF_LN_2PI - 0.5 * f.log_det - 0.5 * f.quad_form(&r))
            })
            .collect()
    }
}

impl LogDensity for MultivariateModel {
    fn dim(&self) -> usize {
        self.lambda_offset() + self.n_areas() * self.data.k
    }

    fn logp_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        let k = self.data.k;
        let q = self.q;
        let m = self.n_areas();
        let kf = k as f64;
        grad.iter_mut().for_each(|g| *g = 0.0);

        let beta = &params[..q];
        let u = params[q];
        let var = (2.0 * u).exp();
        let off = self.lambda_offset();

        let mut value = normal_coefficients(beta, self.priors.coeff_scale, &mut grad[..q]);
        let (hc, dhc) = half_cauchy_log_scale(u, self.priors.sd_scale);
        value += hc;
        grad[q] += dhc;

        let rho: Vec<f64> = self.correlations(params);
        let (r_inv, log_det_r) = if self.n_rho == 0 {
            (DMatrix::identity(k, k), 0.0)
        } else {
            for j in 0..self.n_rho {
                let (v, d) = uniform_logit(params[q + 1 + j]);
                value += v;
                grad[q + 1 + j] += d;
            }
            let (r, pd) = build_correlation(&rho);
            if !pd {
                return f64::NEG_INFINITY;
            }
            match SpdFactor::new(&r) {
                Some(f) => (f.inverse, f.log_det),
                None => return f64::NEG_INFINITY,
            }
        };

        let mut scatter = DMatrix::zeros(k, k);
        for i in 0..m {
            let x = &self.data.design[i];
            let lambda = DVector::from_column_slice(&params[off + i * k..off + (i + 1) * k]);
            let e = &lambda - x * DVector::from_column_slice(beta);
            let r_inv_e = &r_inv * &e;
            let quad = e.dot(&r_inv_e);
            value += -kf * HALF_LN_2PI - kf * u - 0.5 * log_det_r - 0.5 * quad / var;
            let scaled = &r_inv_e / var;
            let g_beta = x.transpose() * &scaled;
            for j in 0..q {
                grad[j] += g_beta[j];
            }
            grad[q] += -kf + quad / var;
            for j in 0..k {
                grad[off + i * k + j] -= scaled[j];
            }
            if self.n_rho > 0 {
                scatter += &e * e.transpose();
            }

            if let (Some(f), Some(y)) = (&self.factors[i], &self.data.y[i]) {
                let theta: Vec<f64> = lambda.iter().map(|&l| inv_logit(l)).collect();
                let r = DVector::from_fn(k, |j, _| y[j] - theta[j]);
                let s_inv_r = &f.inverse * &r;
                value += -kf * HALF_LN_2PI - 0.5 * f.log_det - 0.5 * r.dot(&s_inv_r);
                for j in 0..k {
                    grad[off + i * k + j] += s_inv_r[j] * theta[j] * (1.0 - theta[j]);
                }
            }
        }

        if self.n_rho > 0 {
            // dℓ/dR (symmetric form) = -m/2 R⁻¹ + R⁻¹ S R⁻¹ / (2σ²)
            let g = &r_inv * (-0.5 * m as f64) + (&r_inv * &scatter * &r_inv) / (2.0 * var);
            for a in 1..k {
                for b in 0..a {
                    let idx = correlation_index(a, b);
                    let rho_ab = rho[idx];
                    grad[q + 1 + idx] += 2.0 * g[(a, b)] * rho_ab * (1.0 - rho_ab);
                }
            }
        }
        if value.is_nan() {
            f64::NEG_INFINITY
        } else {
            value
        }
    }
}
