//! Prior densities with their transform Jacobians, on the unconstrained scale.

use serde::{Deserialize, Serialize};

use crate::math::{inv_logit, normal_lpdf};

/// How the correlation parameters of the multivariate model are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationPrior {
    /// Independent Uniform(0, 1) on every correlation, restricted to the PD region.
    #[default]
    Uniform,
    /// Correlations fixed at zero (`R = I`); no correlation parameters are sampled.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Priors {
    /// Standard deviation of the normal prior on regression coefficients.
    pub coeff_scale: f64,
    /// Scale of the half-Cauchy prior on standard deviations.
    pub sd_scale: f64,
    pub correlation: CorrelationPrior,
}

impl Default for Priors {
    fn default() -> Self {
        Self { coeff_scale: 5.0, sd_scale: 5.0, correlation: CorrelationPrior::Uniform }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.coeff_scale > 0.0 && self.coeff_scale.is_finite()) {
            return Err("priors.coeff_scale must be positive".into());
        }
        if !(self.sd_scale > 0.0 && self.sd_scale.is_finite()) {
            return Err("priors.sd_scale must be positive".into());
        }
        Ok(())
    }
}

/// `Σ log N(b_j | 0, scale²)`; adds the gradient into `grad`.
pub fn normal_coefficients(b: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
    let var = scale * scale;
    let mut value = 0.0;
    for (g, &bj) in grad.iter_mut().zip(b) {
        value += normal_lpdf(bj, 0.0, var);
        *g -= bj / var;
    }
    value
}

/// Half-Cauchy(0, scale) log density of `σ = exp(u)` plus the log-Jacobian `u`.
/// Returns the value and its derivative in `u`.
pub fn half_cauchy_log_scale(u: f64, scale: f64) -> (f64, f64) {
    let t = (u.exp() / scale).powi(2);
    let value = std::f64::consts::LN_2 - (std::f64::consts::PI * scale).ln() - t.ln_1p() + u;
    let deriv = 1.0 - 2.0 * t / (1.0 + t);
    (value, deriv)
}

/// Uniform(0, 1) density of `ρ = inv_logit(t)` plus the log-Jacobian `log ρ(1-ρ)`.
pub fn uniform_logit(t: f64) -> (f64, f64) {
    (crate::math::log_p_one_minus_p(t), 1.0 - 2.0 * inv_logit(t))
}
