//! FH, NL, NL_rs and NL_plugin: one proportion per area.
//!
//! Parameter layout: `(γ_1..γ_p, log σ_v, φ_1..φ_m)` with `φ_i = π_i` for FH and
//! `φ_i = logit π_i` otherwise.

use nalgebra::DMatrix;

use super::priors::{half_cauchy_log_scale, normal_coefficients, Priors};
use super::{Family, LogDensity};
use crate::error::ModelError;
use crate::linalg::column_rank;
use crate::math::{inv_logit, log_p_one_minus_p, normal_lpdf, HALF_LN_2PI};

/// Level-1 variance specification.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingVariance {
    /// Known `D_i` per area.
    Fixed(Vec<f64>),
    /// `D_i = π_i(1-π_i)·DEFF/ñ_i`, a function of the sampled `π_i`.
    RandomSampling { n_adjusted: Vec<f64>, deff: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateData {
    pub area_ids: Vec<String>,
    /// Direct estimates; `None` for areas without a sample (prediction only).
    pub z: Vec<Option<f64>>,
    /// `m × p` covariate matrix, first column the intercept.
    pub x: DMatrix<f64>,
    pub variance: SamplingVariance,
}

#[derive(Debug, Clone)]
pub struct UnivariateModel {
    family: Family,
    data: UnivariateData,
    priors: Priors,
    /// `ln(DEFF/ñ_i)` for NL_rs.
    log_scale: Vec<f64>,
}

/// Checks `values` at the areas that have a direct estimate (others are never used).
fn check_positive(values: &[f64], z: &[Option<f64>], what: &str) -> Result<(), ModelError> {
    if let Some(i) = (0..values.len()).find(|&i| z[i].is_some() && !(values[i] > 0.0 && values[i].is_finite())) {
        return Err(ModelError::InvalidData(format!("{what} for area index {i} must be positive")));
    }
    Ok(())
}

impl UnivariateModel {
    pub fn new(family: Family, data: UnivariateData, priors: Priors) -> Result<Self, ModelError> {
        priors.validate().map_err(ModelError::Config)?;
        let m = data.z.len();
        if m == 0 {
            return Err(ModelError::InvalidData("no areas".into()));
        }
        if data.x.nrows() != m || data.area_ids.len() != m {
            return Err(ModelError::InvalidData(format!(
                "{m} areas but covariate matrix has {} rows and {} ids",
                data.x.nrows(),
                data.area_ids.len()
            )));
        }
        if data.x.ncols() > m || column_rank(&data.x) < data.x.ncols() {
            return Err(ModelError::RankDeficient);
        }
        if data.x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidData("non-finite covariate".into()));
        }
        if data.z.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidData("non-finite direct estimate".into()));
        }
        let log_scale = match (&family, &data.variance) {
            (Family::MvLogit, _) => return Err(ModelError::Config("MV_LOGIT is not a univariate family".into())),
            (Family::NlRs, SamplingVariance::RandomSampling { n_adjusted, deff }) => {
                if n_adjusted.len() != m {
                    return Err(ModelError::InvalidData("adjusted sizes do not match areas".into()));
                }
                check_positive(n_adjusted, &data.z, "adjusted sample size")?;
                if !(*deff > 0.0 && deff.is_finite()) {
                    return Err(ModelError::InvalidData("design effect must be positive".into()));
                }
                n_adjusted.iter().map(|n| (deff / n).ln()).collect()
            }
            (Family::NlRs, SamplingVariance::Fixed(_)) => {
                return Err(ModelError::Config("NL_RS needs adjusted sizes and a design effect".into()))
            }
            (_, SamplingVariance::Fixed(d)) => {
                if d.len() != m {
                    return Err(ModelError::InvalidData("sampling variances do not match areas".into()));
                }
                check_positive(d, &data.z, "sampling variance")?;
                Vec::new()
            }
            (_, SamplingVariance::RandomSampling { .. }) => {
                return Err(ModelError::Config(format!("{family} needs fixed sampling variances")))
            }
        };
        Ok(Self { family, data, priors, log_scale })
    }

    /// NL_plugin data: `D_i = π̂_i(1-π̂_i)·DEFF/ñ_i` from plug-in estimates `π̂_i`.
    /// Areas without a sample carry `ñ_i = NaN` and get `D_i = NaN`.
    pub fn plugin_variances(plugin: &[f64], n_adjusted: &[f64], deff: f64, area_ids: &[String]) -> Result<Vec<f64>, ModelError> {
        plugin
            .iter()
            .zip(n_adjusted)
            .enumerate()
            .map(|(i, (&p, &n))| {
                if n.is_nan() {
                    return Ok(f64::NAN);
                }
                if !(p > 0.0 && p < 1.0) {
                    return Err(ModelError::PluginOutOfRange(area_ids.get(i).cloned().unwrap_or_else(|| i.to_string())));
                }
                Ok(p * (1.0 - p) * deff / n)
            })
            .collect()
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn data(&self) -> &UnivariateData {
        &self.data
    }

    pub fn priors(&self) -> &Priors {
        &self.priors
    }

    pub fn n_areas(&self) -> usize {
        self.data.z.len()
    }

    pub fn n_coefficients(&self) -> usize {
        self.data.x.ncols()
    }

    /// Maps the sampled coordinate to `π_i`.
    pub fn pi(&self, phi: f64) -> f64 {
        match self.family {
            Family::Fh => phi,
            _ => inv_logit(phi),
        }
    }

    /// Level-1 variance of area `i` at `φ_i`.
    pub fn sampling_variance(&self, i: usize, phi: f64) -> f64 {
        match &self.data.variance {
            SamplingVariance::Fixed(d) => d[i],
            SamplingVariance::RandomSampling { .. } => (log_p_one_minus_p(phi) + self.log_scale[i]).exp(),
        }
    }

    /// Level-1 log density of each observed area at one unconstrained point
    /// (areas without `z` are skipped).
    pub fn pointwise_loglik(&self, params: &[f64]) -> Vec<f64> {
        let p = self.n_coefficients();
        let phi = &params[p + 1..];
        self.data
            .z
            .iter()
            .enumerate()
            .filter_map(|(i, z)| z.map(|z| self.level_one(i, z, phi[i]).0))
            .collect()
    }

    /// Level-1 log density and its derivative in `φ_i`.
    fn level_one(&self, i: usize, z: f64, phi: f64) -> (f64, f64) {
        match self.family {
            Family::Fh => {
                let d = self.sampling_variance(i, phi);
                (normal_lpdf(z, phi, d), (z - phi) / d)
            }
            Family::NlRs => {
                let pi = inv_logit(phi);
                let log_d = log_p_one_minus_p(phi) + self.log_scale[i];
                let r = z - pi;
                let quad = if r == 0.0 { 0.0 } else { 0.5 * r * r * (-log_d).exp() };
                let value = -HALF_LN_2PI - 0.5 * log_d - quad;
                // dlogD/dφ = 1 - 2π; dπ/dφ = π(1-π) so r·π(1-π)/D = r·ñ/DEFF.
                let dlog_d = 1.0 - 2.0 * pi;
                let deriv = -0.5 * dlog_d + r * (-self.log_scale[i]).exp() + quad * dlog_d;
                (value, deriv)
            }
            _ => {
                let pi = inv_logit(phi);
                let d = self.sampling_variance(i, phi);
                (normal_lpdf(z, pi, d), (z - pi) / d * pi * (1.0 - pi))
            }
        }
    }
}

impl LogDensity for UnivariateModel {
    fn dim(&self) -> usize {
        self.n_coefficients() + 1 + self.n_areas()
    }

    fn logp_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.n_coefficients();
        let m = self.n_areas();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (gamma, rest) = params.split_at(p);
        let u = rest[0];
        let phi = &rest[1..];
        let var_v = (2.0 * u).exp();

        let mut value = normal_coefficients(gamma, self.priors.coeff_scale, &mut grad[..p]);
        let (hc, dhc) = half_cauchy_log_scale(u, self.priors.sd_scale);
        value += hc;
        grad[p] += dhc;

        for i in 0..m {
            let mu: f64 = (0..p).map(|j| self.data.x[(i, j)] * gamma[j]).sum();
            let r = phi[i] - mu;
            value += -HALF_LN_2PI - u - 0.5 * r * r / var_v;
            let dr = r / var_v;
            grad[p + 1 + i] -= dr;
            for j in 0..p {
                grad[j] += dr * self.data.x[(i, j)];
            }
            grad[p] += -1.0 + r * dr;

            if let Some(z) = self.data.z[i] {
                let (v, d) = self.level_one(i, z, phi[i]);
                value += v;
                grad[p + 1 + i] += d;
            }
        }
        if value.is_nan() {
            f64::NEG_INFINITY
        } else {
            value
        }
    }
}
