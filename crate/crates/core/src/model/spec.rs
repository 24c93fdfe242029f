//! Model configuration and assembly of model data from design summaries and the area frame.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::correlation::n_correlations;
use super::{Family, LogDensity, MultivariateData, MultivariateModel, Priors, SamplingVariance, UnivariateData, UnivariateModel};
use crate::error::ModelError;
use crate::hmc::{PosteriorDraws, SamplerConfig};
use crate::io::AreaTable;
use crate::math::inv_logit;
use crate::survey_design::{AreaDesignSummary, DesignEffects};

fn default_true() -> bool {
    true
}

/// Model configuration file. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default)]
    pub priors: Priors,
    /// Short dimension labels (e.g. `md`, `sd`, `hc`); default `d1..dK`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension_names: Option<Vec<String>>,
    #[serde(default = "default_true")]
    pub standardize_covariates: bool,
    /// Separate coefficients per dimension (`X_i = I_K ⊗ x_i'`) instead of a shared `x_i'β`.
    #[serde(default)]
    pub dimension_specific_covariates: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.priors.validate().map_err(ModelError::Config)?;
        match (self.family, self.k) {
            (Family::MvLogit, None) | (Family::MvLogit, Some(0)) => {
                return Err(ModelError::Config("MV_LOGIT needs K >= 1".into()))
            }
            (Family::MvLogit, Some(k)) => {
                if let Some(names) = &self.dimension_names {
                    if names.len() != k {
                        return Err(ModelError::Config(format!("{} dimension names for K = {k}", names.len())));
                    }
                }
            }
            (_, Some(_)) => return Err(ModelError::Config("K applies to MV_LOGIT only".into())),
            _ => {}
        }
        if self.dimension_specific_covariates && self.family != Family::MvLogit {
            return Err(ModelError::Config("dimension_specific_covariates applies to MV_LOGIT only".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.covariates {
            if c == "intercept" || !seen.insert(c) {
                return Err(ModelError::Config(format!("covariate '{c}' is reserved or repeated")));
            }
        }
        Ok(())
    }

    pub fn dimension_names(&self) -> Vec<String> {
        match (&self.dimension_names, self.k) {
            (Some(n), _) => n.clone(),
            (None, Some(k)) => (1..=k).map(|j| format!("d{j}")).collect(),
            (None, None) => Vec::new(),
        }
    }
}

/// Area-level covariate matrix with intercept, and the standardization applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateDesign {
    /// `intercept` followed by the covariate names.
    pub names: Vec<String>,
    #[serde(skip)]
    pub x: DMatrix<f64>,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Builds `[1, (x_j - mean_j)/sd_j ...]` (or raw covariates when `standardize` is false).
pub fn build_design(table: &AreaTable, covariates: &[String], standardize: bool) -> Result<CovariateDesign, ModelError> {
    let m = table.area_ids.len();
    let mut names = vec!["intercept".to_string()];
    let mut columns = vec![vec![1.0; m]];
    let mut center = Vec::new();
    let mut scale = Vec::new();
    for c in covariates {
        let v = table.covariate(c).ok_or_else(|| ModelError::Config(format!("unknown covariate '{c}'")))?;
        let (mu, sd) = if standardize {
            let mu = crate::math::mean(v);
            let sd = crate::math::sample_variance(v).sqrt();
            (mu, if sd > 0.0 { sd } else { 1.0 })
        } else {
            (0.0, 1.0)
        };
        columns.push(v.iter().map(|x| (x - mu) / sd).collect());
        names.push(c.clone());
        center.push(mu);
        scale.push(sd);
    }
    let x = DMatrix::from_fn(m, columns.len(), |i, j| columns[j][i]);
    Ok(CovariateDesign { names, x, center, scale })
}

/// A constructed model of any family.
#[derive(Debug, Clone)]
pub enum Model {
    Univariate(UnivariateModel),
    Multivariate(MultivariateModel),
}

impl LogDensity for Model {
    fn dim(&self) -> usize {
        match self {
            Model::Univariate(m) => m.dim(),
            Model::Multivariate(m) => m.dim(),
        }
    }

    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        match self {
            Model::Univariate(m) => m.logp_grad(x, grad),
            Model::Multivariate(m) => m.logp_grad(x, grad),
        }
    }
}

/// Everything needed to build a model besides the configuration.
pub struct ModelInputs<'a> {
    pub areas: &'a AreaTable,
    pub summaries: &'a [AreaDesignSummary],
    pub effects: &'a DesignEffects,
    /// First-stage posterior means of `π_i` (NL_PLUGIN only), aligned with `areas`.
    pub plugin: Option<&'a [f64]>,
}

/// A model together with the labels needed to name its outputs.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub family: Family,
    pub model: Model,
    pub design: CovariateDesign,
    pub area_ids: Vec<String>,
    pub dimension_names: Vec<String>,
}

pub fn build_model(config: &ModelConfig, inputs: &ModelInputs<'_>) -> Result<BuiltModel, ModelError> {
    config.validate()?;
    let table = inputs.areas;
    let by_id: HashMap<&str, &AreaDesignSummary> = inputs.summaries.iter().map(|s| (s.area_id.as_str(), s)).collect();
    if let Some(s) = inputs.summaries.iter().find(|s| table.index_of(&s.area_id).is_none()) {
        return Err(ModelError::InvalidData(format!("surveyed area '{}' is missing from the area table", s.area_id)));
    }
    let design = build_design(table, &config.covariates, config.standardize_covariates)?;
    let area_ids = table.area_ids.clone();
    let summary = |a: &str| by_id.get(a).copied();

    let model = if config.family.is_univariate() {
        let z: Vec<Option<f64>> = area_ids.iter().map(|a| summary(a).map(|s| s.z_direct)).collect();
        let n_adj: Vec<f64> = area_ids.iter().map(|a| summary(a).map_or(f64::NAN, |s| s.n_adjusted)).collect();
        let variance = match config.family {
            Family::Fh | Family::Nl => {
                SamplingVariance::Fixed(area_ids.iter().map(|a| summary(a).map_or(f64::NAN, |s| s.d_smoothed)).collect())
            }
            Family::NlRs => SamplingVariance::RandomSampling { n_adjusted: n_adj, deff: inputs.effects.deff_poverty },
            Family::NlPlugin => {
                let plugin = inputs
                    .plugin
                    .ok_or_else(|| ModelError::Config("NL_PLUGIN needs first-stage plug-in estimates".into()))?;
                if plugin.len() != area_ids.len() {
                    return Err(ModelError::InvalidData("plug-in estimates do not match areas".into()));
                }
                SamplingVariance::Fixed(UnivariateModel::plugin_variances(plugin, &n_adj, inputs.effects.deff_poverty, &area_ids)?)
            }
            Family::MvLogit => unreachable!(),
        };
        let data = UnivariateData { area_ids: area_ids.clone(), z, x: design.x.clone(), variance };
        Model::Univariate(UnivariateModel::new(config.family, data, config.priors)?)
    } else {
        let k = config.k.unwrap_or(0);
        if inputs.effects.k != k {
            return Err(ModelError::Config(format!(
                "model has K = {k} but the design data provide {} score dimensions",
                inputs.effects.k
            )));
        }
        let y: Vec<Option<Vec<f64>>> = area_ids.iter().map(|a| summary(a).and_then(|s| s.y_direct.clone())).collect();
        let sigma: Vec<Option<DMatrix<f64>>> = area_ids
            .iter()
            .map(|a| summary(a).and_then(|s| if s.y_direct.is_some() { s.sigma_hat.clone() } else { None }))
            .collect();
        let y = y.into_iter().zip(&sigma).map(|(y, s)| if s.is_some() { y } else { None }).collect();
        let x = if config.dimension_specific_covariates {
            MultivariateData::dimension_specific_design(&design.x, k)
        } else {
            MultivariateData::shared_design(&design.x, k)
        };
        let data = MultivariateData { area_ids: area_ids.clone(), k, y, sigma, design: x };
        Model::Multivariate(MultivariateModel::new(data, config.priors)?)
    };
    Ok(BuiltModel { family: config.family, model, design, area_ids, dimension_names: config.dimension_names() })
}

impl BuiltModel {
    /// Names of the constrained and derived quantities produced by [`BuiltModel::constrain`].
    pub fn output_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        match &self.model {
            Model::Univariate(m) => {
                names.extend(self.design.names.iter().map(|n| format!("gamma[{n}]")));
                names.push("sigma_v".into());
                names.push("sigma_v_sq".into());
                names.extend(self.area_ids.iter().map(|a| format!("pi[{a}]")));
                for (i, a) in self.area_ids.iter().enumerate() {
                    if m.data().z[i].is_some() {
                        names.push(format!("sqrt_D[{a}]"));
                    }
                }
            }
            Model::Multivariate(m) => {
                let k = m.k();
                if m.n_coefficients() == self.design.names.len() {
                    names.extend(self.design.names.iter().map(|n| format!("beta[{n}]")));
                } else {
                    for d in &self.dimension_names {
                        names.extend(self.design.names.iter().map(|n| format!("beta[{d}:{n}]")));
                    }
                }
                names.push("sigma".into());
                names.push("sigma_sq".into());
                if m.n_rho() > 0 {
                    for a in 1..k {
                        for b in 0..a {
                            names.push(format!("rho[{},{}]", self.dimension_names[a], self.dimension_names[b]));
                        }
                    }
                }
                for a in &self.area_ids {
                    names.extend(self.dimension_names.iter().map(|d| format!("theta[{a},{d}]")));
                }
                for a in &self.area_ids {
                    names.extend(self.dimension_names.iter().map(|d| format!("eta[{a},{d}]")));
                }
            }
        }
        names
    }

    /// Maps one unconstrained draw to the reported quantities.
    pub fn constrain(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        match &self.model {
            Model::Univariate(m) => {
                let p = m.n_coefficients();
                out.extend_from_slice(&x[..p]);
                let sv = x[p].exp();
                out.push(sv);
                out.push(sv * sv);
                let phi = &x[p + 1..];
                out.extend(phi.iter().map(|&f| m.pi(f)));
                for (i, &f) in phi.iter().enumerate() {
                    if m.data().z[i].is_some() {
                        out.push(m.sampling_variance(i, f).sqrt());
                    }
                }
            }
            Model::Multivariate(m) => {
                let q = m.n_coefficients();
                let k = m.k();
                out.extend_from_slice(&x[..q]);
                let s = x[q].exp();
                out.push(s);
                out.push(s * s);
                if m.n_rho() > 0 {
                    out.extend(m.correlations(x));
                }
                let theta: Vec<f64> = x[m.lambda_offset()..].iter().map(|&l| inv_logit(l)).collect();
                out.extend_from_slice(&theta);
                for area in theta.chunks(k) {
                    let total: f64 = area.iter().sum();
                    out.extend(area.iter().map(|t| t / total));
                }
            }
        }
        out
    }

    /// Area ids that enter the pointwise log-likelihood, in column order.
    pub fn observed_area_ids(&self) -> Vec<String> {
        self.area_ids
            .iter()
            .enumerate()
            .filter(|(i, _)| match &self.model {
                Model::Univariate(m) => m.data().z[*i].is_some(),
                Model::Multivariate(m) => m.data().y[*i].is_some(),
            })
            .map(|(_, a)| a.clone())
            .collect()
    }

    /// Level-1 log density of each observed area at one unconstrained draw.
    pub fn pointwise_loglik_at(&self, x: &[f64]) -> Vec<f64> {
        match &self.model {
            Model::Univariate(m) => m.pointwise_loglik(x),
            Model::Multivariate(m) => m.pointwise_loglik(x),
        }
    }

    pub fn n_correlations(&self) -> usize {
        match &self.model {
            Model::Multivariate(m) => n_correlations(m.k()),
            Model::Univariate(_) => 0,
        }
    }
}

/// Pointwise log-likelihood matrix `[draw][observed area]` for unconstrained draws of `model`.
pub fn pointwise_loglik(model: &BuiltModel, draws: &PosteriorDraws) -> Result<Vec<Vec<f64>>, ModelError> {
    if draws.dim() != model.model.dim() {
        return Err(ModelError::FamilyMismatch(format!(
            "draws have {} coordinates, the {} model has {}",
            draws.dim(),
            model.family,
            model.model.dim()
        )));
    }
    Ok(draws.iter().map(|d| model.pointwise_loglik_at(d)).collect())
}
