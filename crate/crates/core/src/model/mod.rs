//! Area-level hierarchical models as log-posterior densities on unconstrained parameters.

pub mod correlation;
pub mod multivariate;
pub mod priors;
pub mod spec;
pub mod univariate;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

pub use correlation::build_correlation;
pub use multivariate::{MultivariateData, MultivariateModel};
pub use priors::{CorrelationPrior, Priors};
pub use univariate::{SamplingVariance, UnivariateData, UnivariateModel};

/// A differentiable log density over `R^dim`.
///
/// `logp_grad` overwrites `grad` and returns the log density, which may be `-inf`
/// (the gradient is then unspecified).
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl<T: LogDensity + ?Sized> LogDensity for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (**self).logp_grad(x, grad)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogDensityResult {
    pub value: f64,
    pub gradient: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "FH")]
    Fh,
    #[serde(rename = "NL")]
    Nl,
    #[serde(rename = "NL_RS")]
    NlRs,
    #[serde(rename = "NL_PLUGIN")]
    NlPlugin,
    #[serde(rename = "MV_LOGIT")]
    MvLogit,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Fh => "FH",
            Family::Nl => "NL",
            Family::NlRs => "NL_RS",
            Family::NlPlugin => "NL_PLUGIN",
            Family::MvLogit => "MV_LOGIT",
        }
    }

    pub fn is_univariate(&self) -> bool {
        !matches!(self, Family::MvLogit)
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Evaluates `target` at `params`, rejecting non-finite input.
pub fn evaluate(target: &impl LogDensity, params: &[f64]) -> Result<LogDensityResult, ModelError> {
    if params.len() != target.dim() {
        return Err(ModelError::ParameterLength { expected: target.dim(), got: params.len() });
    }
    if params.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::InvalidParameterPoint);
    }
    let mut gradient = vec![0.0; params.len()];
    let value = target.logp_grad(params, &mut gradient);
    if value.is_nan() {
        return Err(ModelError::InvalidParameterPoint);
    }
    Ok(LogDensityResult { value, gradient })
}

fn expect_family(model: Family, wanted: Family) -> Result<(), ModelError> {
    if model == wanted {
        Ok(())
    } else {
        Err(ModelError::FamilyMismatch(format!("model is {model}, expected {wanted}")))
    }
}

pub fn logpost_fh(model: &UnivariateModel, params: &[f64]) -> Result<LogDensityResult, ModelError> {
    expect_family(model.family(), Family::Fh)?;
    evaluate(model, params)
}

pub fn logpost_nl(model: &UnivariateModel, params: &[f64]) -> Result<LogDensityResult, ModelError> {
    expect_family(model.family(), Family::Nl)?;
    evaluate(model, params)
}

pub fn logpost_nl_rs(model: &UnivariateModel, params: &[f64]) -> Result<LogDensityResult, ModelError> {
    expect_family(model.family(), Family::NlRs)?;
    evaluate(model, params)
}

pub fn logpost_nl_plugin(model: &UnivariateModel, params: &[f64]) -> Result<LogDensityResult, ModelError> {
    expect_family(model.family(), Family::NlPlugin)?;
    evaluate(model, params)
}

pub fn logpost_mv_logit(model: &MultivariateModel, params: &[f64]) -> Result<LogDensityResult, ModelError> {
    evaluate(model, params)
}
