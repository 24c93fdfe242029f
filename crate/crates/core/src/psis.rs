//! Pareto-smoothed importance sampling leave-one-out cross-validation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::LooError;
use crate::math::{log_sum_exp, sample_variance};

/// Pareto-k above which an observation's LOO estimate is flagged as unreliable.
pub const PARETO_K_WARN: f64 = 0.7;

pub const MIN_DRAWS: usize = 50;

/// Generalized Pareto fit `(k, σ)` to positive exceedances sorted ascending, using the
/// profile-posterior grid estimator with a weakly informative prior, followed by the
/// usual shrinkage of `k` towards 0.5.
pub fn gpdfit(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let prior = 3.0;
    let m = 30 + (n as f64).sqrt() as usize;
    let quartile = x[((n as f64) / 4.0 + 0.5).floor() as usize - 1];
    let x_max = x[n - 1];
    let theta: Vec<f64> = (1..=m)
        .map(|j| 1.0 / x_max + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / prior / quartile)
        .collect();
    let profile = |t: f64| {
        let a = -t;
        let k = x.iter().map(|&xi| (a * xi).ln_1p()).sum::<f64>() / n as f64;
        n as f64 * ((a / k).ln() - k - 1.0)
    };
    let l_theta: Vec<f64> = theta.iter().map(|&t| profile(t)).collect();
    let norm = log_sum_exp(&l_theta);
    let theta_hat: f64 = theta.iter().zip(&l_theta).map(|(t, l)| t * (l - norm).exp()).sum();
    let k = x.iter().map(|&xi| (-theta_hat * xi).ln_1p()).sum::<f64>() / n as f64;
    let sigma = -k / theta_hat;
    let nf = n as f64;
    let k = k * nf / (nf + 10.0) + 10.0 * 0.5 / (nf + 10.0);
    (if k.is_nan() { f64::INFINITY } else { k }, sigma)
}

/// Generalized Pareto quantile function.
pub fn qgpd(p: f64, k: f64, sigma: f64) -> f64 {
    if k.abs() < 1e-12 {
        -sigma * (-p).ln_1p()
    } else {
        sigma * (-k * (-p).ln_1p()).exp_m1() / k
    }
}

/// Smoothed, normalized log importance weights and the fitted Pareto shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedWeights {
    pub log_weights: Vec<f64>,
    pub pareto_k: f64,
}

impl SmoothedWeights {
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }
}

/// Replaces the largest `M = ceil(min(0.2R, 3√R))` log ratios by expected order statistics
/// of a generalized Pareto fitted to the tail, truncated at the raw maximum.
pub fn psis_smooth(log_ratios: &[f64]) -> Result<SmoothedWeights, LooError> {
    let r = log_ratios.len();
    if r < MIN_DRAWS {
        return Err(LooError::TooFewDraws(r));
    }
    if log_ratios.iter().any(|v| !v.is_finite()) {
        return Err(LooError::NonFinite);
    }
    let max = log_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lw: Vec<f64> = log_ratios.iter().map(|v| v - max).collect();

    let rf = r as f64;
    let tail_len = (0.2 * rf).min(3.0 * rf.sqrt()).ceil() as usize;
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| lw[a].total_cmp(&lw[b]).then(a.cmp(&b)));
    let cutoff = lw[order[r - tail_len - 1]];
    let tail = &order[r - tail_len..];

    let mut k = 0.0;
    if lw[tail[tail_len - 1]] > cutoff && tail_len >= 5 {
        let exp_cutoff = cutoff.exp();
        let x: Vec<f64> = tail.iter().map(|&i| lw[i].exp() - exp_cutoff).collect();
        let (k_hat, sigma) = gpdfit(&x);
        k = k_hat;
        if k.is_finite() {
            for (j, &i) in tail.iter().enumerate() {
                let p = (j as f64 + 0.5) / tail_len as f64;
                lw[i] = (qgpd(p, k, sigma) + exp_cutoff).ln().min(0.0);
            }
        }
    }
    let norm = log_sum_exp(&lw);
    if !norm.is_finite() {
        return Err(LooError::Numerical);
    }
    lw.iter_mut().for_each(|v| *v -= norm);
    Ok(SmoothedWeights { log_weights: lw, pareto_k: k })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooResult {
    pub elpd_loo: f64,
    pub se_elpd: f64,
    pub pointwise_elpd: Vec<f64>,
    pub pareto_k: Vec<f64>,
    /// In-sample log pointwise predictive density, per observation.
    pub pointwise_lppd: Vec<f64>,
    pub p_loo: f64,
}

impl LooResult {
    pub fn n_high_k(&self) -> usize {
        self.pareto_k.iter().filter(|&&k| k > PARETO_K_WARN).count()
    }
}

/// PSIS-LOO from a pointwise log-likelihood matrix `loglik[draw][observation]`.
pub fn elpd_loo(loglik: &[Vec<f64>]) -> Result<LooResult, LooError> {
    let r = loglik.len();
    if r < MIN_DRAWS {
        return Err(LooError::TooFewDraws(r));
    }
    let m = loglik[0].len();
    if m == 0 {
        return Err(LooError::Empty);
    }
    if loglik.iter().any(|row| row.len() != m) {
        return Err(LooError::MismatchedObservations(m, loglik.iter().map(|row| row.len()).find(|&l| l != m).unwrap_or(m)));
    }
    let per_obs: Vec<Result<(f64, f64, f64), LooError>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let ll: Vec<f64> = loglik.iter().map(|row| row[i]).collect();
            let neg: Vec<f64> = ll.iter().map(|v| -v).collect();
            let sw = psis_smooth(&neg)?;
            let terms: Vec<f64> = sw.log_weights.iter().zip(&ll).map(|(w, l)| w + l).collect();
            let elpd = log_sum_exp(&terms);
            let lppd = log_sum_exp(&ll) - (r as f64).ln();
            if !elpd.is_finite() {
                return Err(LooError::Numerical);
            }
            Ok((elpd, sw.pareto_k, lppd))
        })
        .collect();
    let mut pointwise_elpd = Vec::with_capacity(m);
    let mut pareto_k = Vec::with_capacity(m);
    let mut pointwise_lppd = Vec::with_capacity(m);
    for res in per_obs {
        let (e, k, l) = res?;
        pointwise_elpd.push(e);
        pareto_k.push(k);
        pointwise_lppd.push(l);
    }
    let elpd: f64 = pointwise_elpd.iter().sum();
    let se = (m as f64 * sample_variance(&pointwise_elpd)).sqrt();
    let p_loo = pointwise_lppd.iter().sum::<f64>() - elpd;
    Ok(LooResult { elpd_loo: elpd, se_elpd: se, pointwise_elpd, pareto_k, pointwise_lppd, p_loo })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub model: String,
    pub elpd_diff: f64,
    pub se_diff: f64,
    pub elpd_loo: f64,
    pub se_elpd: f64,
}

/// Ranks models by `elpd_loo` (ties broken by name) relative to the best one.
pub fn compare(results: &[(String, LooResult)]) -> Result<Vec<CompareRow>, LooError> {
    if results.is_empty() {
        return Err(LooError::Empty);
    }
    let m = results[0].1.pointwise_elpd.len();
    if let Some((_, other)) = results.iter().find(|(_, r)| r.pointwise_elpd.len() != m) {
        return Err(LooError::MismatchedObservations(m, other.pointwise_elpd.len()));
    }
    let mut order: Vec<&(String, LooResult)> = results.iter().collect();
    order.sort_by(|a, b| b.1.elpd_loo.total_cmp(&a.1.elpd_loo).then_with(|| a.0.cmp(&b.0)));
    let best = &order[0].1;
    Ok(order
        .iter()
        .map(|(name, res)| {
            let diff: Vec<f64> = res.pointwise_elpd.iter().zip(&best.pointwise_elpd).map(|(a, b)| a - b).collect();
            CompareRow {
                model: name.clone(),
                elpd_diff: diff.iter().sum(),
                se_diff: (m as f64 * sample_variance(&diff)).sqrt(),
                elpd_loo: res.elpd_loo,
                se_elpd: res.se_elpd,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_ratios_are_uniform_with_zero_k() {
        let sw = psis_smooth(&vec![0.3; 100]).unwrap();
        assert_eq!(sw.pareto_k, 0.0);
        for w in sw.weights() {
            assert!((w - 0.01).abs() < 1e-15);
        }
    }

    #[test]
    fn gpd_quantile_limits() {
        assert!((qgpd(0.5, 0.0, 1.0) - 2f64.ln()).abs() < 1e-15);
        // k = 0.5, σ = 1: Q(p) = ((1-p)^{-1/2} - 1) / 0.5
        assert!((qgpd(0.75, 0.5, 1.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_draws() {
        assert_eq!(psis_smooth(&[0.0; 10]), Err(LooError::TooFewDraws(10)));
    }
}
