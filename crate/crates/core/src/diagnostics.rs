//! Split R-hat, multi-chain effective sample size and Monte Carlo standard errors.

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::DiagnosticsError;
use crate::math::{mean, sample_variance};

/// Name recorded in output metadata for the R-hat variant computed here.
pub const RHAT_METHOD: &str = "split";

fn check(chains: &[Vec<f64>]) -> Result<usize, DiagnosticsError> {
    if chains.len() < 2 {
        return Err(DiagnosticsError::TooFewChains { needed: 2, got: chains.len() });
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(DiagnosticsError::RaggedChains);
    }
    if n < 4 {
        return Err(DiagnosticsError::TooFewDraws(n));
    }
    if chains.iter().flatten().any(|v| !v.is_finite()) {
        return Err(DiagnosticsError::NonFinite);
    }
    Ok(n)
}

/// Each chain cut into its first and second half (the middle draw of odd chains is dropped).
fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let half = chains[0].len() / 2;
    let offset = chains[0].len() - half;
    chains
        .iter()
        .flat_map(|c| [c[..half].to_vec(), c[offset..].to_vec()])
        .collect()
}

/// Split-chain potential scale reduction factor.
pub fn rhat(chains: &[Vec<f64>]) -> Result<f64, DiagnosticsError> {
    check(chains)?;
    let halves = split(chains);
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let within = mean(&halves.iter().map(|c| sample_variance(c)).collect::<Vec<_>>());
    if !(within > 0.0) {
        return Err(DiagnosticsError::Degenerate);
    }
    let between = n * sample_variance(&means);
    let var_plus = (n - 1.0) / n * within + between / n;
    Ok((var_plus / within).sqrt())
}

/// Biased (`1/n`) autocovariances of one chain at every lag, via FFT.
fn autocovariance(x: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v - m, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    planner.plan_fft_forward(len).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf[..n].iter().map(|c| c.re / len as f64 / n as f64).collect()
}

/// Effective sample size from split chains with Geyer's initial positive and
/// monotone sequence truncation, capped at twice the number of draws.
pub fn ess(chains: &[Vec<f64>]) -> Result<f64, DiagnosticsError> {
    check(chains)?;
    let halves = split(chains);
    let n = halves[0].len();
    let n_chains = halves.len() as f64;
    let mut planner = FftPlanner::new();
    let acov: Vec<Vec<f64>> = halves.iter().map(|c| autocovariance(c, &mut planner)).collect();
    let means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let nf = n as f64;
    let mean_var = acov.iter().map(|a| a[0] * nf / (nf - 1.0)).sum::<f64>() / n_chains;
    if !(mean_var > 0.0) {
        return Err(DiagnosticsError::Degenerate);
    }
    let var_plus = mean_var * (nf - 1.0) / nf + sample_variance(&means);
    let acov_mean = |t: usize| acov.iter().map(|a| a[t]).sum::<f64>() / n_chains;
    let rho_at = |t: usize| 1.0 - (mean_var - acov_mean(t)) / var_plus;

    let mut rho = vec![0.0; n + 2];
    let mut rho_even = 1.0;
    rho[0] = rho_even;
    let mut rho_odd = rho_at(1);
    rho[1] = rho_odd;
    let mut s = 1;
    while s + 4 < n && rho_even + rho_odd > 0.0 {
        rho_even = rho_at(s + 1);
        rho_odd = rho_at(s + 2);
        if rho_even + rho_odd >= 0.0 {
            rho[s + 1] = rho_even;
            rho[s + 2] = rho_odd;
        }
        s += 2;
    }
    let max_s = s;
    if rho_even > 0.0 {
        rho[max_s + 1] = rho_even;
    }
    let mut t = 1;
    while t + 3 <= max_s {
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t] {
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0;
            rho[t + 2] = rho[t + 1];
        }
        t += 2;
    }
    let total = n_chains * nf;
    let tau = -1.0 + 2.0 * rho[..max_s].iter().sum::<f64>() + rho[max_s + 1];
    Ok((total / tau).min(2.0 * total))
}

/// Per-parameter summary of convergence and efficiency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDiagnostics {
    pub mean: f64,
    pub sd: f64,
    /// `NaN` when undefined (degenerate or too few chains).
    pub rhat: f64,
    pub ess: f64,
    pub mcse: f64,
}

/// Diagnostics for one parameter. Undefined values are reported as `NaN` rather than errors,
/// except for ragged or non-finite input.
pub fn diagnose(chains: &[Vec<f64>]) -> Result<ParameterDiagnostics, DiagnosticsError> {
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    if all.is_empty() {
        return Err(DiagnosticsError::TooFewDraws(0));
    }
    if all.iter().any(|v| !v.is_finite()) {
        return Err(DiagnosticsError::NonFinite);
    }
    if chains.iter().any(|c| c.len() != chains[0].len()) {
        return Err(DiagnosticsError::RaggedChains);
    }
    let sd = sample_variance(&all).sqrt();
    let soft = |r: Result<f64, DiagnosticsError>| match r {
        Ok(v) => Ok(v),
        Err(DiagnosticsError::Degenerate | DiagnosticsError::TooFewChains { .. } | DiagnosticsError::TooFewDraws(_)) => Ok(f64::NAN),
        Err(e) => Err(e),
    };
    let rhat = soft(rhat(chains))?;
    let ess = soft(ess(chains))?;
    Ok(ParameterDiagnostics { mean: mean(&all), sd, rhat, ess, mcse: sd / ess.sqrt() })
}

/// Diagnostics for every column of `draws[chain][iter][param]`, in parallel over parameters.
pub fn diagnose_all(draws: &[Vec<Vec<f64>>]) -> Result<Vec<ParameterDiagnostics>, DiagnosticsError> {
    let dim = draws.first().and_then(|c| c.first()).map_or(0, |d| d.len());
    (0..dim)
        .into_par_iter()
        .map(|j| {
            let chains: Vec<Vec<f64>> = draws.iter().map(|c| c.iter().map(|d| d[j]).collect()).collect();
            diagnose(&chains)
        })
        .collect()
}
