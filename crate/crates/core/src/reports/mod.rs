//! Posterior summaries, contribution shares, sampling SDs and district aggregates.
//!
//! Quantiles use linear interpolation between order statistics (type 7).

pub mod geojson;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::diagnose;
use crate::error::{ReportError, SurveyError};
use crate::math::{inv_logit, mean, quantile_type7, sample_variance};
use crate::model::Family;
use crate::survey_design::{direct_proportion, DirectEstimate, PersonRecord};

pub const QUANTILE_METHOD: &str = "type7";
pub const DEFAULT_PROBS: [f64; 7] = [0.025, 0.15, 0.16, 0.5, 0.84, 0.85, 0.975];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Identity,
    InvLogit,
}

impl Transform {
    fn apply(&self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::InvLogit => inv_logit(x),
        }
    }
}

/// Posterior summary of one scalar quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaEstimate {
    pub name: String,
    pub mean: f64,
    /// Monte Carlo standard error of the mean.
    pub se_mean: f64,
    pub sd: f64,
    /// `(probability, value)` pairs in increasing probability.
    pub quantiles: Vec<(f64, f64)>,
    pub n_eff: f64,
    pub rhat: f64,
}

impl AreaEstimate {
    /// The quantile at probability `p` (must be one of the summarized probabilities).
    pub fn q(&self, p: f64) -> f64 {
        self.quantiles
            .iter()
            .find(|(pp, _)| (pp - p).abs() < 1e-12)
            .map(|(_, v)| *v)
            .unwrap_or(f64::NAN)
    }
}

/// Summary of `chains[chain][iter]` after applying `transform` to every draw.
pub fn summarize_chains(name: &str, chains: &[Vec<f64>], transform: Transform, probs: &[f64]) -> Result<AreaEstimate, ReportError> {
    let chains: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|&v| transform.apply(v)).collect()).collect();
    let mut all: Vec<f64> = chains.iter().flatten().copied().collect();
    if all.is_empty() {
        return Err(ReportError::EmptyDraws);
    }
    let diag = diagnose(&chains).map_err(|e| ReportError::Shape(format!("{name}: {e}")))?;
    all.sort_by(f64::total_cmp);
    let quantiles = probs.iter().map(|&p| (p, quantile_type7(&all, p))).collect();
    Ok(AreaEstimate {
        name: name.to_string(),
        mean: diag.mean,
        se_mean: diag.mcse,
        sd: diag.sd,
        quantiles,
        n_eff: diag.ess,
        rhat: diag.rhat,
    })
}

/// Summaries for every parameter of `draws[chain][iter][param]`, in parallel.
pub fn summarize(names: &[String], draws: &[Vec<Vec<f64>>], transform: Transform) -> Result<Vec<AreaEstimate>, ReportError> {
    if draws.iter().all(|c| c.is_empty()) {
        return Err(ReportError::EmptyDraws);
    }
    names
        .par_iter()
        .enumerate()
        .map(|(j, name)| {
            let chains: Vec<Vec<f64>> = draws.iter().map(|c| c.iter().map(|d| d[j]).collect()).collect();
            summarize_chains(name, &chains, transform, &DEFAULT_PROBS)
        })
        .collect()
}

/// Shares `θ_k / Σθ` of one draw for one area.
pub fn eta(theta: &[f64], area: usize) -> Result<Vec<f64>, ReportError> {
    if theta.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(ReportError::InvalidThetaDraw(area));
    }
    let total: f64 = theta.iter().sum();
    Ok(theta.iter().map(|t| t / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionEstimate {
    pub area_id: String,
    pub shares: Vec<f64>,
    pub share_se: Vec<f64>,
    /// `(2.5%, 97.5%)` per dimension.
    pub share_intervals: Vec<(f64, f64)>,
}

/// Contribution shares from `theta[draw][area][k]`.
pub fn contributions(area_ids: &[String], theta: &[Vec<Vec<f64>>]) -> Result<Vec<ContributionEstimate>, ReportError> {
    if theta.is_empty() {
        return Err(ReportError::EmptyDraws);
    }
    (0..area_ids.len())
        .into_par_iter()
        .map(|i| {
            let k = theta[0][i].len();
            let mut per_dim: Vec<Vec<f64>> = vec![Vec::with_capacity(theta.len()); k];
            for draw in theta {
                for (slot, v) in per_dim.iter_mut().zip(eta(&draw[i], i)?) {
                    slot.push(v);
                }
            }
            let mut shares = Vec::with_capacity(k);
            let mut share_se = Vec::with_capacity(k);
            let mut share_intervals = Vec::with_capacity(k);
            for mut v in per_dim {
                shares.push(mean(&v));
                share_se.push(sample_variance(&v).sqrt());
                v.sort_by(f64::total_cmp);
                share_intervals.push((quantile_type7(&v, 0.025), quantile_type7(&v, 0.975)));
            }
            Ok(ContributionEstimate { area_id: area_ids[i].clone(), shares, share_se, share_intervals })
        })
        .collect()
}

/// Posterior of `√(π_i(1-π_i)·DEFF/ñ_i)` from NL_rs draws of `π_i` (`pi[chain][iter]`).
pub fn sampling_sd_posterior(
    family: Family,
    area_id: &str,
    pi: &[Vec<f64>],
    n_adjusted: f64,
    deff: f64,
) -> Result<AreaEstimate, ReportError> {
    if family != Family::NlRs {
        return Err(ReportError::FamilyMismatch(format!("sampling SDs need NL_RS draws, got {family}")));
    }
    let sd: Vec<Vec<f64>> = pi.iter().map(|c| c.iter().map(|&p| (p * (1.0 - p) * deff / n_adjusted).sqrt()).collect()).collect();
    summarize_chains(area_id, &sd, Transform::Identity, &DEFAULT_PROBS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistrictEstimate {
    pub district_id: String,
    pub estimate: f64,
    pub se: f64,
    /// 2.5%, 16%, 84% and 97.5% quantiles.
    pub intervals: [f64; 4],
    pub direct: f64,
    pub bm_ratio: f64,
}

/// Population-weighted district proportions per draw, summarized, with benchmarking ratios
/// against the district direct estimates. `draws[draw][area]` follows `area_ids`.
pub fn district_aggregate(
    area_ids: &[String],
    draws: &[Vec<f64>],
    populations: &HashMap<String, f64>,
    district_map: &[(String, String)],
    district_direct: &HashMap<String, f64>,
) -> Result<Vec<DistrictEstimate>, ReportError> {
    if draws.is_empty() {
        return Err(ReportError::EmptyDraws);
    }
    let mapping: HashMap<&str, &str> = district_map.iter().map(|(a, d)| (a.as_str(), d.as_str())).collect();
    let mut districts: Vec<&str> = Vec::new();
    let mut members: HashMap<&str, Vec<(usize, f64)>> = HashMap::new();
    for (i, area) in area_ids.iter().enumerate() {
        let d = *mapping.get(area.as_str()).ok_or_else(|| ReportError::UnmappedArea(area.clone()))?;
        let n = *populations.get(area).ok_or_else(|| ReportError::MissingPopulation(area.clone()))?;
        if !(n > 0.0 && n.is_finite()) {
            return Err(ReportError::NonPositivePopulation(area.clone()));
        }
        if !members.contains_key(d) {
            districts.push(d);
        }
        members.entry(d).or_default().push((i, n));
    }
    districts
        .iter()
        .map(|&d| {
            let m = &members[d];
            let total: f64 = m.iter().map(|(_, n)| n).sum();
            let mut values: Vec<f64> = draws.iter().map(|row| m.iter().map(|&(i, n)| n * row[i]).sum::<f64>() / total).collect();
            let direct = *district_direct.get(d).ok_or_else(|| ReportError::MissingDistrictDirect(d.to_string()))?;
            let estimate = mean(&values);
            let se = sample_variance(&values).sqrt();
            values.sort_by(f64::total_cmp);
            let intervals = [0.025, 0.16, 0.84, 0.975].map(|p| quantile_type7(&values, p));
            Ok(DistrictEstimate { district_id: d.to_string(), estimate, se, intervals, direct, bm_ratio: estimate / direct })
        })
        .collect()
}

/// Direct estimates for districts, pooling the person records of their areas.
pub fn district_direct(
    records: &[PersonRecord],
    district_map: &[(String, String)],
) -> Result<Vec<(String, DirectEstimate)>, SurveyError> {
    let mapping: HashMap<&str, &str> = district_map.iter().map(|(a, d)| (a.as_str(), d.as_str())).collect();
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<PersonRecord>> = HashMap::new();
    for r in records {
        let Some(&d) = mapping.get(r.area_id.as_str()) else { continue };
        let group = groups.entry(d).or_insert_with(|| {
            order.push(d);
            Vec::new()
        });
        let mut copy = r.clone();
        // PSU ids are unique within an area only.
        copy.psu_id = format!("{}\u{1f}{}", r.area_id, r.psu_id);
        copy.area_id = d.to_string();
        group.push(copy);
    }
    order
        .into_iter()
        .map(|d| Ok((d.to_string(), direct_proportion(&groups[d])?)))
        .collect()
}
