//! Design-based quantities computed from person-level survey records.
//!
//! Variances use the with-replacement ultimate-cluster estimator on PSU totals of the
//! linearized weighted ratio. Within one area the PSUs form a single stratum; for the
//! whole-sample design effects each area is its own stratum.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::SurveyError;
use crate::linalg::clip_to_positive_definite;

/// Relative eigenvalue floor used when a smoothed covariance has to be repaired.
pub const PD_REPAIR_FLOOR: f64 = 1e-8;

/// One survey respondent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonRecord {
    pub area_id: String,
    pub psu_id: String,
    pub household_id: String,
    pub person_id: String,
    pub weight: f64,
    pub poor: bool,
    /// Dimensional scores; `None` when the record carries none.
    pub scores: Option<Vec<f64>>,
}

impl PersonRecord {
    fn score(&self, k: usize) -> Option<f64> {
        self.scores.as_ref().and_then(|s| s.get(k).copied())
    }
}

/// Which per-person variable a design effect is computed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variable {
    Poor,
    Score(usize),
    /// `score_a + score_b`, used to smooth covariances.
    ScoreSum(usize, usize),
}

impl Variable {
    fn value(&self, r: &PersonRecord) -> Option<f64> {
        match *self {
            Variable::Poor => Some(if r.poor { 1.0 } else { 0.0 }),
            Variable::Score(k) => r.score(k),
            Variable::ScoreSum(a, b) => Some(r.score(a)? + r.score(b)?),
        }
    }

    fn is_score(&self) -> bool {
        !matches!(self, Variable::Poor)
    }
}

/// Direct estimate of an area proportion with its design standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectEstimate {
    pub estimate: f64,
    pub se: f64,
    /// Set when the area has a single PSU and the variance cannot be estimated.
    pub degenerate: bool,
    pub n_psu: usize,
}

/// Per-area design summary consumed by the area-level models.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaDesignSummary {
    pub area_id: String,
    pub n_households: usize,
    pub n_adjusted: f64,
    pub z_direct: f64,
    pub z_direct_se: f64,
    pub se_degenerate: bool,
    pub d_smoothed: f64,
    /// Adjusted size over the area's poor households (basis of `sigma_hat`).
    pub n_poor_adjusted: Option<f64>,
    pub y_direct: Option<Vec<f64>>,
    pub sigma_hat: Option<DMatrix<f64>>,
}

/// Whole-sample pooled quantities reused by every area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignEffects {
    pub deff_poverty: f64,
    pub pooled_p: f64,
    /// Number of score dimensions covered by the fields below (0 when unavailable).
    pub k: usize,
    pub deff_dims: Vec<f64>,
    pub pooled_s: Vec<f64>,
    /// Pooled variance of `score_a + score_b` (row-major K×K, diagonal = variance of `2·score_k`).
    pub pooled_s_pairs: Vec<Vec<f64>>,
    /// Design effect of `score_a + score_b` (diagonal = `deff_dims`).
    pub deff_pairs: Vec<Vec<f64>>,
    pub n_poor: usize,
}

/// Checks the record-level invariants.
pub fn validate_records(records: &[PersonRecord]) -> Result<(), SurveyError> {
    let mut household_status: HashMap<(&str, &str), bool> = HashMap::new();
    for r in records {
        if !(r.weight > 0.0 && r.weight.is_finite()) {
            return Err(SurveyError::InvalidWeight(r.person_id.clone()));
        }
        let key = (r.area_id.as_str(), r.household_id.as_str());
        match household_status.get(&key) {
            Some(&status) if status != r.poor => {
                return Err(SurveyError::InconsistentHousehold(r.household_id.clone()))
            }
            Some(_) => {}
            None => {
                household_status.insert(key, r.poor);
            }
        }
        if let Some(scores) = &r.scores {
            if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
                return Err(SurveyError::ScoreOutOfRange(r.person_id.clone()));
            }
            if !r.poor && scores.iter().any(|&s| s != 0.0) {
                return Err(SurveyError::NonZeroScoreForNonPoor(r.person_id.clone()));
            }
        }
    }
    Ok(())
}

struct ClusterVariance {
    mean: f64,
    variance: f64,
    n_psu: usize,
    /// Number of strata contributing a variance term (two or more PSUs).
    informative_strata: usize,
}

/// Ultimate-cluster variance of the weighted mean `Σ w y / Σ w`.
/// Units are `(stratum, psu, weight, value)`; PSU keys are local to their stratum.
fn ultimate_cluster(units: &[(&str, &str, f64, f64)]) -> ClusterVariance {
    let total_w: f64 = units.iter().map(|u| u.2).sum();
    let mean = units.iter().map(|u| u.2 * u.3).sum::<f64>() / total_w;

    // stratum -> psu -> linearized total, in first-appearance order
    let mut strata: Vec<(&str, Vec<(&str, f64)>)> = Vec::new();
    let mut stratum_index: HashMap<&str, usize> = HashMap::new();
    for &(stratum, psu, w, y) in units {
        let u = w * (y - mean) / total_w;
        let si = *stratum_index.entry(stratum).or_insert_with(|| {
            strata.push((stratum, Vec::new()));
            strata.len() - 1
        });
        let psus = &mut strata[si].1;
        match psus.iter_mut().find(|(p, _)| *p == psu) {
            Some(slot) => slot.1 += u,
            None => psus.push((psu, u)),
        }
    }

    let mut variance = 0.0;
    let mut n_psu = 0;
    let mut informative_strata = 0;
    for (_, psus) in &strata {
        let n_h = psus.len();
        n_psu += n_h;
        if n_h < 2 {
            continue;
        }
        informative_strata += 1;
        let mean_h = psus.iter().map(|p| p.1).sum::<f64>() / n_h as f64;
        let ss: f64 = psus.iter().map(|p| (p.1 - mean_h).powi(2)).sum();
        variance += n_h as f64 / (n_h - 1) as f64 * ss;
    }
    ClusterVariance { mean, variance, n_psu, informative_strata }
}

fn check_single_area(records: &[PersonRecord]) -> Result<(), SurveyError> {
    let first = records.first().ok_or(SurveyError::EmptyArea)?;
    if let Some(other) = records.iter().find(|r| r.area_id != first.area_id) {
        return Err(SurveyError::MixedAreas(first.area_id.clone(), other.area_id.clone()));
    }
    if let Some(bad) = records.iter().find(|r| !(r.weight > 0.0 && r.weight.is_finite())) {
        return Err(SurveyError::InvalidWeight(bad.person_id.clone()));
    }
    Ok(())
}

/// Survey-weighted proportion of poor persons in one area and its ultimate-cluster SE.
pub fn direct_proportion(records: &[PersonRecord]) -> Result<DirectEstimate, SurveyError> {
    check_single_area(records)?;
    let units: Vec<_> = records
        .iter()
        .map(|r| ("", r.psu_id.as_str(), r.weight, if r.poor { 1.0 } else { 0.0 }))
        .collect();
    let cv = ultimate_cluster(&units);
    let degenerate = cv.n_psu < 2;
    let se = if degenerate { 0.0 } else { cv.variance.max(0.0).sqrt() };
    Ok(DirectEstimate { estimate: cv.mean.clamp(0.0, 1.0), se, degenerate, n_psu: cv.n_psu })
}

/// `(Σ m_h)² / Σ m_h²` for household sizes `m_h`.
pub fn adjusted_sample_size(household_sizes: &[usize]) -> Result<f64, SurveyError> {
    if household_sizes.is_empty() {
        return Err(SurveyError::NoHouseholds);
    }
    if household_sizes.contains(&0) {
        return Err(SurveyError::InvalidHouseholdSize);
    }
    let total: f64 = household_sizes.iter().map(|&m| m as f64).sum();
    let squares: f64 = household_sizes.iter().map(|&m| (m as f64) * (m as f64)).sum();
    Ok(total * total / squares)
}

/// Number of listed persons per household, households keyed by `(area, household)`,
/// in first-appearance order.
pub fn household_sizes<'a>(records: impl IntoIterator<Item = &'a PersonRecord>) -> Vec<usize> {
    let mut index: HashMap<(&str, &str), usize> = HashMap::new();
    let mut sizes = Vec::new();
    for r in records {
        let key = (r.area_id.as_str(), r.household_id.as_str());
        match index.get(&key) {
            Some(&i) => sizes[i] += 1,
            None => {
                index.insert(key, sizes.len());
                sizes.push(1);
            }
        }
    }
    sizes
}

/// Design effect of the overall weighted mean of `variable`.
///
/// The design variance is the area-stratified ultimate-cluster variance; the SRS variance
/// is `p(1-p)/Ñ` for the poverty indicator and `s²/Ñ` for score variables, where `Ñ` is the
/// adjusted person count over the contributing households. Score variables are computed
/// over poor respondents only.
pub fn design_effect(records: &[PersonRecord], variable: Variable) -> Result<f64, SurveyError> {
    let subset: Vec<(&PersonRecord, f64)> = records
        .iter()
        .filter(|r| !variable.is_score() || r.poor)
        .filter_map(|r| variable.value(r).map(|v| (r, v)))
        .collect();
    if variable.is_score() && subset.len() < 2 {
        return Err(SurveyError::InsufficientPooling(subset.len()));
    }
    if let Some((bad, _)) = subset.iter().find(|(r, _)| !(r.weight > 0.0 && r.weight.is_finite())) {
        return Err(SurveyError::InvalidWeight(bad.person_id.clone()));
    }
    // PSU ids are only unique within an area, so the area doubles as stratum and PSU scope.
    let units: Vec<_> = subset
        .iter()
        .map(|(r, v)| (r.area_id.as_str(), r.psu_id.as_str(), r.weight, *v))
        .collect();
    let cv = ultimate_cluster(&units);
    if cv.n_psu < 2 || cv.informative_strata == 0 {
        return Err(SurveyError::TooFewPsus(cv.n_psu));
    }
    let n_adj = adjusted_sample_size(&household_sizes(subset.iter().map(|(r, _)| *r)))?;
    let srs_unit_variance = match variable {
        Variable::Poor => cv.mean * (1.0 - cv.mean),
        _ => {
            let values: Vec<f64> = subset.iter().map(|(_, v)| *v).collect();
            crate::math::sample_variance(&values)
        }
    };
    if !(srs_unit_variance > 0.0) {
        return Err(SurveyError::DegenerateVariable);
    }
    let deff = cv.variance / (srs_unit_variance / n_adj);
    if !(deff > 0.0) {
        return Err(SurveyError::DegenerateVariable);
    }
    Ok(deff)
}

/// Smoothed sampling variance `p̄(1-p̄)·DEFF / ñ`.
pub fn smoothed_variance(n_adjusted: f64, deff: f64, pooled_p: f64) -> Result<f64, SurveyError> {
    if !(n_adjusted > 0.0 && n_adjusted.is_finite()) {
        return Err(SurveyError::NonPositive("adjusted sample size"));
    }
    if !(deff > 0.0 && deff.is_finite()) {
        return Err(SurveyError::NonPositive("design effect"));
    }
    if !(pooled_p > 0.0 && pooled_p < 1.0) {
        return Err(SurveyError::PooledProportionOutOfRange(pooled_p));
    }
    Ok(pooled_p * (1.0 - pooled_p) * deff / n_adjusted)
}

/// Survey-weighted mean scores over the poor respondents among `records`
/// (weights renormalized over poor respondents). `None` when there are none,
/// or when a poor respondent carries no scores.
pub fn dimensional_direct(records: &[PersonRecord]) -> Option<Vec<f64>> {
    let poor: Vec<&PersonRecord> = records.iter().filter(|r| r.poor).collect();
    if poor.is_empty() {
        return None;
    }
    let k = poor[0].scores.as_ref()?.len();
    if k == 0 || poor.iter().any(|r| r.scores.as_ref().map(|s| s.len()) != Some(k)) {
        return None;
    }
    let total_w: f64 = poor.iter().map(|r| r.weight).sum();
    Some(
        (0..k)
            .map(|j| poor.iter().map(|r| r.weight * r.scores.as_ref().unwrap()[j]).sum::<f64>() / total_w)
            .collect(),
    )
}

/// Unweighted pooled variance (`P - 1` denominator) of `variable` over poor respondents.
pub fn pooled_variance(records: &[PersonRecord], variable: Variable) -> Result<f64, SurveyError> {
    let values: Vec<f64> = records.iter().filter(|r| r.poor).filter_map(|r| variable.value(r)).collect();
    if values.len() < 2 {
        return Err(SurveyError::InsufficientPooling(values.len()));
    }
    Ok(crate::math::sample_variance(&values))
}

/// Number of score dimensions shared by every poor respondent, if consistent.
fn common_score_dimension(records: &[PersonRecord]) -> Option<usize> {
    let mut k = None;
    for r in records.iter().filter(|r| r.poor) {
        let len = r.scores.as_ref()?.len();
        match k {
            None => k = Some(len),
            Some(prev) if prev != len => return None,
            _ => {}
        }
    }
    k.filter(|&k| k > 0)
}

impl DesignEffects {
    /// Pooled quantities from the entire dataset. Score-related fields are left empty
    /// (`k = 0`) when scores are missing or fewer than two poor respondents exist.
    pub fn from_records(records: &[PersonRecord]) -> Result<Self, SurveyError> {
        if records.is_empty() {
            return Err(SurveyError::EmptyArea);
        }
        let deff_poverty = design_effect(records, Variable::Poor)?;
        let total_w: f64 = records.iter().map(|r| r.weight).sum();
        let pooled_p = records.iter().filter(|r| r.poor).map(|r| r.weight).sum::<f64>() / total_w;
        let n_poor = records.iter().filter(|r| r.poor).count();

        let mut out = DesignEffects {
            deff_poverty,
            pooled_p,
            k: 0,
            deff_dims: Vec::new(),
            pooled_s: Vec::new(),
            pooled_s_pairs: Vec::new(),
            deff_pairs: Vec::new(),
            n_poor,
        };
        let Some(k) = common_score_dimension(records) else {
            return Ok(out);
        };
        if n_poor < 2 {
            return Ok(out);
        }
        let mut deff_dims = Vec::with_capacity(k);
        let mut pooled_s = Vec::with_capacity(k);
        for j in 0..k {
            deff_dims.push(design_effect(records, Variable::Score(j))?);
            pooled_s.push(pooled_variance(records, Variable::Score(j))?);
        }
        let mut s_pairs = vec![vec![0.0; k]; k];
        let mut d_pairs = vec![vec![0.0; k]; k];
        for a in 0..k {
            s_pairs[a][a] = 4.0 * pooled_s[a];
            d_pairs[a][a] = deff_dims[a];
            for b in 0..a {
                let var = Variable::ScoreSum(a, b);
                let s = pooled_variance(records, var)?;
                let d = design_effect(records, var)?;
                s_pairs[a][b] = s;
                s_pairs[b][a] = s;
                d_pairs[a][b] = d;
                d_pairs[b][a] = d;
            }
        }
        out.k = k;
        out.deff_dims = deff_dims;
        out.pooled_s = pooled_s;
        out.pooled_s_pairs = s_pairs;
        out.deff_pairs = d_pairs;
        Ok(out)
    }
}

/// Smoothed sampling covariance before and after positive-definite repair.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedCovariance {
    pub raw: DMatrix<f64>,
    pub matrix: DMatrix<f64>,
    pub repaired: bool,
}

/// Smoothed `Σ̂_i`: diagonal `s_kk·DEFF_k/ñ_i`, off-diagonals from the variance-of-sum identity.
pub fn smoothed_covariance(effects: &DesignEffects, n_adjusted: f64) -> Result<SmoothedCovariance, SurveyError> {
    if effects.k == 0 {
        return Err(SurveyError::InsufficientPooling(effects.n_poor));
    }
    if !(n_adjusted > 0.0 && n_adjusted.is_finite()) {
        return Err(SurveyError::NonPositive("adjusted sample size"));
    }
    let k = effects.k;
    let var_k: Vec<f64> = (0..k).map(|j| effects.pooled_s[j] * effects.deff_dims[j] / n_adjusted).collect();
    let mut raw = DMatrix::zeros(k, k);
    for a in 0..k {
        raw[(a, a)] = var_k[a];
        for b in 0..a {
            let var_sum = effects.pooled_s_pairs[a][b] * effects.deff_pairs[a][b] / n_adjusted;
            let cov = 0.5 * (var_sum - var_k[a] - var_k[b]);
            raw[(a, b)] = cov;
            raw[(b, a)] = cov;
        }
    }
    let (matrix, repaired) = clip_to_positive_definite(&raw, PD_REPAIR_FLOOR);
    Ok(SmoothedCovariance { raw, matrix, repaired })
}

/// Design summaries for every area (first-appearance order) plus the pooled design effects.
pub fn summarize_areas(records: &[PersonRecord]) -> Result<(Vec<AreaDesignSummary>, DesignEffects), SurveyError> {
    validate_records(records)?;
    let effects = DesignEffects::from_records(records)?;

    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<PersonRecord>> = HashMap::new();
    for r in records {
        groups
            .entry(r.area_id.as_str())
            .or_insert_with(|| {
                order.push(r.area_id.as_str());
                Vec::new()
            })
            .push(r.clone());
    }

    let mut out = Vec::with_capacity(order.len());
    for area in order {
        let rows = &groups[area];
        let direct = direct_proportion(rows)?;
        let sizes = household_sizes(rows.iter());
        let n_adjusted = adjusted_sample_size(&sizes)?;
        let d_smoothed = smoothed_variance(n_adjusted, effects.deff_poverty, effects.pooled_p)?;

        let (n_poor_adjusted, y_direct, sigma_hat) = match (effects.k > 0, dimensional_direct(rows)) {
            (true, Some(y)) if y.len() == effects.k => {
                let poor_sizes = household_sizes(rows.iter().filter(|r| r.poor));
                let n_poor = adjusted_sample_size(&poor_sizes)?;
                let sigma = smoothed_covariance(&effects, n_poor)?;
                (Some(n_poor), Some(y), Some(sigma.matrix))
            }
            _ => (None, None, None),
        };

        out.push(AreaDesignSummary {
            area_id: area.to_string(),
            n_households: sizes.len(),
            n_adjusted,
            z_direct: direct.estimate,
            z_direct_se: direct.se,
            se_degenerate: direct.degenerate,
            d_smoothed,
            n_poor_adjusted,
            y_direct,
            sigma_hat,
        });
    }
    Ok((out, effects))
}
