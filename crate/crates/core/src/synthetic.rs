//! Synthetic two-stage surveys with known area-level truth.
//!
//! Each area owns a finite population of PSUs with household counts drawn from
//! `psu_households`. A fixed number of PSUs is selected by randomized systematic PPS on
//! household counts, then households by simple random sampling inside each selected PSU,
//! so a household's weight is `M_area / (a · b_j)` for `a` selected PSUs and `b_j` sampled
//! households in PSU `j`. All members of a household share its poverty status and scores.
//!
//! Truth: `logit π_i = x_i'γ + v_i` with `v_i ~ N(0, σ_v²)`; `logit θ_i = X_iβ + u_i` with
//! `u_i ~ N(0, σ²R)`. A household in PSU `j` is poor with probability
//! `inv_logit(a_i + t_j)`, `t_j ~ N(0, τ²)`, where `τ² = ρ/(1-ρ)·π²/3` for
//! `ρ = intra_psu_corr` (the latent-scale intraclass correlation) and `a_i` solves
//! `E[inv_logit(a_i + t)] = π_i`. A poor household's score vector is
//! `inv_logit(c_ik + e_k)` with `e ~ N(0, score_sd²·R)` and `c_ik` solving
//! `E[inv_logit(c_ik + e_k)] = θ_ik`, so `θ_ik` is the exact mean score of the poor.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::io::AreaTable;
use crate::math::{gauss_hermite, inv_logit, logit_normal_location, mean, sample_variance};
use crate::model::{build_correlation, correlation::n_correlations};
use crate::survey_design::{direct_proportion, PersonRecord};

const QUADRATURE_NODES: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalSpec {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub m_areas: usize,
    #[serde(rename = "K")]
    pub k: usize,
    /// Intercept first, then one coefficient per covariate.
    pub true_gamma: Vec<f64>,
    pub true_sigma_v: f64,
    pub true_beta: Vec<f64>,
    pub true_sigma: f64,
    /// Lower-triangle correlations in row order; `None` means independence.
    pub true_rho: Option<Vec<f64>>,
    /// Sampled households per area, uniform on `min..=max`.
    pub households_per_area: CountRange,
    /// Probabilities of household sizes 1..=8.
    pub household_size_dist: Vec<f64>,
    pub psus_per_area: usize,
    pub population_psus_per_area: usize,
    pub psu_households: CountRange,
    pub intra_psu_corr: f64,
    pub score_sd: f64,
    pub covariate_dist: Vec<NormalSpec>,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            m_areas: 26,
            k: 3,
            true_gamma: vec![-0.3, 0.5],
            true_sigma_v: 0.3,
            true_beta: vec![-1.2, 0.3],
            true_sigma: 0.3,
            true_rho: None,
            households_per_area: CountRange { min: 2, max: 60 },
            household_size_dist: vec![0.08, 0.14, 0.20, 0.22, 0.16, 0.10, 0.06, 0.04],
            psus_per_area: 4,
            population_psus_per_area: 30,
            psu_households: CountRange { min: 60, max: 140 },
            intra_psu_corr: 0.1,
            score_sd: 0.5,
            covariate_dist: vec![NormalSpec { mean: 0.0, sd: 1.0 }],
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn rho(&self) -> Vec<f64> {
        self.true_rho.clone().unwrap_or_else(|| vec![0.0; n_correlations(self.k)])
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Config(m));
        let p = self.covariate_dist.len();
        if self.m_areas == 0 || self.k == 0 {
            return err("m_areas and K must be positive".into());
        }
        if self.true_gamma.len() != p + 1 || self.true_beta.len() != p + 1 {
            return err(format!("true_gamma and true_beta need {} entries (intercept + {p} covariates)", p + 1));
        }
        if self.true_gamma.iter().chain(&self.true_beta).any(|v| !v.is_finite()) {
            return err("coefficients must be finite".into());
        }
        for (name, v) in [("true_sigma_v", self.true_sigma_v), ("true_sigma", self.true_sigma), ("score_sd", self.score_sd)] {
            if !(v >= 0.0 && v.is_finite()) {
                return err(format!("{name} must be non-negative"));
            }
        }
        if self.covariate_dist.iter().any(|c| !c.mean.is_finite() || !(c.sd >= 0.0 && c.sd.is_finite())) {
            return err("covariate_dist needs finite means and non-negative sds".into());
        }
        let rho = self.rho();
        if rho.len() != n_correlations(self.k) {
            return err(format!("true_rho needs {} entries for K = {}", n_correlations(self.k), self.k));
        }
        if rho.iter().any(|r| !(*r > -1.0 && *r < 1.0)) {
            return err("correlations must lie in (-1, 1)".into());
        }
        if !build_correlation(&rho).1 {
            return Err(SimError::CorrelationNotPd);
        }
        if self.household_size_dist.len() != 8
            || self.household_size_dist.iter().any(|p| !(*p >= 0.0 && p.is_finite()))
            || self.household_size_dist.iter().sum::<f64>() <= 0.0
        {
            return err("household_size_dist needs 8 non-negative weights with positive sum".into());
        }
        if !(0.0..1.0).contains(&self.intra_psu_corr) {
            return err("intra_psu_corr must lie in [0, 1)".into());
        }
        let hh = self.households_per_area;
        let psu = self.psu_households;
        if hh.min == 0 || hh.min > hh.max || psu.min == 0 || psu.min > psu.max {
            return err("count ranges need 1 <= min <= max".into());
        }
        if self.psus_per_area == 0 || self.population_psus_per_area < self.psus_per_area {
            return err("need 1 <= psus_per_area <= population_psus_per_area".into());
        }
        // Every PSU must have inclusion probability at most one.
        if self.psus_per_area * psu.max > self.population_psus_per_area * psu.min {
            return err("psus_per_area too large for PPS selection without certainty units".into());
        }
        if hh.max.div_ceil(self.psus_per_area.min(hh.max)) > psu.min {
            return err("more households per PSU requested than the smallest PSU holds".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub seed: u64,
    pub area_ids: Vec<String>,
    /// Superpopulation poverty probabilities.
    pub pi: Vec<f64>,
    /// Realized person-level poverty rates of the finite populations.
    pub pi_population: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub sigma_v: f64,
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub rho: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSurvey {
    pub persons: Vec<PersonRecord>,
    pub areas: AreaTable,
    pub truth: Truth,
}

struct Household {
    size: usize,
    poor: bool,
}

/// Randomized systematic PPS selection of `n` units with the given sizes.
fn systematic_pps(sizes: &[usize], n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let total: f64 = sizes.iter().sum::<usize>() as f64;
    let step = total / n as f64;
    let start = rng.random::<f64>() * step;
    let mut picked = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut next = 0;
    for &j in &order {
        cum += sizes[j] as f64;
        while next < n && start + next as f64 * step < cum {
            picked.push(j);
            next += 1;
        }
    }
    picked
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws one synthetic survey.
pub fn generate(config: &SimConfig) -> Result<SimulatedSurvey, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (nodes, weights) = gauss_hermite(QUADRATURE_NODES);
    let m = config.m_areas;
    let k = config.k;
    let rho = config.rho();
    let chol_r = build_correlation(&rho).0.cholesky().ok_or(SimError::CorrelationNotPd)?.l();
    let width = m.to_string().len().max(2);
    let area_ids: Vec<String> = (1..=m).map(|i| format!("A{i:0width$}")).collect();

    let covariates: Vec<Vec<f64>> = config
        .covariate_dist
        .iter()
        .map(|c| (0..m).map(|_| c.mean + c.sd * normal(&mut rng)).collect())
        .collect();
    let linear = |coef: &[f64], i: usize| coef[0] + covariates.iter().zip(&coef[1..]).map(|(x, c)| c * x[i]).sum::<f64>();

    let mut pi = Vec::with_capacity(m);
    let mut theta = Vec::with_capacity(m);
    for i in 0..m {
        pi.push(inv_logit(linear(&config.true_gamma, i) + config.true_sigma_v * normal(&mut rng)));
        let z = DVector::from_fn(k, |_, _| normal(&mut rng));
        let u = &chol_r * z * config.true_sigma;
        let base = linear(&config.true_beta, i);
        theta.push((0..k).map(|d| inv_logit(base + u[d])).collect::<Vec<f64>>());
    }
    let eta: Vec<Vec<f64>> = theta.iter().map(|t| {
        let s: f64 = t.iter().sum();
        t.iter().map(|v| v / s).collect()
    }).collect();

    let tilt_sd = (config.intra_psu_corr / (1.0 - config.intra_psu_corr) * std::f64::consts::PI.powi(2) / 3.0).sqrt();
    let size_dist = WeightedIndex::new(&config.household_size_dist).map_err(|e| SimError::Config(e.to_string()))?;

    let mut persons = Vec::new();
    let mut population = Vec::with_capacity(m);
    let mut pi_population = Vec::with_capacity(m);
    for i in 0..m {
        let area = &area_ids[i];
        let location = logit_normal_location(pi[i], tilt_sd, &nodes, &weights);
        let score_location: Vec<f64> =
            theta[i].iter().map(|&t| logit_normal_location(t, config.score_sd, &nodes, &weights)).collect();

        let psus: Vec<Vec<Household>> = (0..config.population_psus_per_area)
            .map(|_| {
                let count = rng.random_range(config.psu_households.min..=config.psu_households.max);
                let p = inv_logit(location + tilt_sd * normal(&mut rng));
                (0..count)
                    .map(|_| Household { size: size_dist.sample(&mut rng) + 1, poor: rng.random::<f64>() < p })
                    .collect()
            })
            .collect();
        let persons_total: usize = psus.iter().flatten().map(|h| h.size).sum();
        let poor_total: usize = psus.iter().flatten().filter(|h| h.poor).map(|h| h.size).sum();
        population.push(persons_total as f64);
        pi_population.push(poor_total as f64 / persons_total as f64);

        let n_households = rng.random_range(config.households_per_area.min..=config.households_per_area.max);
        let a = config.psus_per_area.min(n_households);
        let psu_sizes: Vec<usize> = psus.iter().map(Vec::len).collect();
        let households_total: usize = psu_sizes.iter().sum();
        for (slot, &j) in systematic_pps(&psu_sizes, a, &mut rng).iter().enumerate() {
            let b = n_households / a + usize::from(slot < n_households % a);
            let weight = households_total as f64 / (a * b) as f64;
            for h in sample_indices(&mut rng, psus[j].len(), b).into_vec() {
                let hh = &psus[j][h];
                let scores = if hh.poor {
                    let e = &chol_r * DVector::from_fn(k, |_, _| normal(&mut rng)) * config.score_sd;
                    (0..k).map(|d| inv_logit(score_location[d] + e[d])).collect()
                } else {
                    vec![0.0; k]
                };
                let household_id = format!("{area}-{j}-{h}");
                for p in 0..hh.size {
                    persons.push(PersonRecord {
                        area_id: area.clone(),
                        psu_id: format!("P{j}"),
                        household_id: household_id.clone(),
                        person_id: format!("{household_id}-{p}"),
                        weight,
                        poor: hh.poor,
                        scores: Some(scores.clone()),
                    });
                }
            }
        }
    }

    let covariate_names = (1..=covariates.len()).map(|c| format!("x{c}"));
    let areas = AreaTable {
        area_ids: area_ids.clone(),
        population: Some(population),
        covariates: covariate_names.zip(covariates).collect(),
    };
    let truth = Truth {
        seed: config.seed,
        area_ids,
        pi,
        pi_population,
        theta,
        eta,
        gamma: config.true_gamma.clone(),
        sigma_v: config.true_sigma_v,
        beta: config.true_beta.clone(),
        sigma: config.true_sigma,
        rho,
    };
    Ok(SimulatedSurvey { persons, areas, truth })
}

/// Per-area Monte Carlo check that direct estimates are unbiased for `π_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnbiasednessRow {
    pub area_id: String,
    pub mean_error: f64,
    pub mc_se: f64,
    /// `mean_error / mc_se`.
    pub z: f64,
}

/// Generates `replications` surveys with seeds `seed, seed+1, ...` and summarizes
/// `z_i - π_i` per area.
pub fn unbiasedness_check(config: &SimConfig, replications: usize) -> Result<Vec<UnbiasednessRow>, SimError> {
    if replications < 2 {
        return Err(SimError::Config("need at least two replications".into()));
    }
    let errors: Vec<Vec<f64>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let cfg = SimConfig { seed: config.seed.wrapping_add(r), ..config.clone() };
            let sim = generate(&cfg)?;
            Ok(sim
                .truth
                .area_ids
                .iter()
                .zip(&sim.truth.pi)
                .map(|(area, &p)| {
                    let records: Vec<PersonRecord> = sim.persons.iter().filter(|r| &r.area_id == area).cloned().collect();
                    direct_proportion(&records).map(|d| d.estimate - p).unwrap_or(f64::NAN)
                })
                .collect())
        })
        .collect::<Result<_, SimError>>()?;
    let area_ids = generate(config)?.truth.area_ids;
    Ok(area_ids
        .into_iter()
        .enumerate()
        .map(|(i, area_id)| {
            let e: Vec<f64> = errors.iter().map(|row| row[i]).collect();
            let mean_error = mean(&e);
            let mc_se = (sample_variance(&e) / e.len() as f64).sqrt();
            UnbiasednessRow { area_id, mean_error, mc_se, z: mean_error / mc_se }
        })
        .collect())
}

/// Intercept column followed by the area covariates.
pub fn covariate_matrix(areas: &AreaTable) -> DMatrix<f64> {
    let m = areas.area_ids.len();
    DMatrix::from_fn(m, areas.covariates.len() + 1, |i, j| if j == 0 { 1.0 } else { areas.covariates[j - 1].1[i] })
}
