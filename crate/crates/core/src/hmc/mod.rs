//! Hamiltonian Monte Carlo with warmup adaptation and parallel chains.
//!
//! Each chain draws from `ChaCha8Rng` seeded with the run seed and switched to stream
//! `chain`, so chain `c` of seed `s` is reproducible on its own.

pub mod adapt;
pub mod draws;
pub mod gradcheck;
pub mod nuts;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SamplerError;
use crate::model::LogDensity;
use adapt::{DualAveraging, RunningVariance, WarmupSchedule};
pub use draws::PosteriorDraws;
pub use gradcheck::{gradient_check, GradientCheckReport};
pub use nuts::{leapfrog, PhasePoint};
use nuts::{nuts_transition, static_transition, TransitionStats};

pub const MAX_INIT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Nuts,
    /// Fixed trajectory length of `static_steps` leapfrog steps.
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub chains: usize,
    /// Total iterations per chain, warmup included.
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    pub target_accept: f64,
    /// Longest trajectory in leapfrog steps; NUTS uses depth `floor(log2(max_leapfrog))`.
    pub max_leapfrog: usize,
    pub init_radius: f64,
    pub algorithm: Algorithm,
    pub static_steps: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            iterations: 10_000,
            warmup: 5_000,
            seed: 20_200_101,
            target_accept: 0.8,
            max_leapfrog: 1024,
            init_radius: 2.0,
            algorithm: Algorithm::Nuts,
            static_steps: 16,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let err = |m: &str| Err(SamplerError::Config(m.to_string()));
        if self.chains == 0 {
            return err("chains must be at least 1");
        }
        if self.warmup >= self.iterations {
            return err("warmup must be smaller than iterations");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return err("target_accept must lie in (0, 1)");
        }
        if self.max_leapfrog == 0 || self.static_steps == 0 {
            return err("trajectory lengths must be positive");
        }
        if !(self.init_radius > 0.0 && self.init_radius.is_finite()) {
            return err("init_radius must be positive");
        }
        Ok(())
    }

    pub fn max_depth(&self) -> usize {
        ((usize::BITS - 1 - self.max_leapfrog.leading_zeros()) as usize).max(1)
    }

    pub fn post_warmup(&self) -> usize {
        self.iterations - self.warmup
    }
}

/// The per-chain random number generator.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn finite_point(z: &PhasePoint) -> bool {
    z.logp.is_finite() && z.grad.iter().all(|g| g.is_finite())
}

fn initialize<T: LogDensity + ?Sized>(target: &T, radius: f64, rng: &mut ChaCha8Rng) -> Result<PhasePoint, SamplerError> {
    for _ in 0..MAX_INIT_ATTEMPTS {
        let q: Vec<f64> = (0..target.dim()).map(|_| rng.random_range(-radius..radius)).collect();
        let z = PhasePoint::new(target, q);
        if finite_point(&z) {
            return Ok(z);
        }
    }
    Err(SamplerError::CannotInitialize(MAX_INIT_ATTEMPTS))
}

/// Step-size heuristic: doubles or halves `eps` until the one-step acceptance crosses 0.8.
fn initial_step_size<T: LogDensity + ?Sized>(target: &T, z: &PhasePoint, inv_mass: &[f64], mut eps: f64, rng: &mut ChaCha8Rng) -> f64 {
    let threshold = 0.8f64.ln();
    let mut direction = 0.0;
    for _ in 0..100 {
        let mut trial = z.clone();
        trial.resample_momentum(inv_mass, rng);
        let h0 = trial.hamiltonian(inv_mass);
        leapfrog(target, &mut trial, eps, inv_mass);
        let delta = h0 - trial.hamiltonian(inv_mass);
        let up = delta > threshold;
        if direction == 0.0 {
            direction = if up { 1.0 } else { -1.0 };
        } else if (direction > 0.0) != up {
            break;
        }
        eps = if direction > 0.0 { eps * 2.0 } else { eps * 0.5 };
        if !(1e-12..=1e7).contains(&eps) {
            break;
        }
    }
    eps.clamp(1e-12, 1e7)
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    divergences: usize,
    step_size: f64,
    inv_mass: Vec<f64>,
    mean_accept: f64,
    n_leapfrog: usize,
}

fn transition<T: LogDensity + ?Sized>(
    target: &T,
    z: &PhasePoint,
    eps: f64,
    inv_mass: &[f64],
    config: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> (PhasePoint, TransitionStats) {
    match config.algorithm {
        Algorithm::Nuts => nuts_transition(target, z, eps, inv_mass, config.max_depth(), rng),
        Algorithm::Static => static_transition(target, z, eps, inv_mass, config.static_steps, rng),
    }
}

fn run_chain<T: LogDensity + ?Sized>(target: &T, config: &SamplerConfig, chain: usize) -> Result<ChainOutput, SamplerError> {
    let dim = target.dim();
    let mut rng = chain_rng(config.seed, chain);
    let mut z = initialize(target, config.init_radius, &mut rng)?;
    let mut inv_mass = vec![1.0; dim];
    let mut eps = initial_step_size(target, &z, &inv_mass, 1.0, &mut rng);
    let mut da = DualAveraging::new(config.target_accept, eps);
    let schedule = WarmupSchedule::new(config.warmup);
    let mut window = RunningVariance::new(dim);

    for iter in 0..config.warmup {
        let (next, stats) = transition(target, &z, eps, &inv_mass, config, &mut rng);
        z = next;
        eps = da.update(stats.accept_stat);
        if schedule.in_window(iter) {
            window.push(&z.q);
        }
        if schedule.closes_window(iter) && window.count() >= 3 {
            inv_mass = window.regularized();
            window = RunningVariance::new(dim);
            eps = initial_step_size(target, &z, &inv_mass, eps, &mut rng);
            da = DualAveraging::new(config.target_accept, eps);
        }
    }
    if config.warmup > 0 {
        eps = da.final_step();
    }

    let n = config.post_warmup();
    let mut draws = Vec::with_capacity(n);
    let mut divergences = 0;
    let mut accept_sum = 0.0;
    let mut n_leapfrog = 0;
    for _ in 0..n {
        let (next, stats) = transition(target, &z, eps, &inv_mass, config, &mut rng);
        z = next;
        divergences += stats.divergent as usize;
        accept_sum += stats.accept_stat;
        n_leapfrog += stats.n_leapfrog;
        draws.push(z.q.clone());
    }
    if n > 0 && divergences == n {
        return Err(SamplerError::AllDivergent { chain, step_size: eps });
    }
    Ok(ChainOutput { draws, divergences, step_size: eps, inv_mass, mean_accept: accept_sum / n.max(1) as f64, n_leapfrog })
}

/// Runs `config.chains` chains in parallel on the current rayon pool.
/// Parameter names default to `x[0]`, `x[1]`, ...
pub fn sample<T: LogDensity + ?Sized>(target: &T, config: &SamplerConfig) -> Result<PosteriorDraws, SamplerError> {
    config.validate()?;
    let outputs: Vec<Result<ChainOutput, SamplerError>> =
        (0..config.chains).into_par_iter().map(|c| run_chain(target, config, c)).collect();
    let mut out = PosteriorDraws {
        parameter_names: (0..target.dim()).map(|j| format!("x[{j}]")).collect(),
        draws: Vec::with_capacity(config.chains),
        divergences: Vec::new(),
        step_size: Vec::new(),
        mass_diag: Vec::new(),
        mean_accept: Vec::new(),
        n_leapfrog: Vec::new(),
    };
    for o in outputs {
        let o = o?;
        out.draws.push(o.draws);
        out.divergences.push(o.divergences);
        out.step_size.push(o.step_size);
        out.mass_diag.push(o.inv_mass);
        out.mean_accept.push(o.mean_accept);
        out.n_leapfrog.push(o.n_leapfrog);
    }
    Ok(out)
}
