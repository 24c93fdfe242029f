use serde::{Deserialize, Serialize};

/// Post-warmup draws of every chain on the sampler's (unconstrained) scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub parameter_names: Vec<String>,
    /// `draws[chain][iteration][parameter]`.
    pub draws: Vec<Vec<Vec<f64>>>,
    pub divergences: Vec<usize>,
    pub step_size: Vec<f64>,
    pub mass_diag: Vec<Vec<f64>>,
    /// Mean acceptance statistic of the post-warmup transitions, per chain.
    pub mean_accept: Vec<f64>,
    /// Total leapfrog steps spent post-warmup, per chain.
    pub n_leapfrog: Vec<usize>,
}

impl PosteriorDraws {
    pub fn n_chains(&self) -> usize {
        self.draws.len()
    }

    pub fn n_iterations(&self) -> usize {
        self.draws.first().map_or(0, |c| c.len())
    }

    pub fn dim(&self) -> usize {
        self.parameter_names.len()
    }

    pub fn total_draws(&self) -> usize {
        self.draws.iter().map(|c| c.len()).sum()
    }

    /// Values of one parameter split by chain.
    pub fn chains_of(&self, param: usize) -> Vec<Vec<f64>> {
        self.draws.iter().map(|c| c.iter().map(|d| d[param]).collect()).collect()
    }

    /// Every draw in chain-major order.
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.draws.iter().flat_map(|c| c.iter().map(|d| d.as_slice()))
    }

    /// Applies `f` to every draw, keeping the chain structure, with new parameter names.
    pub fn map(&self, names: Vec<String>, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> PosteriorDraws {
        let draws = self.draws.iter().map(|c| c.iter().map(|d| f(d)).collect()).collect();
        PosteriorDraws { parameter_names: names, draws, ..self.clone_meta() }
    }

    fn clone_meta(&self) -> PosteriorDraws {
        PosteriorDraws {
            parameter_names: Vec::new(),
            draws: Vec::new(),
            divergences: self.divergences.clone(),
            step_size: self.step_size.clone(),
            mass_diag: self.mass_diag.clone(),
            mean_accept: self.mean_accept.clone(),
            n_leapfrog: self.n_leapfrog.clone(),
        }
    }
}
