//! One HMC transition: multinomial no-U-turn trajectories or a fixed number of leapfrog steps.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::math::log_sum_exp;
use crate::model::LogDensity;

/// Energy error above which a trajectory is declared divergent.
pub const MAX_DELTA_H: f64 = 1000.0;

/// Position, momentum and cached gradient of one phase-space point.
#[derive(Debug, Clone)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl PhasePoint {
    pub fn new<T: LogDensity + ?Sized>(target: &T, q: Vec<f64>) -> Self {
        let mut grad = vec![0.0; q.len()];
        let logp = target.logp_grad(&q, &mut grad);
        let p = vec![0.0; q.len()];
        Self { q, p, grad, logp }
    }

    /// Hamiltonian with kinetic energy `½ Σ m⁻¹_j p_j²`; non-finite maps to `+inf`.
    pub fn hamiltonian(&self, inv_mass: &[f64]) -> f64 {
        let kinetic: f64 = self.p.iter().zip(inv_mass).map(|(p, m)| 0.5 * m * p * p).sum();
        let h = kinetic - self.logp;
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn velocity(&self, inv_mass: &[f64]) -> Vec<f64> {
        self.p.iter().zip(inv_mass).map(|(p, m)| p * m).collect()
    }

    pub fn resample_momentum<R: Rng + ?Sized>(&mut self, inv_mass: &[f64], rng: &mut R) {
        for (p, m) in self.p.iter_mut().zip(inv_mass) {
            let z: f64 = rng.sample(StandardNormal);
            *p = z / m.sqrt();
        }
    }
}

/// One leapfrog step of size `eps` (negative to integrate backwards).
pub fn leapfrog<T: LogDensity + ?Sized>(target: &T, z: &mut PhasePoint, eps: f64, inv_mass: &[f64]) {
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += 0.5 * eps * g;
    }
    for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(inv_mass) {
        *q += eps * m * p;
    }
    z.logp = target.logp_grad(&z.q, &mut z.grad);
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += 0.5 * eps * g;
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TransitionStats {
    pub accept_stat: f64,
    pub n_leapfrog: usize,
    pub divergent: bool,
    pub depth: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn add_assign(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

/// Generalized no-U-turn criterion on the summed momentum `rho`.
fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

struct Tree<'a, T: ?Sized, R: ?Sized> {
    target: &'a T,
    rng: &'a mut R,
    inv_mass: &'a [f64],
    eps: f64,
    h0: f64,
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

/// Boundary momenta of a subtree, in the integration direction.
struct Edges {
    p_sharp_beg: Vec<f64>,
    p_sharp_end: Vec<f64>,
    p_beg: Vec<f64>,
    p_end: Vec<f64>,
}

impl<T: LogDensity + ?Sized, R: Rng + ?Sized> Tree<'_, T, R> {
    /// Extends `z` by `2^depth` leapfrog steps. Returns whether the subtree is valid, its
    /// proposal, boundary momenta, and accumulates `rho` and `log_sum_weight`.
    fn build(
        &mut self,
        depth: usize,
        z: &mut PhasePoint,
        sign: f64,
        rho: &mut [f64],
        log_sum_weight: &mut f64,
    ) -> (bool, PhasePoint, Edges) {
        if depth == 0 {
            leapfrog(self.target, z, sign * self.eps, self.inv_mass);
            self.n_leapfrog += 1;
            let h = z.hamiltonian(self.inv_mass);
            if h - self.h0 > MAX_DELTA_H {
                self.divergent = true;
            }
            let delta = self.h0 - h;
            *log_sum_weight = log_sum_exp(&[*log_sum_weight, delta]);
            self.sum_metro_prob += if delta > 0.0 { 1.0 } else { delta.exp() };
            add_assign(rho, &z.p);
            let p_sharp = z.velocity(self.inv_mass);
            let edges = Edges { p_sharp_beg: p_sharp.clone(), p_sharp_end: p_sharp, p_beg: z.p.clone(), p_end: z.p.clone() };
            return (!self.divergent, z.clone(), edges);
        }

        let dim = z.q.len();
        let mut rho_init = vec![0.0; dim];
        let mut lsw_init = f64::NEG_INFINITY;
        let (valid, propose_init, init) = self.build(depth - 1, z, sign, &mut rho_init, &mut lsw_init);
        if !valid {
            return (false, propose_init, init);
        }
        let mut rho_final = vec![0.0; dim];
        let mut lsw_final = f64::NEG_INFINITY;
        let (valid, propose_final, fin) = self.build(depth - 1, z, sign, &mut rho_final, &mut lsw_final);
        if !valid {
            return (false, propose_final, fin);
        }

        let lsw_subtree = log_sum_exp(&[lsw_init, lsw_final]);
        *log_sum_weight = log_sum_exp(&[*log_sum_weight, lsw_subtree]);
        let take_final = lsw_final > lsw_subtree || self.rng.random::<f64>() < (lsw_final - lsw_subtree).exp();
        let propose = if take_final { propose_final } else { propose_init };

        let rho_subtree = add(&rho_init, &rho_final);
        add_assign(rho, &rho_subtree);
        let mut persist = no_u_turn(&init.p_sharp_beg, &fin.p_sharp_end, &rho_subtree);
        let rho_ext = add(&rho_init, &fin.p_beg);
        persist &= no_u_turn(&init.p_sharp_beg, &fin.p_sharp_beg, &rho_ext);
        let rho_ext = add(&rho_final, &init.p_end);
        persist &= no_u_turn(&init.p_sharp_end, &fin.p_sharp_end, &rho_ext);

        let edges = Edges { p_sharp_beg: init.p_sharp_beg, p_sharp_end: fin.p_sharp_end, p_beg: init.p_beg, p_end: fin.p_end };
        (persist, propose, edges)
    }
}

/// Multinomial NUTS transition from `current` (whose momentum is resampled).
pub fn nuts_transition<T: LogDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    current: &PhasePoint,
    eps: f64,
    inv_mass: &[f64],
    max_depth: usize,
    rng: &mut R,
) -> (PhasePoint, TransitionStats) {
    let mut z = current.clone();
    z.resample_momentum(inv_mass, rng);
    let h0 = z.hamiltonian(inv_mass);

    let p_sharp = z.velocity(inv_mass);
    let mut fwd = z.clone();
    let mut bck = z.clone();
    // Outer edges of the whole trajectory and the inner edges adjacent to the newest subtree.
    let (mut p_sharp_fwd_fwd, mut p_sharp_fwd_bck) = (p_sharp.clone(), p_sharp.clone());
    let (mut p_sharp_bck_fwd, mut p_sharp_bck_bck) = (p_sharp.clone(), p_sharp);
    let (mut p_fwd_fwd, mut p_fwd_bck) = (z.p.clone(), z.p.clone());
    let (mut p_bck_fwd, mut p_bck_bck) = (z.p.clone(), z.p.clone());
    let mut rho = z.p.clone();
    let mut log_sum_weight = 0.0;
    let mut sample = z.clone();

    let mut tree = Tree { target, rng, inv_mass, eps, h0, n_leapfrog: 0, sum_metro_prob: 0.0, divergent: false };
    let dim = z.q.len();
    let mut depth = 0;
    while depth < max_depth {
        let mut rho_fwd = vec![0.0; dim];
        let mut rho_bck = vec![0.0; dim];
        let mut lsw_subtree = f64::NEG_INFINITY;
        let forward = tree.rng.random::<f64>() > 0.5;
        let (valid, propose) = if forward {
            rho_bck.copy_from_slice(&rho);
            p_bck_fwd.clone_from(&p_fwd_fwd);
            p_sharp_bck_fwd.clone_from(&p_sharp_fwd_fwd);
            let (valid, propose, e) = tree.build(depth, &mut fwd, 1.0, &mut rho_fwd, &mut lsw_subtree);
            p_sharp_fwd_bck = e.p_sharp_beg;
            p_sharp_fwd_fwd = e.p_sharp_end;
            p_fwd_bck = e.p_beg;
            p_fwd_fwd = e.p_end;
            (valid, propose)
        } else {
            rho_fwd.copy_from_slice(&rho);
            p_fwd_bck.clone_from(&p_bck_bck);
            p_sharp_fwd_bck.clone_from(&p_sharp_bck_bck);
            let (valid, propose, e) = tree.build(depth, &mut bck, -1.0, &mut rho_bck, &mut lsw_subtree);
            p_sharp_bck_fwd = e.p_sharp_beg;
            p_sharp_bck_bck = e.p_sharp_end;
            p_bck_fwd = e.p_beg;
            p_bck_bck = e.p_end;
            (valid, propose)
        };
        if !valid {
            break;
        }
        depth += 1;

        if lsw_subtree > log_sum_weight || tree.rng.random::<f64>() < (lsw_subtree - log_sum_weight).exp() {
            sample = propose;
        }
        log_sum_weight = log_sum_exp(&[log_sum_weight, lsw_subtree]);

        rho = add(&rho_bck, &rho_fwd);
        let mut persist = no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
        let rho_ext = add(&rho_bck, &p_fwd_bck);
        persist &= no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_bck, &rho_ext);
        let rho_ext = add(&rho_fwd, &p_bck_fwd);
        persist &= no_u_turn(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &rho_ext);
        if !persist {
            break;
        }
    }

    let n = tree.n_leapfrog.max(1);
    let stats = TransitionStats {
        accept_stat: tree.sum_metro_prob / n as f64,
        n_leapfrog: tree.n_leapfrog,
        divergent: tree.divergent,
        depth,
    };
    (sample, stats)
}

/// Metropolis-corrected transition with a fixed number of leapfrog steps.
pub fn static_transition<T: LogDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    current: &PhasePoint,
    eps: f64,
    inv_mass: &[f64],
    steps: usize,
    rng: &mut R,
) -> (PhasePoint, TransitionStats) {
    let mut z = current.clone();
    z.resample_momentum(inv_mass, rng);
    let h0 = z.hamiltonian(inv_mass);
    let mut divergent = false;
    let mut taken = 0;
    for _ in 0..steps {
        leapfrog(target, &mut z, eps, inv_mass);
        taken += 1;
        if z.hamiltonian(inv_mass) - h0 > MAX_DELTA_H {
            divergent = true;
            break;
        }
    }
    let delta = h0 - z.hamiltonian(inv_mass);
    let accept = if divergent { 0.0 } else { delta.exp().min(1.0) };
    let stats = TransitionStats { accept_stat: accept, n_leapfrog: taken, divergent, depth: 0 };
    if !divergent && rng.random::<f64>() < accept {
        (z, stats)
    } else {
        (current.clone(), stats)
    }
}
