//! Warmup adaptation: dual-averaging step size and windowed diagonal mass estimation.

/// Nesterov dual averaging of `log ε` towards a target acceptance statistic.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    target: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
}

impl DualAveraging {
    pub fn new(target: f64, initial_step: f64) -> Self {
        Self {
            target,
            mu: (10.0 * initial_step).ln(),
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
        }
    }

    /// Records one acceptance statistic and returns the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        let stat = if accept_stat.is_finite() { accept_stat.min(1.0) } else { 0.0 };
        self.counter += 1.0;
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - stat);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let x_eta = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    /// The averaged step size used after adaptation ends.
    pub fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Streaming per-coordinate variance (Welford).
#[derive(Debug, Clone)]
pub struct RunningVariance {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningVariance {
    pub fn new(dim: usize) -> Self {
        Self { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    /// Shrunk variance estimate used as the inverse mass diagonal.
    pub fn regularized(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|&s| {
                let var = s / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

/// Warmup phase boundaries (iteration indices, exclusive ends).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WarmupSchedule {
    pub init_buffer_end: usize,
    pub window_a_end: usize,
    pub window_b_end: usize,
    pub warmup: usize,
}

impl WarmupSchedule {
    /// 15% step-size-only buffer, two mass windows ending at 50% and 90%, and a final
    /// 10% buffer re-tuning the step size for the final mass matrix.
    /// Very short warmups adapt the step size only.
    pub fn new(warmup: usize) -> Self {
        if warmup < 20 {
            return Self { init_buffer_end: warmup, window_a_end: warmup, window_b_end: warmup, warmup };
        }
        let at = |f: f64| (f * warmup as f64).round() as usize;
        Self { init_buffer_end: at(0.15), window_a_end: at(0.5), window_b_end: at(0.9), warmup }
    }

    pub fn in_window(&self, iter: usize) -> bool {
        iter >= self.init_buffer_end && iter < self.window_b_end
    }

    /// True when `iter` is the last iteration of a mass window.
    pub fn closes_window(&self, iter: usize) -> bool {
        self.window_b_end > self.init_buffer_end
            && (iter + 1 == self.window_a_end || iter + 1 == self.window_b_end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass_variance() {
        let xs = [1.0, 4.0, 2.0, 8.0, 5.0];
        let mut rv = RunningVariance::new(1);
        xs.iter().for_each(|&x| rv.push(&[x]));
        let var = crate::math::sample_variance(&xs);
        let n = 5.0;
        let expect = n / (n + 5.0) * var + 1e-3 * 5.0 / (n + 5.0);
        assert!((rv.regularized()[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn dual_averaging_moves_in_the_right_direction() {
        let mut da = DualAveraging::new(0.8, 1.0);
        let low = da.update(0.1);
        let mut da2 = DualAveraging::new(0.8, 1.0);
        let high = da2.update(1.0);
        assert!(low < high);
    }

    #[test]
    fn schedule_boundaries() {
        let s = WarmupSchedule::new(1000);
        assert_eq!((s.init_buffer_end, s.window_a_end, s.window_b_end), (150, 500, 900));
        assert!(s.closes_window(499) && s.closes_window(899) && !s.closes_window(900));
        let short = WarmupSchedule::new(10);
        assert!(!short.in_window(5) && !short.closes_window(9));
    }
}
