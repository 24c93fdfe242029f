//! Scalar helpers shared by the models, the sampler and the reports.

use std::f64::consts::PI;

/// `0.5 * ln(2π)`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Numerically stable logistic function.
pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(p (1 - p))` for `p = inv_logit(x)`, accurate for saturated `x`.
pub fn log_p_one_minus_p(x: f64) -> f64 {
    -softplus(-x) - softplus(x)
}

/// Normal log density with mean `mu` and variance `var`.
pub fn normal_lpdf(x: f64, mu: f64, var: f64) -> f64 {
    let r = x - mu;
    -HALF_LN_2PI - 0.5 * var.ln() - 0.5 * r * r / var
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Complementary error function: Taylor series below 2, continued fraction above.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.0 {
        1.0 - erf_series(x)
    } else {
        erfc_continued_fraction(x)
    }
}

fn erf_series(x: f64) -> f64 {
    // erf(x) = 2/sqrt(pi) * sum_n (-1)^n x^(2n+1) / (n! (2n+1))
    let mut sum = 0.0;
    let mut term = x;
    let x2 = x * x;
    let mut n = 0.0;
    loop {
        let add = term / (2.0 * n + 1.0);
        sum += add;
        if add.abs() < 1e-17 * sum.abs() {
            break;
        }
        n += 1.0;
        term *= -x2 / n;
        if n > 200.0 {
            break;
        }
    }
    2.0 / PI.sqrt() * sum
}

fn erfc_continued_fraction(x: f64) -> f64 {
    // Lentz evaluation of erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + 1/2/(x + 1/(x + 3/2/(x + ...))))
    let tiny = 1e-300;
    let mut f = x;
    if f == 0.0 {
        f = tiny;
    }
    let mut c = f;
    let mut d = 0.0;
    for i in 1..300 {
        let a = i as f64 / 2.0;
        d = x + a * d;
        if d == 0.0 {
            d = tiny;
        }
        c = x + a / c;
        if c == 0.0 {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / PI.sqrt() / f
}

/// `ln Σ exp(x_i)`; returns `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Arithmetic mean, accumulated around the first value (exact for constant input).
pub fn mean(xs: &[f64]) -> f64 {
    let Some(&x0) = xs.first() else { return f64::NAN };
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n - 1` denominator (0 for fewer than two values).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Quantile by linear interpolation of order statistics (R type 7).
/// `sorted` must be ascending and non-empty.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Gauss–Hermite nodes and weights for `∫ f(x) exp(-x²) dx` (Golub–Welsch free, Newton on H_n).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        // Initial guesses from Numerical Recipes (gauher).
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PI.powf(-0.25);
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    (nodes, weights)
}

/// Expectation of `g(mu + sd * Z)` for standard normal `Z`, by Gauss–Hermite quadrature.
pub fn normal_expectation(mu: f64, sd: f64, nodes: &[f64], weights: &[f64], g: impl Fn(f64) -> f64) -> f64 {
    let scale = std::f64::consts::SQRT_2 * sd;
    nodes
        .iter()
        .zip(weights)
        .map(|(&x, &w)| w * g(mu + scale * x))
        .sum::<f64>()
        / PI.sqrt()
}

/// Location `c` such that `E[inv_logit(c + sd * Z)] = target`, for `target` in (0, 1).
pub fn logit_normal_location(target: f64, sd: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    if sd == 0.0 {
        return logit(target);
    }
    let f = |c: f64| normal_expectation(c, sd, nodes, weights, inv_logit) - target;
    let mut lo = logit(target) - 10.0 * sd - 10.0;
    let mut hi = logit(target) + 10.0 * sd + 10.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}
