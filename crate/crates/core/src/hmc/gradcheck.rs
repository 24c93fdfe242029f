use crate::model::LogDensity;

/// Outcome of comparing an analytic gradient with central finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckReport {
    pub max_relative_error: f64,
    /// Index into the supplied points of the worst case.
    pub point: usize,
    pub coordinate: usize,
    pub analytic: f64,
    pub numeric: f64,
}

pub const FD_STEP: f64 = 1e-5;

/// Central differences with step `1e-5` per coordinate; the relative error is
/// `|analytic - numeric| / max(|numeric|, 1)`. Points with a non-finite density are skipped.
pub fn gradient_check<T: LogDensity + ?Sized>(target: &T, points: &[Vec<f64>]) -> GradientCheckReport {
    let dim = target.dim();
    let mut report = GradientCheckReport { max_relative_error: 0.0, point: 0, coordinate: 0, analytic: 0.0, numeric: 0.0 };
    let mut grad = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    for (pi, x) in points.iter().enumerate() {
        if !target.logp_grad(x, &mut grad).is_finite() {
            continue;
        }
        let mut xp = x.clone();
        for j in 0..dim {
            xp[j] = x[j] + FD_STEP;
            let up = target.logp_grad(&xp, &mut scratch);
            xp[j] = x[j] - FD_STEP;
            let down = target.logp_grad(&xp, &mut scratch);
            xp[j] = x[j];
            let numeric = (up - down) / (2.0 * FD_STEP);
            let err = (grad[j] - numeric).abs() / numeric.abs().max(1.0);
            if err > report.max_relative_error || err.is_nan() {
                report = GradientCheckReport { max_relative_error: err, point: pi, coordinate: j, analytic: grad[j], numeric };
            }
        }
    }
    report
}
