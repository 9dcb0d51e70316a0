//! Scalar losses with their analytic gradients.

use std::f64::consts::PI;

/// `0.5·Σ[(t-μ)²·e^{-lv} + lv]`; the `ln 2π` constant is dropped.
pub fn gaussian_nll(mean: &[f64], log_variance: &[f64], target: &[f64]) -> f64 {
    mean.iter()
        .zip(log_variance)
        .zip(target)
        .map(|((&m, &lv), &t)| {
            let d = t - m;
            d * d * (-lv).exp() + lv
        })
        .sum::<f64>()
        * 0.5
}

/// Gradients of [`gaussian_nll`] w.r.t. mean and log-variance, written into
/// `d_mean` and `d_logvar` scaled by `weight`.
pub fn gaussian_nll_grad(
    mean: &[f64],
    log_variance: &[f64],
    target: &[f64],
    weight: f64,
    d_mean: &mut [f64],
    d_logvar: &mut [f64],
) {
    for i in 0..mean.len() {
        let d = target[i] - mean[i];
        let inv_var = (-log_variance[i]).exp();
        d_mean[i] = -d * inv_var * weight;
        d_logvar[i] = 0.5 * (1.0 - d * d * inv_var) * weight;
    }
}

/// Log-density of a diagonal Gaussian.
pub fn diag_gaussian_log_prob(mean: &[f64], log_variance: &[f64], value: &[f64]) -> f64 {
    -0.5 * mean
        .iter()
        .zip(log_variance)
        .zip(value)
        .map(|((&m, &lv), &v)| {
            let d = v - m;
            d * d * (-lv).exp() + lv + (2.0 * PI).ln()
        })
        .sum::<f64>()
}

/// Gradients of [`diag_gaussian_log_prob`] w.r.t. mean and log-variance.
pub fn diag_gaussian_log_prob_grad(
    mean: &[f64],
    log_variance: &[f64],
    value: &[f64],
    d_mean: &mut [f64],
    d_logvar: &mut [f64],
) {
    for i in 0..mean.len() {
        let d = value[i] - mean[i];
        let inv_var = (-log_variance[i]).exp();
        d_mean[i] = d * inv_var;
        d_logvar[i] = 0.5 * (d * d * inv_var - 1.0);
    }
}

/// Entropy of a diagonal Gaussian given per-dimension log standard deviations.
pub fn diag_gaussian_entropy(log_std: &[f64]) -> f64 {
    let c = 0.5 * (2.0 * PI * std::f64::consts::E).ln();
    log_std.iter().map(|ls| ls + c).sum()
}

/// Mean squared error over all entries.
pub fn mse(prediction: &[f64], target: &[f64]) -> f64 {
    let n = prediction.len().max(1) as f64;
    prediction
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n
}

pub fn mse_grad(prediction: &[f64], target: &[f64], out: &mut [f64]) {
    let n = prediction.len().max(1) as f64;
    for ((o, p), t) in out.iter_mut().zip(prediction).zip(target) {
        *o = 2.0 * (p - t) / n;
    }
}
