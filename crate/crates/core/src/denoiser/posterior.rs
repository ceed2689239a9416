use super::{DiscreteSparsePrior, SoftEstimate};
use crate::error::{invalid, Result};

/// Conditional-mean soft value `E{X | z}` and conditional error variance
/// `var{X | z}` for the observation `z = x + n`, `n ~ N(0, sigma_n2)`.
///
/// Gaussian weights are formed in the log domain relative to their maximum,
/// so the largest weight is exactly one and nothing underflows to `0/0`.
pub fn posterior_moments(
    z: f64,
    sigma_n2: f64,
    prior: &DiscreteSparsePrior,
) -> Result<SoftEstimate> {
    check_inputs(z, sigma_n2)?;
    Ok(moments_unchecked(z, sigma_n2, prior))
}

fn check_inputs(z: f64, sigma_n2: f64) -> Result<()> {
    if !z.is_finite() {
        return Err(invalid(format!("observation must be finite, got {z}")));
    }
    if !(sigma_n2 > 0.0 && sigma_n2.is_finite()) {
        return Err(invalid(format!(
            "noise variance must be positive and finite, got {sigma_n2}"
        )));
    }
    Ok(())
}

#[inline]
fn max_log_weight(z: f64, half_precision: f64, prior: &DiscreteSparsePrior) -> f64 {
    prior
        .alphabet()
        .iter()
        .zip(prior.log_probabilities())
        .map(|(c, lp)| lp - (z - c) * (z - c) * half_precision)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn moments_unchecked(z: f64, sigma_n2: f64, prior: &DiscreteSparsePrior) -> SoftEstimate {
    let half_precision = 0.5 / sigma_n2;
    let top = max_log_weight(z, half_precision, prior);
    let mut total = 0.0;
    let mut first = 0.0;
    for (c, lp) in prior.alphabet().iter().zip(prior.log_probabilities()) {
        let w = (lp - (z - c) * (z - c) * half_precision - top).exp();
        total += w;
        first += c * w;
    }
    let mean = (first / total).clamp(prior.min_symbol(), prior.max_symbol());
    // centered second moment; never negative
    let mut second = 0.0;
    for (c, lp) in prior.alphabet().iter().zip(prior.log_probabilities()) {
        let w = (lp - (z - c) * (z - c) * half_precision - top).exp();
        second += (c - mean) * (c - mean) * w;
    }
    SoftEstimate {
        value: mean,
        variance: second / total,
    }
}

/// Distances of the soft value to the smallest and largest alphabet symbol,
/// `(E{X|z} - c_min, c_max - E{X|z})`, each summed directly from the
/// posterior weights so they stay resolvable where the soft value itself
/// rounds to a symbol.
pub fn posterior_margins(
    z: f64,
    sigma_n2: f64,
    prior: &DiscreteSparsePrior,
) -> Result<(f64, f64)> {
    check_inputs(z, sigma_n2)?;
    let half_precision = 0.5 / sigma_n2;
    let top = max_log_weight(z, half_precision, prior);
    let (lo, hi) = (prior.min_symbol(), prior.max_symbol());
    let mut total = 0.0;
    let mut below = 0.0;
    let mut above = 0.0;
    for (c, lp) in prior.alphabet().iter().zip(prior.log_probabilities()) {
        let w = (lp - (z - c) * (z - c) * half_precision - top).exp();
        total += w;
        below += (c - lo) * w;
        above += (hi - c) * w;
    }
    Ok((below / total, above / total))
}

// Trapezoid nodes per mixture component over +-MSE_SPAN standard deviations.
const MSE_NODES: usize = 1601;
const MSE_SPAN: f64 = 10.0;

/// Average biased error variance `E_Z{var{X | Z}}`, the MMSE of the soft
/// value at noise level `sigma_n2`.
///
/// Integrates each mixture component of `Z` in standardized coordinates with
/// the trapezoid rule, which converges geometrically for these smooth,
/// Gaussian-decaying integrands.
pub fn average_mse(prior: &DiscreteSparsePrior, sigma_n2: f64) -> Result<f64> {
    check_inputs(0.0, sigma_n2)?;
    let sigma = sigma_n2.sqrt();
    let step = 2.0 * MSE_SPAN / (MSE_NODES - 1) as f64;
    let norm = step / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = 0.0;
    for (c, p) in prior.alphabet().iter().zip(prior.probabilities()) {
        if *p == 0.0 {
            continue;
        }
        let mut component = 0.0;
        for i in 0..MSE_NODES {
            let t = -MSE_SPAN + i as f64 * step;
            let edge = if i == 0 || i == MSE_NODES - 1 { 0.5 } else { 1.0 };
            let var = moments_unchecked(c + sigma * t, sigma_n2, prior).variance;
            component += edge * (-0.5 * t * t).exp() * var;
        }
        acc += p * component * norm;
    }
    Ok(acc.clamp(0.0, prior.variance()))
}

/// Tabulated [`average_mse`] over a log-spaced range of noise variances,
/// for callers that need the MMSE at many noise levels.
///
/// Stores `ln(mse / sigma_n2)`, which is smooth in `ln sigma_n2` even where
/// the MMSE decays exponentially, and interpolates it linearly.
#[derive(Debug, Clone)]
pub struct MseTable {
    prior_variance: f64,
    log_min: f64,
    log_step: f64,
    log_ratios: Vec<f64>,
}

impl MseTable {
    const LOG10_MIN: f64 = -8.0;
    const LOG10_MAX: f64 = 4.0;
    const PER_DECADE: usize = 64;

    pub fn new(prior: &DiscreteSparsePrior) -> Self {
        let n = (Self::LOG10_MAX - Self::LOG10_MIN) as usize * Self::PER_DECADE + 1;
        let log_min = Self::LOG10_MIN * std::f64::consts::LN_10;
        let log_step = std::f64::consts::LN_10 / Self::PER_DECADE as f64;
        let log_ratios = (0..n)
            .map(|i| {
                let s2 = (log_min + i as f64 * log_step).exp();
                let mse = average_mse(prior, s2).expect("table noise levels are positive");
                (mse / s2).max(f64::MIN_POSITIVE).ln()
            })
            .collect();
        Self {
            prior_variance: prior.variance(),
            log_min,
            log_step,
            log_ratios,
        }
    }

    pub fn mse(&self, sigma_n2: f64) -> f64 {
        let pos = (sigma_n2.ln() - self.log_min) / self.log_step;
        if pos <= 0.0 {
            return self.log_ratios[0].exp() * sigma_n2;
        }
        let last = self.log_ratios.len() - 1;
        if pos >= last as f64 {
            // Gaussian-signal asymptote, exact to leading order
            let sx2 = self.prior_variance;
            return sx2 * sigma_n2 / (sx2 + sigma_n2);
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        let log_ratio = self.log_ratios[i] + frac * (self.log_ratios[i + 1] - self.log_ratios[i]);
        (log_ratio.exp() * sigma_n2).min(self.prior_variance)
    }
}
