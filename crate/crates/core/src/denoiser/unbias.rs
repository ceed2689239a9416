//! Bias compensation of conditional-mean soft values.
//!
//! Both flavours linearize the soft-value estimator around a reference
//! variable and undo the average scaling:
//!
//! * signal-based: `x_u = (1 - c_x) x_b`, with `c_x = mse / (mse - sigma_x2)`;
//!   the error of `x_u` is orthogonal to the signal.
//! * noise-based: `x_u = (1 - c_n) x_b + c_n z`, with
//!   `c_n = mse / (mse - sigma_n2)`; the error is orthogonal to the noise.
//!
//! `mse` is the *average* biased error variance `E_Z{var{X|Z}}` at the
//! current noise level. The attached variance is the pointwise one,
//! `(1 - c^2) var{X|z} + c^2 reference`. When every element carries the same
//! variance (`mse == est.variance`) this is the harmonic form
//! `(1/mse - 1/reference)^-1` used by the average-variance routines.

use super::{GuardConfig, SoftEstimate};
use crate::error::{invalid, Error, Result};

/// Applies the guard to the average biased variance before it is divided by
/// `mse - reference`.
fn guarded_mse(mse: f64, reference: f64, guard: &GuardConfig) -> Result<f64> {
    if !(reference > 0.0 && reference.is_finite()) {
        return Err(invalid(format!(
            "reference variance must be positive and finite, got {reference}"
        )));
    }
    if !(mse >= 0.0 && mse.is_finite()) {
        return Err(invalid(format!(
            "biased variance must be nonnegative and finite, got {mse}"
        )));
    }
    if guard.clamping_enabled {
        Ok(mse.clamp(guard.var_floor, guard.var_ceiling_ratio * reference))
    } else if mse >= reference {
        Err(Error::SingularUnbias {
            variance: mse,
            reference,
        })
    } else {
        Ok(mse)
    }
}

/// With clamping, the pointwise variance is held below the reference as
/// well, which keeps `(1 - c^2) var + c^2 reference >= var > 0`.
fn guarded_pointwise(var: f64, reference: f64, guard: &GuardConfig) -> f64 {
    if guard.clamping_enabled {
        var.clamp(guard.var_floor, guard.var_ceiling_ratio * reference)
    } else {
        var
    }
}

fn guarded_output_variance(var: f64, guard: &GuardConfig) -> Result<f64> {
    if guard.clamping_enabled {
        Ok(var.max(guard.var_floor))
    } else if var >= 0.0 {
        Ok(var)
    } else {
        Err(Error::NumericalFailure(format!(
            "unbiased variance {var} is negative"
        )))
    }
}

fn check_estimate(est: &SoftEstimate) -> Result<()> {
    if !est.value.is_finite() || !(est.variance >= 0.0 && est.variance.is_finite()) {
        return Err(invalid(format!("malformed soft estimate {est:?}")));
    }
    Ok(())
}

/// Signal-based unbiasing of one soft value.
///
/// `mse_b` is the average biased error variance at the noise level the soft
/// value was computed for; pass `est.variance` to use the element's own
/// variance.
pub fn unbias_signal(
    est: SoftEstimate,
    mse_b: f64,
    sigma_x2: f64,
    guard: &GuardConfig,
) -> Result<SoftEstimate> {
    check_estimate(&est)?;
    let mse = guarded_mse(mse_b, sigma_x2, guard)?;
    let pointwise = guarded_pointwise(est.variance, sigma_x2, guard);
    let c = mse / (mse - sigma_x2);
    let value = sigma_x2 / (sigma_x2 - mse) * est.value;
    let variance = (1.0 - c * c) * pointwise + c * c * sigma_x2;
    Ok(SoftEstimate {
        value,
        variance: guarded_output_variance(variance, guard)?,
    })
}

/// Noise-based unbiasing of one soft value computed from observation `z`
/// with noise variance `sigma_n2`.
pub fn unbias_noise(
    est: SoftEstimate,
    mse_b: f64,
    z: f64,
    sigma_n2: f64,
    guard: &GuardConfig,
) -> Result<SoftEstimate> {
    check_estimate(&est)?;
    if !z.is_finite() {
        return Err(invalid(format!("observation must be finite, got {z}")));
    }
    let mse = guarded_mse(mse_b, sigma_n2, guard)?;
    let pointwise = guarded_pointwise(est.variance, sigma_n2, guard);
    let c = mse / (mse - sigma_n2);
    let value = (1.0 - c) * est.value + c * z;
    let variance = (1.0 - c * c) * pointwise + c * c * sigma_n2;
    Ok(SoftEstimate {
        value,
        variance: guarded_output_variance(variance, guard)?,
    })
}

/// Signal-based unbiasing with one variance for the whole vector.
///
/// Returns the unbiased values and their common variance
/// `(1/avg_var_b - 1/sigma_x2)^-1`.
pub fn unbias_signal_avg(
    values: &[f64],
    avg_var_b: f64,
    sigma_x2: f64,
    guard: &GuardConfig,
) -> Result<(Vec<f64>, f64)> {
    if avg_var_b.is_nan() || avg_var_b <= 0.0 {
        return Err(invalid(format!("average variance must be positive, got {avg_var_b}")));
    }
    let var_b = guarded_mse(avg_var_b, sigma_x2, guard)?;
    let var_u = 1.0 / (1.0 / var_b - 1.0 / sigma_x2);
    let unbiased = values.iter().map(|x| var_u * x / var_b).collect();
    Ok((unbiased, var_u))
}

/// Noise-based unbiasing with one variance for the whole vector.
pub fn unbias_noise_avg(
    values: &[f64],
    observations: &[f64],
    avg_var_b: f64,
    avg_sigma_n2: f64,
    guard: &GuardConfig,
) -> Result<(Vec<f64>, f64)> {
    if values.len() != observations.len() {
        return Err(invalid(format!(
            "{} soft values but {} observations",
            values.len(),
            observations.len()
        )));
    }
    if avg_var_b.is_nan() || avg_var_b <= 0.0 {
        return Err(invalid(format!("average variance must be positive, got {avg_var_b}")));
    }
    let var_b = guarded_mse(avg_var_b, avg_sigma_n2, guard)?;
    let var_u = 1.0 / (1.0 / var_b - 1.0 / avg_sigma_n2);
    let unbiased = values
        .iter()
        .zip(observations)
        .map(|(x, z)| var_u * (x / var_b - z / avg_sigma_n2))
        .collect();
    Ok((unbiased, var_u))
}
