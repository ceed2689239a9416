//! Unbiased linear MMSE estimation of `x` from `y = A x + w` given
//! per-element prior means and variances.
//!
//! With `Phi = diag(prior_var)` and `B = A Phi A^T + sigma_w2 I` (K x K, SPD),
//! the biased estimate is `x_b = m + Phi A^T B^-1 (y - A m)` and the
//! per-element gain is `k_l = phi_l a_l^T B^-1 a_l`. Unbiasing divides the
//! innovation by the gain:
//!
//! ```text
//! x_u,l   = m_l + (x_b,l - m_l) / k_l  = m_l + a_l^T B^-1 r / a_l^T B^-1 a_l
//! var_u,l = phi_l (1 - k_l) / k_l      = 1 / (a_l^T B^-1 a_l) - phi_l
//! ```
//!
//! The right-hand forms are what gets evaluated: they stay exact when a prior
//! variance collapses and the gain becomes tiny. Both quadratic forms come
//! from one Cholesky factor `B = L L^T` via `W = L^-1 A`.

use faer::linalg::matmul::triangular::{self, BlockStructure};
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Accum, Col, Mat, MatRef, Par, Side};

use crate::denoiser::GuardConfig;
use crate::error::{invalid, Error, Result};

/// Gains are reported clamped to `[GAIN_MIN, GAIN_MAX]`.
pub const GAIN_MIN: f64 = 1e-9;
pub const GAIN_MAX: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearStageOutput {
    /// Unbiased estimates `x_{L,U,l}`.
    pub values: Vec<f64>,
    /// Their error variances.
    pub variances: Vec<f64>,
    /// Biased per-element gains `k_l`, clamped to `[GAIN_MIN, GAIN_MAX]`.
    pub gains: Vec<f64>,
}

pub fn lmmse_unbiased(
    a: MatRef<'_, f64>,
    y: &[f64],
    sigma_w2: f64,
    prior_mean: &[f64],
    prior_var: &[f64],
    guard: &GuardConfig,
) -> Result<LinearStageOutput> {
    let (k, l) = (a.nrows(), a.ncols());
    if y.len() != k {
        return Err(invalid(format!("y has length {} but A has {k} rows", y.len())));
    }
    if prior_mean.len() != l || prior_var.len() != l {
        return Err(invalid(format!(
            "A has {l} columns but prior mean/variance have lengths {}/{}",
            prior_mean.len(),
            prior_var.len()
        )));
    }
    if !(sigma_w2 > 0.0 && sigma_w2.is_finite()) {
        return Err(invalid(format!("noise variance must be positive, got {sigma_w2}")));
    }
    if prior_var.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(invalid("prior variances must be positive and finite"));
    }
    if prior_mean.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(invalid("prior means and observations must be finite"));
    }

    let scaled = Mat::from_fn(k, l, |i, j| a[(i, j)] * prior_var[j].sqrt());
    let mut b = Mat::<f64>::zeros(k, k);
    triangular::matmul(
        b.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Replace,
        scaled.as_ref(),
        BlockStructure::Rectangular,
        scaled.transpose(),
        BlockStructure::Rectangular,
        1.0,
        Par::Seq,
    );
    for i in 0..k {
        b[(i, i)] += sigma_w2;
    }
    let chol = b
        .llt(Side::Lower)
        .map_err(|e| Error::NumericalFailure(format!("A Phi A^T + sigma_w2 I is not SPD: {e:?}")))?;
    let lower = chol.L();

    let mean = Col::from_fn(l, |j| prior_mean[j]);
    let mut residual = Col::from_fn(k, |i| y[i]);
    residual -= a * &mean;
    let mut whitened = a.to_owned();
    solve_lower_triangular_in_place(lower, whitened.as_mut(), Par::Seq);
    solve_lower_triangular_in_place(lower, residual.as_mat_mut(), Par::Seq);

    let mut out = LinearStageOutput {
        values: Vec::with_capacity(l),
        variances: Vec::with_capacity(l),
        gains: Vec::with_capacity(l),
    };
    for j in 0..l {
        let col = whitened.col(j);
        let q = col.squared_norm_l2();
        let t = col.transpose() * &residual;
        let phi = prior_var[j];
        let gain = phi * q;
        let ceiling_var = phi * (1.0 - GAIN_MAX) / GAIN_MAX;
        let (value, variance) = if q > 0.0 {
            (prior_mean[j] + t / q, (1.0 / q - phi).max(ceiling_var))
        } else {
            // zero column: the measurements say nothing about this element
            (prior_mean[j], phi * (1.0 - GAIN_MIN) / GAIN_MIN)
        };
        out.values.push(value);
        out.variances.push(variance.max(guard.var_floor));
        out.gains.push(gain.clamp(GAIN_MIN, GAIN_MAX));
    }
    if out.values.iter().chain(&out.variances).any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite linear stage output".into()));
    }
    Ok(out)
}
