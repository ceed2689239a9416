//! Scalar soft feedback for discrete sparse priors under Gaussian noise,
//! with signal- and noise-based bias compensation.

mod curve;
mod posterior;
mod prior;
mod unbias;

pub use curve::{characteristic_curve, is_strictly_increasing, linear_grid, CurveMode, CurvePoint};
pub use posterior::{average_mse, posterior_margins, posterior_moments, MseTable};
pub use prior::DiscreteSparsePrior;
pub use unbias::{unbias_noise, unbias_noise_avg, unbias_signal, unbias_signal_avg};

use crate::error::{invalid, Result};

/// A soft value together with the error variance attached to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftEstimate {
    pub value: f64,
    pub variance: f64,
}

/// Numerical guards around the singularities of the unbiasing factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardConfig {
    /// Lower clamp on any variance.
    pub var_floor: f64,
    /// Upper clamp of the biased variance relative to the reference variance
    /// (`sigma_x2` or `sigma_n2`) before the unbiasing factor is formed.
    pub var_ceiling_ratio: f64,
    pub clamping_enabled: bool,
}

impl Default for GuardConfig {
    fn default() -> Self {
        Self {
            var_floor: 1e-12,
            var_ceiling_ratio: 1.0 - 1e-6,
            clamping_enabled: true,
        }
    }
}

impl GuardConfig {
    pub fn new(var_floor: f64, var_ceiling_ratio: f64, clamping_enabled: bool) -> Result<Self> {
        let guard = Self {
            var_floor,
            var_ceiling_ratio,
            clamping_enabled,
        };
        guard.validate()?;
        Ok(guard)
    }

    /// Default thresholds with clamping switched off.
    pub fn unclamped() -> Self {
        Self {
            clamping_enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.var_floor > 0.0 && self.var_floor.is_finite()) {
            return Err(invalid(format!("var_floor must be positive, got {}", self.var_floor)));
        }
        if !(self.var_ceiling_ratio > 0.0 && self.var_ceiling_ratio < 1.0) {
            return Err(invalid(format!(
                "var_ceiling_ratio must lie in (0, 1), got {}",
                self.var_ceiling_ratio
            )));
        }
        Ok(())
    }
}
