use std::fmt;
use std::str::FromStr;

use super::posterior::{average_mse, moments_unchecked, posterior_margins};
use super::{unbias_noise, unbias_signal, DiscreteSparsePrior, GuardConfig};
use crate::error::{invalid, Error, Result};

/// Which soft value a characteristic curve shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CurveMode {
    Biased,
    SignalUnbiased,
    NoiseUnbiased,
}

impl CurveMode {
    pub const ALL: [CurveMode; 3] = [
        CurveMode::Biased,
        CurveMode::SignalUnbiased,
        CurveMode::NoiseUnbiased,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CurveMode::Biased => "biased",
            CurveMode::SignalUnbiased => "xu",
            CurveMode::NoiseUnbiased => "nu",
        }
    }
}

impl fmt::Display for CurveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CurveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "biased" => Ok(CurveMode::Biased),
            "xu" | "signal" => Ok(CurveMode::SignalUnbiased),
            "nu" | "noise" => Ok(CurveMode::NoiseUnbiased),
            other => Err(invalid(format!(
                "unknown curve mode '{other}' (expected biased, xu or nu)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub z: f64,
    pub value: f64,
    pub variance: f64,
    /// `value - inf(curve)` for the biased and signal-unbiased curves,
    /// computed without cancellation.
    pub lower_margin: f64,
    /// `sup(curve) - value`, likewise.
    pub upper_margin: f64,
}

/// Evaluates the soft-value map `z -> estimate(z)` and its pointwise error
/// variance over `z_grid`.
pub fn characteristic_curve(
    prior: &DiscreteSparsePrior,
    sigma_n2: f64,
    z_grid: &[f64],
    mode: CurveMode,
    guard: &GuardConfig,
) -> Result<Vec<CurvePoint>> {
    if z_grid.iter().any(|z| !z.is_finite()) {
        return Err(invalid("grid must be finite"));
    }
    if z_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("grid must be sorted"));
    }
    let mse = average_mse(prior, sigma_n2)?;
    let (lo, hi) = (prior.min_symbol(), prior.max_symbol());
    // the signal-unbiased curve is this fixed positive multiple of the biased one
    let signal_gain = signal_gain(mse, prior.variance(), guard);
    z_grid
        .iter()
        .map(|&z| {
            let biased = moments_unchecked(z, sigma_n2, prior);
            let (below, above) = posterior_margins(z, sigma_n2, prior)?;
            let point = match mode {
                CurveMode::Biased => CurvePoint {
                    z,
                    value: biased.value,
                    variance: biased.variance,
                    lower_margin: below,
                    upper_margin: above,
                },
                CurveMode::SignalUnbiased => {
                    let u = unbias_signal(biased, mse, prior.variance(), guard)?;
                    CurvePoint {
                        z,
                        value: u.value,
                        variance: u.variance,
                        lower_margin: signal_gain * below,
                        upper_margin: signal_gain * above,
                    }
                }
                CurveMode::NoiseUnbiased => {
                    let u = unbias_noise(biased, mse, z, sigma_n2, guard)?;
                    CurvePoint {
                        z,
                        value: u.value,
                        variance: u.variance,
                        lower_margin: u.value - lo,
                        upper_margin: hi - u.value,
                    }
                }
            };
            Ok(point)
        })
        .collect()
}

fn signal_gain(mse: f64, sigma_x2: f64, guard: &GuardConfig) -> f64 {
    let m = if guard.clamping_enabled {
        mse.clamp(guard.var_floor, guard.var_ceiling_ratio * sigma_x2)
    } else {
        mse
    };
    sigma_x2 / (sigma_x2 - m)
}

/// `n` evenly spaced points from `start` to `stop` inclusive.
pub fn linear_grid(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (n - 1) as f64;
            (0..n).map(|i| start + i as f64 * step).collect()
        }
    }
}

/// True if the curve is strictly increasing along the grid. Adjacent values
/// that round to the same float are ordered by their margins.
pub fn is_strictly_increasing(points: &[CurvePoint]) -> bool {
    points.windows(2).all(|w| {
        let (a, b) = (&w[0], &w[1]);
        b.value > a.value
            || (b.value == a.value
                && (b.upper_margin < a.upper_margin || b.lower_margin > a.lower_margin))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3_prior() -> DiscreteSparsePrior {
        DiscreteSparsePrior::symmetric_ternary(0.1).unwrap()
    }

    #[test]
    fn biased_curve_is_odd() {
        let grid = linear_grid(-2.0, 2.0, 401);
        let pts = characteristic_curve(&fig3_prior(), 0.1, &grid, CurveMode::Biased, &GuardConfig::default()).unwrap();
        for (p, q) in pts.iter().zip(pts.iter().rev()) {
            assert!((p.value + q.value).abs() < 1e-12);
        }
    }

    #[test]
    fn biased_and_signal_curves_increase() {
        let grid = linear_grid(-2.0, 2.0, 401);
        for s2 in [0.1, 0.01] {
            for mode in [CurveMode::Biased, CurveMode::SignalUnbiased] {
                let pts = characteristic_curve(&fig3_prior(), s2, &grid, mode, &GuardConfig::default()).unwrap();
                assert!(is_strictly_increasing(&pts), "{mode} at {s2}");
            }
        }
    }

    #[test]
    fn noise_curve_is_not_monotonic() {
        let grid = linear_grid(-2.0, 2.0, 401);
        let pts = characteristic_curve(&fig3_prior(), 0.1, &grid, CurveMode::NoiseUnbiased, &GuardConfig::default()).unwrap();
        assert!(pts.windows(2).any(|w| w[0].value > w[1].value));
    }

    #[test]
    fn unbiased_curves_approach_biased_at_high_snr() {
        let grid = linear_grid(-2.0, 2.0, 401);
        let gap = |s2: f64, mode| {
            let b = characteristic_curve(&fig3_prior(), s2, &grid, CurveMode::Biased, &GuardConfig::default()).unwrap();
            let u = characteristic_curve(&fig3_prior(), s2, &grid, mode, &GuardConfig::default()).unwrap();
            b.iter().zip(&u).map(|(p, q)| (p.value - q.value).abs()).fold(0.0, f64::max)
        };
        for mode in [CurveMode::SignalUnbiased, CurveMode::NoiseUnbiased] {
            assert!(gap(0.01, mode) < gap(0.1, mode));
        }
    }

    #[test]
    fn grid_validation() {
        let g = GuardConfig::default();
        assert!(characteristic_curve(&fig3_prior(), 0.1, &[0.0, -1.0], CurveMode::Biased, &g).is_err());
        assert!(characteristic_curve(&fig3_prior(), 0.1, &[f64::NAN], CurveMode::Biased, &g).is_err());
        assert_eq!(linear_grid(-2.0, 2.0, 1), vec![-2.0]);
        assert_eq!(linear_grid(-2.0, 2.0, 5), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in CurveMode::ALL {
            assert_eq!(m.as_str().parse::<CurveMode>().unwrap(), m);
        }
        assert!("median".parse::<CurveMode>().is_err());
    }
}
