//! Iterative recovery of a discrete sparse vector: alternate the unbiased
//! linear MMSE stage with scalar soft feedback, optionally bias-compensating
//! the feedback, then quantize the final soft values.

use std::fmt;
use std::str::FromStr;

use faer::MatRef;

use crate::denoiser::{
    posterior_moments, unbias_noise, unbias_noise_avg, unbias_signal, DiscreteSparsePrior,
    GuardConfig, MseTable, SoftEstimate,
};
use crate::error::{invalid, Error, Result};
use crate::lmmse::lmmse_unbiased;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecoveryVariant {
    /// Biased soft feedback.
    Ims,
    /// Individual signal-based unbiasing.
    XuIms,
    /// Individual noise-based unbiasing.
    NuIms,
    /// Noise-based unbiasing with vector-averaged variances.
    Tms,
}

impl RecoveryVariant {
    pub const ALL: [RecoveryVariant; 4] = [
        RecoveryVariant::Ims,
        RecoveryVariant::XuIms,
        RecoveryVariant::NuIms,
        RecoveryVariant::Tms,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RecoveryVariant::Ims => "ims",
            RecoveryVariant::XuIms => "xuims",
            RecoveryVariant::NuIms => "nuims",
            RecoveryVariant::Tms => "tms",
        }
    }
}

impl fmt::Display for RecoveryVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecoveryVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RecoveryVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown variant '{s}' (expected one of ims,xuims,nuims,tms)")))
    }
}

/// Feedback variance assigned to every element before the first iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitVariance {
    /// The prior variance `sigma_x2`.
    #[default]
    PriorVariance,
    /// The off-zero probability mass `s/L`; equal to `sigma_x2` for
    /// unit-magnitude alphabets.
    SparsityRatio,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryConfig {
    pub variant: RecoveryVariant,
    pub max_iterations: usize,
    /// Stop once the relative change of the feedback values drops below this.
    pub early_stop_tol: Option<f64>,
    pub guard: GuardConfig,
    pub init_variance: InitVariance,
}

impl RecoveryConfig {
    pub fn new(variant: RecoveryVariant) -> Self {
        Self {
            variant,
            max_iterations: 50,
            early_stop_tol: None,
            guard: GuardConfig::default(),
            init_variance: InitVariance::default(),
        }
    }

    pub fn with_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be at least 1"));
        }
        if let Some(tol) = self.early_stop_tol {
            if !(tol >= 0.0 && tol.is_finite()) {
                return Err(invalid(format!("early_stop_tol must be nonnegative, got {tol}")));
            }
        }
        self.guard.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    /// Symbol errors of the quantized biased soft values, if the truth was
    /// supplied.
    pub symbol_errors: Option<usize>,
    pub ser: Option<f64>,
    pub mean_feedback_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryOutput {
    /// Quantized estimate, every entry an alphabet symbol.
    pub estimate: Vec<f64>,
    pub trace: IterationTrace,
}

/// Nearest alphabet symbol for every value. Ties go to the symbol of smaller
/// magnitude, then to the smaller symbol.
pub fn quantize(values: &[f64], alphabet: &[f64]) -> Vec<f64> {
    values.iter().map(|&v| nearest_symbol(v, alphabet)).collect()
}

fn nearest_symbol(v: f64, alphabet: &[f64]) -> f64 {
    let mut best = alphabet[0];
    let mut best_dist = (v - best).abs();
    for &c in &alphabet[1..] {
        let d = (v - c).abs();
        if d < best_dist || (d == best_dist && (c.abs() < best.abs() || (c.abs() == best.abs() && c < best))) {
            best = c;
            best_dist = d;
        }
    }
    best
}

pub fn symbol_errors(estimate: &[f64], truth: &[f64]) -> usize {
    estimate.iter().zip(truth).filter(|(a, b)| a != b).count()
}

/// Recovery engine for one prior and configuration. Building it tabulates
/// the average soft-value MSE once so that repeated runs share it.
#[derive(Debug, Clone)]
pub struct Recoverer {
    prior: DiscreteSparsePrior,
    cfg: RecoveryConfig,
    mse: Option<MseTable>,
}

type FeedbackStep<'a> =
    dyn Fn(&[SoftEstimate], &[f64], &[f64]) -> Result<(Vec<f64>, Vec<f64>)> + 'a;

impl Recoverer {
    pub fn new(prior: DiscreteSparsePrior, cfg: RecoveryConfig) -> Result<Self> {
        cfg.validate()?;
        let mse = matches!(cfg.variant, RecoveryVariant::XuIms | RecoveryVariant::NuIms)
            .then(|| MseTable::new(&prior));
        Ok(Self { prior, cfg, mse })
    }

    pub fn prior(&self) -> &DiscreteSparsePrior {
        &self.prior
    }

    pub fn config(&self) -> &RecoveryConfig {
        &self.cfg
    }

    pub fn recover(
        &self,
        a: MatRef<'_, f64>,
        y: &[f64],
        sigma_w2: f64,
        truth: Option<&[f64]>,
    ) -> Result<RecoveryOutput> {
        self.iterate(a, y, sigma_w2, truth, &|biased, z, noise_var| {
            self.variant_step(biased, z, noise_var)
        })
    }

    /// Line 5 of the algorithm: map the biased feedback to the pair that is
    /// fed to the next linear stage.
    fn variant_step(
        &self,
        biased: &[SoftEstimate],
        z: &[f64],
        noise_var: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let guard = &self.cfg.guard;
        let noise_at = |l: usize| if noise_var.len() == 1 { noise_var[0] } else { noise_var[l] };
        match self.cfg.variant {
            RecoveryVariant::Ims => Ok(biased.iter().map(|e| (e.value, e.variance)).unzip()),
            RecoveryVariant::XuIms => {
                let table = self.mse.as_ref().expect("table built for xuims");
                let sx2 = self.prior.variance();
                biased
                    .iter()
                    .enumerate()
                    .map(|(l, e)| {
                        let m = table.mse(noise_at(l));
                        let u = unbias_signal(*e, m, sx2, guard)?;
                        Ok((u.value, u.variance))
                    })
                    .collect::<Result<Vec<_>>>()
                    .map(|v| v.into_iter().unzip())
            }
            RecoveryVariant::NuIms => {
                let table = self.mse.as_ref().expect("table built for nuims");
                biased
                    .iter()
                    .enumerate()
                    .map(|(l, e)| {
                        let s2 = noise_at(l);
                        let m = table.mse(s2);
                        let u = unbias_noise(*e, m, z[l], s2, guard)?;
                        Ok((u.value, u.variance))
                    })
                    .collect::<Result<Vec<_>>>()
                    .map(|v| v.into_iter().unzip())
            }
            RecoveryVariant::Tms => {
                let values: Vec<f64> = biased.iter().map(|e| e.value).collect();
                let avg_b = mean(biased.iter().map(|e| e.variance)).max(guard.var_floor);
                let avg_n = mean(noise_var.iter().copied());
                let (vals, var) = unbias_noise_avg(&values, z, avg_b, avg_n, guard)?;
                let n = vals.len();
                Ok((vals, vec![var; n]))
            }
        }
    }

    fn iterate(
        &self,
        a: MatRef<'_, f64>,
        y: &[f64],
        sigma_w2: f64,
        truth: Option<&[f64]>,
        step: &FeedbackStep<'_>,
    ) -> Result<RecoveryOutput> {
        let l = a.ncols();
        if y.len() != a.nrows() {
            return Err(invalid(format!("y has length {} but A has {} rows", y.len(), a.nrows())));
        }
        if let Some(t) = truth {
            if t.len() != l {
                return Err(invalid(format!("truth has length {} but A has {l} columns", t.len())));
            }
        }
        let guard = &self.cfg.guard;
        let averaged = self.cfg.variant == RecoveryVariant::Tms;
        let init = match self.cfg.init_variance {
            InitVariance::PriorVariance => self.prior.variance(),
            InitVariance::SparsityRatio => self.prior.nonzero_mass(),
        };

        let mut fb_values = vec![0.0; l];
        let mut fb_vars = vec![init; l];
        let mut biased = vec![SoftEstimate { value: 0.0, variance: init }; l];
        let mut trace = IterationTrace::default();

        for iteration in 1..=self.cfg.max_iterations {
            let prior_var: Vec<f64> = if averaged {
                vec![mean(fb_vars.iter().copied()).max(guard.var_floor); l]
            } else {
                fb_vars.iter().map(|v| v.max(guard.var_floor)).collect()
            };
            let linear = lmmse_unbiased(a, y, sigma_w2, &fb_values, &prior_var, guard)?;
            let noise_var = if averaged {
                vec![mean(linear.variances.iter().copied())]
            } else {
                linear.variances
            };
            for (j, slot) in biased.iter_mut().enumerate() {
                let s2 = if averaged { noise_var[0] } else { noise_var[j] };
                *slot = posterior_moments(linear.values[j], s2, &self.prior)?;
            }
            let (next_values, next_vars) = step(&biased, &linear.values, &noise_var)?;
            if next_values.iter().chain(&next_vars).any(|v| !v.is_finite()) {
                return Err(Error::NumericalFailure(format!(
                    "non-finite feedback in iteration {iteration}"
                )));
            }

            let errors = truth.map(|t| {
                symbol_errors(&quantize_biased(&biased, self.prior.alphabet()), t)
            });
            trace.records.push(IterationRecord {
                iteration,
                symbol_errors: errors,
                ser: errors.map(|e| e as f64 / l as f64),
                mean_feedback_variance: mean(next_vars.iter().copied()),
            });

            let converged = self.cfg.early_stop_tol.is_some_and(|tol| {
                let change = l2_distance(&next_values, &fb_values);
                let scale = l2_norm(&fb_values).max(f64::MIN_POSITIVE);
                change / scale < tol
            });
            fb_values = next_values;
            fb_vars = next_vars;
            if converged {
                break;
            }
        }

        Ok(RecoveryOutput {
            estimate: quantize_biased(&biased, self.prior.alphabet()),
            trace,
        })
    }
}

/// Runs one recovery; see [`Recoverer`] for repeated runs.
pub fn recover(
    y: &[f64],
    a: MatRef<'_, f64>,
    sigma_w2: f64,
    prior: &DiscreteSparsePrior,
    cfg: &RecoveryConfig,
    truth: Option<&[f64]>,
) -> Result<RecoveryOutput> {
    Recoverer::new(prior.clone(), cfg.clone())?.recover(a, y, sigma_w2, truth)
}

fn quantize_biased(biased: &[SoftEstimate], alphabet: &[f64]) -> Vec<f64> {
    biased.iter().map(|e| nearest_symbol(e.value, alphabet)).collect()
}

fn mean(it: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = it.len();
    it.sum::<f64>() / n as f64
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::Mat;

    fn ternary() -> DiscreteSparsePrior {
        DiscreteSparsePrior::from_sparsity(&[-1.0, 1.0], 2, 8).unwrap()
    }

    #[test]
    fn quantizer_rules() {
        let c = [-1.0, 0.0, 1.0];
        assert_eq!(quantize(&[0.4], &c), vec![0.0]);
        assert_eq!(quantize(&[0.5, -0.5], &c), vec![0.0, 0.0]);
        assert_eq!(quantize(&c, &c), c.to_vec());
        assert_eq!(quantize(&[7.0, -3.0], &c), vec![1.0, -1.0]);
        // equal magnitude tie goes to the smaller symbol
        assert_eq!(quantize(&[0.0], &[-1.0, 1.0]), vec![-1.0]);
    }

    #[test]
    fn variant_names() {
        for v in RecoveryVariant::ALL {
            assert_eq!(v.as_str().parse::<RecoveryVariant>().unwrap(), v);
        }
        let err = "bamp".parse::<RecoveryVariant>().unwrap_err();
        assert!(err.to_string().contains("ims,xuims,nuims,tms"));
    }

    #[test]
    fn noiseless_identity_channel_recovers_in_one_iteration() {
        let a = Mat::from_fn(8, 8, |i, j| if i == j { 1.0 } else { 0.0 });
        let x = [0.0, 1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0];
        for variant in RecoveryVariant::ALL {
            let cfg = RecoveryConfig::new(variant).with_iterations(1);
            let out = recover(&x, a.as_ref(), 1e-8, &ternary(), &cfg, Some(&x)).unwrap();
            assert_eq!(out.estimate, x.to_vec(), "{variant}");
            assert_eq!(out.trace.records[0].ser, Some(0.0));
        }
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let a = Mat::from_fn(4, 8, |i, j| ((i * 8 + j) as f64 * 0.7).sin() / 2.0);
        for variant in RecoveryVariant::ALL {
            let out = recover(&[0.0; 4], a.as_ref(), 0.01, &ternary(), &RecoveryConfig::new(variant), None).unwrap();
            assert!(out.estimate.iter().all(|v| *v == 0.0), "{variant}");
            assert_eq!(out.trace.len(), 50);
        }
    }

    #[test]
    fn ims_matches_pass_through_feedback_bit_for_bit() {
        let a = Mat::from_fn(6, 8, |i, j| ((i * 8 + j) as f64 * 1.3).cos() / 6f64.sqrt());
        let x = [0.0, 1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0];
        let y: Vec<f64> = (0..6)
            .map(|i| (0..8).map(|j| a[(i, j)] * x[j]).sum::<f64>() + 0.05 * ((i as f64) - 2.5))
            .collect();
        let rec = Recoverer::new(ternary(), RecoveryConfig::new(RecoveryVariant::Ims)).unwrap();
        let direct = rec.recover(a.as_ref(), &y, 0.01, Some(&x)).unwrap();
        let pinned = rec
            .iterate(a.as_ref(), &y, 0.01, Some(&x), &|b, _, _| {
                Ok((b.iter().map(|e| e.value).collect(), b.iter().map(|e| e.variance).collect()))
            })
            .unwrap();
        assert_eq!(direct, pinned);
    }

    #[test]
    fn early_stop_truncates_only_when_enabled() {
        let a = Mat::from_fn(6, 8, |i, j| ((i * 8 + j) as f64 * 1.3).cos() / 6f64.sqrt());
        let mut cfg = RecoveryConfig::new(RecoveryVariant::NuIms);
        let full = recover(&[0.0; 6], a.as_ref(), 0.01, &ternary(), &cfg, None).unwrap();
        assert_eq!(full.trace.len(), 50);
        cfg.early_stop_tol = Some(1e-6);
        let y = [0.3, -0.2, 0.5, 0.1, 0.0, -0.4];
        let short = recover(&y, a.as_ref(), 0.01, &ternary(), &cfg, None).unwrap();
        assert!(short.trace.len() < 50);
    }

    #[test]
    fn rejects_bad_configuration() {
        let a = Mat::<f64>::zeros(2, 3);
        let cfg = RecoveryConfig::new(RecoveryVariant::Ims).with_iterations(0);
        assert!(recover(&[0.0; 2], a.as_ref(), 0.1, &ternary(), &cfg, None).is_err());
        let cfg = RecoveryConfig::new(RecoveryVariant::Ims);
        assert!(recover(&[0.0; 3], a.as_ref(), 0.1, &ternary(), &cfg, None).is_err());
        assert!(recover(&[0.0; 2], a.as_ref(), 0.1, &ternary(), &cfg, Some(&[0.0])).is_err());
    }
}
