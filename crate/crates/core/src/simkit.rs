//! Seeded compressed-sensing instances and Monte Carlo SER campaigns.
//!
//! Every trial draws its instance from a ChaCha20 stream keyed by a seed
//! derived from the master seed and the trial index only (see
//! [`trial_seed`]). The matrix and signal are drawn before the unit-variance
//! noise, which is then scaled to the requested level, so one trial index
//! yields the same matrix, signal and noise shape at every SNR point, and
//! every variant sees the bit-identical instance.

use faer::Mat;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::denoiser::DiscreteSparsePrior;
use crate::error::{invalid, Result};
use crate::recovery::{symbol_errors, Recoverer, RecoveryConfig, RecoveryVariant};

/// Identifier of the per-trial seed derivation, recorded in run metadata.
pub const SEED_RULE: &str = "splitmix64(master + (trial+1)*0x9e3779b97f4a7c15) -> chacha20";

/// One realization of `y = A x + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsInstance {
    /// K x L, unit-norm columns.
    pub a: Mat<f64>,
    pub x_true: Vec<f64>,
    pub w: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma_w2: f64,
}

/// Seed of trial `trial`: output `trial + 1` of a SplitMix64 stream started
/// at `master`.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    let mut z = master.wrapping_add(trial.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws a Gaussian measurement matrix with unit-norm columns, an exactly
/// `s`-sparse signal with support uniform over all `s`-subsets and nonzeros
/// uniform over `nonzero_alphabet`, and Gaussian noise of variance
/// `sigma_w2`.
pub fn gen_instance(
    k: usize,
    l: usize,
    s: usize,
    nonzero_alphabet: &[f64],
    sigma_w2: f64,
    seed: u64,
) -> Result<CsInstance> {
    if k == 0 || l == 0 || k > l {
        return Err(invalid(format!("need 0 < K <= L, got K={k}, L={l}")));
    }
    if s == 0 || s > l {
        return Err(invalid(format!("need 0 < s <= L, got s={s}, L={l}")));
    }
    if nonzero_alphabet.is_empty() || nonzero_alphabet.iter().any(|c| *c == 0.0 || !c.is_finite()) {
        return Err(invalid("nonzero alphabet must be nonempty, finite and exclude 0"));
    }
    if !(sigma_w2 >= 0.0 && sigma_w2.is_finite()) {
        return Err(invalid(format!("noise variance must be nonnegative, got {sigma_w2}")));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut a = Mat::<f64>::zeros(k, l);
    for j in 0..l {
        for i in 0..k {
            a[(i, j)] = rng.sample(StandardNormal);
        }
        let norm = a.col(j).norm_l2();
        for i in 0..k {
            a[(i, j)] /= norm;
        }
    }

    let mut x_true = vec![0.0; l];
    for pos in index::sample(&mut rng, l, s) {
        x_true[pos] = nonzero_alphabet[rng.random_range(0..nonzero_alphabet.len())];
    }

    let sigma = sigma_w2.sqrt();
    let w: Vec<f64> = (0..k)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let y = (0..k)
        .map(|i| (0..l).map(|j| a[(i, j)] * x_true[j]).sum::<f64>() + w[i])
        .collect();

    Ok(CsInstance {
        a,
        x_true,
        w,
        y,
        sigma_w2,
    })
}

/// Problem dimensions and iteration budget shared by every trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepParams {
    pub k: usize,
    pub l: usize,
    pub s: usize,
    pub nonzero_alphabet: Vec<f64>,
    pub iterations: usize,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            k: 129,
            l: 258,
            s: 15,
            nonzero_alphabet: vec![-1.0, 1.0],
            iterations: 50,
        }
    }
}

impl SweepParams {
    pub fn prior(&self) -> Result<DiscreteSparsePrior> {
        DiscreteSparsePrior::from_sparsity(&self.nonzero_alphabet, self.s, self.l)
    }

    fn recoverers(&self, variants: &[RecoveryVariant]) -> Result<Vec<Recoverer>> {
        let prior = self.prior()?;
        variants
            .iter()
            .map(|&v| Recoverer::new(prior.clone(), RecoveryConfig::new(v).with_iterations(self.iterations)))
            .collect()
    }
}

/// Measurement-noise variance for a point on the `10 log10(1/sigma_w2)` axis.
pub fn snr_db_to_noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub variant: RecoveryVariant,
    pub snr_db: f64,
    /// Completed trials.
    pub trials: usize,
    pub failed: usize,
    pub symbol_errors: u64,
    /// `symbol_errors / (trials * L)`.
    pub ser: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Ordered by SNR point, then by the requested variant order.
    pub points: Vec<SweepPoint>,
    pub master_seed: u64,
    pub seed_rule: &'static str,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.points.iter().map(|p| p.failed).sum()
    }

    pub fn point(&self, variant: RecoveryVariant, snr_db: f64) -> Option<&SweepPoint> {
        self.points
            .iter()
            .find(|p| p.variant == variant && p.snr_db == snr_db)
    }

    pub fn curve(&self, variant: RecoveryVariant) -> Vec<&SweepPoint> {
        self.points.iter().filter(|p| p.variant == variant).collect()
    }
}

/// Runs `f` on a pool of `workers` threads (`0` = rayon's default).
fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Per-trial outcome: for every variant, the per-iteration symbol errors
/// (last entry = final estimate), or `None` if the run failed.
type TrialOutcome = Vec<Option<Vec<u64>>>;

fn run_trials(
    recoverers: &[Recoverer],
    params: &SweepParams,
    snr_db: f64,
    trials: usize,
    master_seed: u64,
) -> Result<Vec<TrialOutcome>> {
    let sigma_w2 = snr_db_to_noise_variance(snr_db);
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let inst = gen_instance(
                params.k,
                params.l,
                params.s,
                &params.nonzero_alphabet,
                sigma_w2,
                trial_seed(master_seed, t as u64),
            )?;
            Ok(recoverers
                .iter()
                .map(|rec| {
                    rec.recover(inst.a.as_ref(), &inst.y, sigma_w2, Some(&inst.x_true))
                        .ok()
                        .map(|out| {
                            let mut per_iter: Vec<u64> = out
                                .trace
                                .records
                                .iter()
                                .map(|r| r.symbol_errors.unwrap_or(0) as u64)
                                .collect();
                            per_iter.push(symbol_errors(&out.estimate, &inst.x_true) as u64);
                            per_iter
                        })
                })
                .collect())
        })
        .collect()
}

fn validate_campaign(trials: usize, params: &SweepParams) -> Result<()> {
    if trials == 0 {
        return Err(invalid("trials per point must be at least 1"));
    }
    if params.iterations == 0 {
        return Err(invalid("iterations must be at least 1"));
    }
    Ok(())
}

/// SER versus noise level for each variant, with paired instances.
pub fn run_sweep(
    variants: &[RecoveryVariant],
    snr_grid_db: &[f64],
    trials_per_point: usize,
    params: &SweepParams,
    master_seed: u64,
    workers: usize,
) -> Result<SweepResult> {
    validate_campaign(trials_per_point, params)?;
    let mut result = SweepResult {
        points: Vec::new(),
        master_seed,
        seed_rule: SEED_RULE,
    };
    if variants.is_empty() {
        return Ok(result);
    }
    let recoverers = params.recoverers(variants)?;
    for &snr_db in snr_grid_db {
        let outcomes = with_pool(workers, || {
            run_trials(&recoverers, params, snr_db, trials_per_point, master_seed)
        })??;
        for (v, &variant) in variants.iter().enumerate() {
            let mut point = SweepPoint {
                variant,
                snr_db,
                trials: 0,
                failed: 0,
                symbol_errors: 0,
                ser: 0.0,
            };
            for trial in &outcomes {
                match &trial[v] {
                    Some(per_iter) => {
                        point.trials += 1;
                        point.symbol_errors += per_iter[per_iter.len() - 1];
                    }
                    None => point.failed += 1,
                }
            }
            if point.trials > 0 {
                point.ser = point.symbol_errors as f64 / (point.trials * params.l) as f64;
            }
            result.points.push(point);
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceCurve {
    pub variant: RecoveryVariant,
    pub trials: usize,
    pub failed: usize,
    /// Mean SER after iteration `i + 1`.
    pub mean_ser: Vec<f64>,
}

impl ConvergenceCurve {
    /// First 1-based iteration whose SER is within `rel` of the final one.
    pub fn iterations_to_within(&self, rel: f64) -> Option<usize> {
        let last = *self.mean_ser.last()?;
        self.mean_ser
            .iter()
            .position(|s| *s <= last * (1.0 + rel))
            .map(|i| i + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceResult {
    pub snr_db: f64,
    pub curves: Vec<ConvergenceCurve>,
    pub master_seed: u64,
    pub seed_rule: &'static str,
}

impl ConvergenceResult {
    pub fn curve(&self, variant: RecoveryVariant) -> Option<&ConvergenceCurve> {
        self.curves.iter().find(|c| c.variant == variant)
    }
}

/// Mean SER after every iteration at one noise level. Trial instances are
/// those [`run_sweep`] uses at the same SNR and master seed.
pub fn run_convergence(
    variants: &[RecoveryVariant],
    snr_db: f64,
    trials: usize,
    params: &SweepParams,
    master_seed: u64,
    workers: usize,
) -> Result<ConvergenceResult> {
    validate_campaign(trials, params)?;
    let mut result = ConvergenceResult {
        snr_db,
        curves: Vec::new(),
        master_seed,
        seed_rule: SEED_RULE,
    };
    if variants.is_empty() {
        return Ok(result);
    }
    let recoverers = params.recoverers(variants)?;
    let outcomes = with_pool(workers, || {
        run_trials(&recoverers, params, snr_db, trials, master_seed)
    })??;
    let n_iter = params.iterations;
    for (v, &variant) in variants.iter().enumerate() {
        let mut totals = vec![0u64; n_iter];
        let (mut done, mut failed) = (0, 0);
        for trial in &outcomes {
            let Some(per_iter) = &trial[v] else {
                failed += 1;
                continue;
            };
            done += 1;
            let traced = &per_iter[..per_iter.len() - 1];
            for (i, slot) in totals.iter_mut().enumerate() {
                // an early-stopped run keeps its last estimate
                *slot += traced.get(i).copied().unwrap_or(per_iter[per_iter.len() - 1]);
            }
        }
        let denom = (done * params.l).max(1) as f64;
        result.curves.push(ConvergenceCurve {
            variant,
            trials: done,
            failed,
            mean_ser: totals.iter().map(|e| *e as f64 / denom).collect(),
        });
    }
    Ok(result)
}

/// SNR (dB) at which a SER curve crosses `target`, by linear interpolation
/// of `log10(SER)` between the first bracketing pair of grid points.
pub fn interpolate_snr_at_ser(curve: &[(f64, f64)], target: f64) -> Option<f64> {
    let lt = target.log10();
    curve.windows(2).find_map(|w| {
        let ((x0, s0), (x1, s1)) = (w[0], w[1]);
        if s0 >= target && s1 <= target && s0 > 0.0 {
            if s1 <= 0.0 {
                return Some(x1);
            }
            let (l0, l1) = (s0.log10(), s1.log10());
            if l0 == l1 {
                return Some(x0);
            }
            Some(x0 + (lt - l0) / (l1 - l0) * (x1 - x0))
        } else {
            None
        }
    })
}
