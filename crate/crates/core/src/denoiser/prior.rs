use rand::Rng;

use crate::error::{invalid, Result};

const SUM_TOL: f64 = 1e-12;

/// Distribution of a single element of a discrete sparse signal.
///
/// The alphabet is sorted, contains `0` and is symmetric about zero with
/// matching probabilities, so the prior is zero-mean.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSparsePrior {
    alphabet: Vec<f64>,
    probabilities: Vec<f64>,
    // ln p(c); `-inf` for zero-probability symbols
    log_probabilities: Vec<f64>,
    variance: f64,
}

impl DiscreteSparsePrior {
    pub fn new(alphabet: Vec<f64>, probabilities: Vec<f64>) -> Result<Self> {
        if alphabet.is_empty() {
            return Err(invalid("alphabet is empty"));
        }
        if alphabet.len() != probabilities.len() {
            return Err(invalid(format!(
                "alphabet has {} symbols but {} probabilities were given",
                alphabet.len(),
                probabilities.len()
            )));
        }
        if alphabet.iter().any(|c| !c.is_finite()) {
            return Err(invalid("alphabet values must be finite"));
        }
        if probabilities
            .iter()
            .any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0)
        {
            return Err(invalid("probabilities must lie in [0, 1]"));
        }
        if alphabet.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("alphabet must be strictly increasing"));
        }
        if !alphabet.contains(&0.0) {
            return Err(invalid("alphabet must contain 0"));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(invalid(format!("probabilities sum to {total}, not 1")));
        }
        let n = alphabet.len();
        for i in 0..n / 2 {
            let j = n - 1 - i;
            if (alphabet[i] + alphabet[j]).abs() > SUM_TOL
                || (probabilities[i] - probabilities[j]).abs() > SUM_TOL
            {
                return Err(invalid(
                    "only priors symmetric about zero are supported",
                ));
            }
        }
        let mean: f64 = alphabet.iter().zip(&probabilities).map(|(c, p)| c * p).sum();
        if mean.abs() > SUM_TOL {
            return Err(invalid(format!("prior mean {mean} is not zero")));
        }
        let variance: f64 = alphabet
            .iter()
            .zip(&probabilities)
            .map(|(c, p)| c * c * p)
            .sum();
        if variance <= 0.0 {
            return Err(invalid("prior variance must be positive"));
        }
        let log_probabilities = probabilities.iter().map(|p| p.ln()).collect();
        Ok(Self {
            alphabet,
            probabilities,
            log_probabilities,
            variance,
        })
    }

    /// Prior of an `s`-sparse length-`len` signal whose nonzero entries are
    /// uniform over `nonzero_alphabet`: `p(c) = (s/len) / |nonzero|` for
    /// `c != 0`.
    pub fn from_sparsity(nonzero_alphabet: &[f64], s: usize, len: usize) -> Result<Self> {
        if len == 0 || s == 0 || s > len {
            return Err(invalid(format!("need 0 < s <= L, got s={s}, L={len}")));
        }
        if nonzero_alphabet.is_empty() || nonzero_alphabet.contains(&0.0) {
            return Err(invalid("nonzero alphabet must be nonempty and exclude 0"));
        }
        let mut symbols = nonzero_alphabet.to_vec();
        symbols.push(0.0);
        symbols.sort_by(f64::total_cmp);
        if symbols.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("nonzero alphabet contains duplicates"));
        }
        let ratio = s as f64 / len as f64;
        let each = ratio / nonzero_alphabet.len() as f64;
        let probabilities = symbols
            .iter()
            .map(|&c| if c == 0.0 { 1.0 - ratio } else { each })
            .collect();
        Self::new(symbols, probabilities)
    }

    /// `{-1, 0, +1}` with `p(-1) = p(+1) = p_each`.
    pub fn symmetric_ternary(p_each: f64) -> Result<Self> {
        if !(p_each > 0.0 && p_each <= 0.5) {
            return Err(invalid(format!("p(+-1) = {p_each} outside (0, 0.5]")));
        }
        Self::new(vec![-1.0, 0.0, 1.0], vec![p_each, 1.0 - 2.0 * p_each, p_each])
    }

    pub fn alphabet(&self) -> &[f64] {
        &self.alphabet
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub(crate) fn log_probabilities(&self) -> &[f64] {
        &self.log_probabilities
    }

    /// Prior variance `E{X^2}`.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Probability mass off zero, i.e. the sparsity ratio `s/L`.
    pub fn nonzero_mass(&self) -> f64 {
        self.alphabet
            .iter()
            .zip(&self.probabilities)
            .filter(|(c, _)| **c != 0.0)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn min_symbol(&self) -> f64 {
        self.alphabet[0]
    }

    pub fn max_symbol(&self) -> f64 {
        self.alphabet[self.alphabet.len() - 1]
    }

    /// Draws one element from the prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (c, p) in self.alphabet.iter().zip(&self.probabilities) {
            acc += p;
            if u < acc {
                return *c;
            }
        }
        self.max_symbol()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparsity_prior_matches_ratio() {
        let prior = DiscreteSparsePrior::from_sparsity(&[-1.0, 1.0], 15, 258).unwrap();
        assert_eq!(prior.alphabet(), &[-1.0, 0.0, 1.0]);
        assert!((prior.nonzero_mass() - 15.0 / 258.0).abs() < 1e-15);
        assert!((prior.variance() - 15.0 / 258.0).abs() < 1e-15);
        assert!((prior.probabilities()[0] - 7.5 / 258.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_malformed_priors() {
        assert!(DiscreteSparsePrior::new(vec![-1.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteSparsePrior::new(vec![0.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteSparsePrior::new(vec![-1.0, 0.0, 1.0], vec![0.2, 0.5, 0.2]).is_err());
        assert!(DiscreteSparsePrior::new(vec![1.0, 0.0, -1.0], vec![0.1, 0.8, 0.1]).is_err());
        assert!(DiscreteSparsePrior::new(vec![-1.0, 0.0, 2.0], vec![0.1, 0.8, 0.1]).is_err());
        assert!(DiscreteSparsePrior::new(vec![0.0], vec![1.0]).is_err());
        assert!(DiscreteSparsePrior::from_sparsity(&[-1.0, 0.0, 1.0], 2, 10).is_err());
        assert!(DiscreteSparsePrior::from_sparsity(&[-1.0, 1.0], 11, 10).is_err());
    }

    #[test]
    fn five_level_alphabet() {
        let prior = DiscreteSparsePrior::from_sparsity(&[-2.0, -1.0, 1.0, 2.0], 4, 40).unwrap();
        assert!((prior.variance() - 0.1 * 2.5).abs() < 1e-15);
    }
}
