use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use softcs::denoiser::GuardConfig;
use softcs::lmmse::lmmse_unbiased;

fn gaussian_matrix(k: usize, l: usize, rng: &mut ChaCha20Rng) -> Mat<f64> {
    let mut a = Mat::<f64>::zeros(k, l);
    for j in 0..l {
        for i in 0..k {
            a[(i, j)] = rng.sample::<f64, _>(StandardNormal) / (k as f64).sqrt();
        }
    }
    a
}

/// Inverse by Gauss-Jordan with partial pivoting and one refinement step.
fn invert(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut aug: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| aug[a][col].abs().total_cmp(&aug[b][col].abs()))
            .unwrap();
        aug.swap(col, piv);
        let p = aug[col][col];
        aug[col].iter_mut().for_each(|v| *v /= p);
        for row in 0..n {
            if row != col {
                let f = aug[row][col];
                let pivot_row = aug[col].clone();
                aug[row].iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
            }
        }
    }
    let x: Vec<Vec<f64>> = aug.into_iter().map(|r| r[n..].to_vec()).collect();
    // X <- X (2I - M X)
    let mx: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| m[i][k] * x[k][j]).sum()).collect())
        .collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    2.0 * x[i][j] - (0..n).map(|k| x[i][k] * mx[k][j]).sum::<f64>()
                })
                .collect()
        })
        .collect()
}

struct Oracle {
    values: Vec<f64>,
    variances: Vec<f64>,
    gains: Vec<f64>,
}

fn oracle(a: &Mat<f64>, y: &[f64], s2: f64, m: &[f64], phi: &[f64]) -> Oracle {
    let (k, l) = (a.nrows(), a.ncols());
    let b: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    (0..l).map(|c| a[(i, c)] * phi[c] * a[(j, c)]).sum::<f64>() + if i == j { s2 } else { 0.0 }
                })
                .collect()
        })
        .collect();
    let bi = invert(&b);
    let r: Vec<f64> = (0..k).map(|i| y[i] - (0..l).map(|c| a[(i, c)] * m[c]).sum::<f64>()).collect();
    let bir: Vec<f64> = (0..k).map(|i| (0..k).map(|j| bi[i][j] * r[j]).sum()).collect();
    let mut out = Oracle { values: vec![], variances: vec![], gains: vec![] };
    for c in 0..l {
        let xb = m[c] + phi[c] * (0..k).map(|i| a[(i, c)] * bir[i]).sum::<f64>();
        let q: f64 = (0..k)
            .map(|i| a[(i, c)] * (0..k).map(|j| bi[i][j] * a[(j, c)]).sum::<f64>())
            .sum();
        let gain = phi[c] * q;
        out.values.push(m[c] + (xb - m[c]) / gain);
        out.variances.push(phi[c] * (1.0 - gain) / gain);
        out.gains.push(gain);
    }
    out
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn matches_brute_force_oracle() {
    let guard = GuardConfig::default();
    for seed in 0..20u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (k, l) = (8, 12);
        let a = gaussian_matrix(k, l, &mut rng);
        let y: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let m: Vec<f64> = (0..l).map(|_| rng.random_range(-1.0..1.0)).collect();
        let phi: Vec<f64> = (0..l).map(|_| rng.random_range(0.05..1.0)).collect();
        let s2 = rng.random_range(0.01..0.5);
        let got = lmmse_unbiased(a.as_ref(), &y, s2, &m, &phi, &guard).unwrap();
        let want = oracle(&a, &y, s2, &m, &phi);
        for c in 0..l {
            assert!(rel_close(got.values[c], want.values[c], 1e-10), "seed {seed} value {c}");
            assert!(rel_close(got.variances[c], want.variances[c], 1e-10), "seed {seed} variance {c}");
            assert!(rel_close(got.gains[c], want.gains[c], 1e-10), "seed {seed} gain {c}");
        }
    }
}

#[test]
fn estimates_are_unbiased_and_variances_calibrated() {
    let guard = GuardConfig::default();
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let (k, l, s2) = (48, 96, 0.05f64);
    let a = gaussian_matrix(k, l, &mut rng);
    let m: Vec<f64> = (0..l).map(|_| rng.random_range(-0.5..0.5)).collect();
    let phi: Vec<f64> = (0..l).map(|_| rng.random_range(0.1..1.0)).collect();

    let (mut sxy, mut sxx, mut sq_err, mut sum_var) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..2000 {
        let x: Vec<f64> = (0..l)
            .map(|c| m[c] + phi[c].sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let y: Vec<f64> = (0..k)
            .map(|i| (0..l).map(|c| a[(i, c)] * x[c]).sum::<f64>() + s2.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let out = lmmse_unbiased(a.as_ref(), &y, s2, &m, &phi, &guard).unwrap();
        for c in 0..l {
            let (u, v) = ((out.values[c] - m[c]) / phi[c].sqrt(), (x[c] - m[c]) / phi[c].sqrt());
            sxy += u * v;
            sxx += v * v;
            sq_err += (out.values[c] - x[c]).powi(2);
            sum_var += out.variances[c];
        }
    }
    let slope = sxy / sxx;
    assert!((slope - 1.0).abs() < 0.02, "slope {slope}");
    assert!((sq_err / sum_var - 1.0).abs() < 0.05, "mse/variance {}", sq_err / sum_var);
}

#[test]
fn variance_equals_harmonic_difference() {
    let guard = GuardConfig::default();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let (k, l, s2) = (16, 32, 0.1);
    let a = gaussian_matrix(k, l, &mut rng);
    let y: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    let m = vec![0.0; l];
    let phi: Vec<f64> = (0..l).map(|_| rng.random_range(0.05..1.0)).collect();
    let out = lmmse_unbiased(a.as_ref(), &y, s2, &m, &phi, &guard).unwrap();
    for c in 0..l {
        // Biased error variance phi (1 - k); unbiased is (1/biased - 1/phi)^-1.
        let biased = phi[c] * (1.0 - out.gains[c]);
        let harmonic = 1.0 / (1.0 / biased - 1.0 / phi[c]);
        assert!(rel_close(out.variances[c], harmonic, 1e-12), "{c}: {} vs {harmonic}", out.variances[c]);
    }
}
