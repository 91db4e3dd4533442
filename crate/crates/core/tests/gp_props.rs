//! GP prior checks against oracles that never touch a Cholesky factor.

use cricket_gp::gp::{
    chol_factor, conditional_forecast_log, conditional_moments, correlation_factor, covariance_matrix,
    latent_to_log_mu2_with, GpHyper,
};
use cricket_gp::linalg::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Solves `A X = B` by Gauss-Jordan elimination with partial pivoting and
/// returns `(X, log|det A|)`.
fn gauss_solve(a: &[Vec<f64>], b: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let n = a.len();
    let m = b[0].len();
    let mut aug: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, s)| r.iter().chain(s).copied().collect()).collect();
    let mut log_det = 0.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs())).unwrap();
        aug.swap(col, piv);
        let p = aug[col][col];
        log_det += p.abs().ln();
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                if f != 0.0 {
                    let pivot_row = aug[col].clone();
                    for (v, pv) in aug[r].iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
    }
    (aug.into_iter().map(|r| r[n..n + m].to_vec()).collect(), log_det)
}

fn kernel(h: &GpHyper<f64>, i: usize, j: usize) -> f64 {
    let gap = i.abs_diff(j) as f64;
    h.sigma * h.sigma * (-(gap / h.ell).powf(h.alpha)).exp()
}

fn hyper() -> impl Strategy<Value = GpHyper<f64>> {
    (5.0f64..80.0, 0.05f64..1.0, 0.5f64..60.0, 1.0f64..=2.0).prop_map(|(l, s, e, a)| GpHyper::new(l, s, e, a).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn covariance_is_symmetric_and_stationary(h in hyper(), n in 2usize..40) {
        let k = covariance_matrix(n, &h);
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(k[(i, j)], k[(j, i)]);
                if i + 1 < n && j + 1 < n {
                    prop_assert_eq!(k[(i, j)], k[(i + 1, j + 1)]);
                }
            }
        }
    }

    #[test]
    fn toeplitz_factor_matches_dense_factor(h in hyper(), n in 1usize..60) {
        let fast = correlation_factor(n, &h).unwrap();
        let corr = GpHyper { sigma: 1.0, ..h };
        let dense = chol_factor(&covariance_matrix(n, &corr)).unwrap();
        let back = fast.matmul(&fast.transpose());
        prop_assert!(back.max_abs_diff(&covariance_matrix(n, &corr)) <= 1e-4 + 1e-12);
        if dense.jitter == 1e-8 {
            prop_assert!(fast.max_abs_diff(&dense.lower) < 1e-6);
        }
    }
}

/// Density of `log mu2` under the whitened map equals the multivariate
/// normal density computed by elimination.
#[test]
fn whitened_map_has_the_prior_density() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(17);
    for (n, ell, alpha) in [(6, 3.0, 1.0), (12, 8.0, 1.5), (10, 2.5, 1.9)] {
        let h = GpHyper::new(30.0, 0.35, ell, alpha).unwrap();
        let factor = correlation_factor(n, &h).unwrap();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut y = vec![0.0; n];
        latent_to_log_mu2_with(&factor, &z, &h, &mut y);

        let log_det_l: f64 = (0..n).map(|i| (h.sigma * factor[(i, i)]).ln()).sum();
        let via_white = -0.5 * z.iter().map(|v| v * v).sum::<f64>() - log_det_l;

        let k: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| kernel(&h, i, j)).collect()).collect();
        let r: Vec<Vec<f64>> = y.iter().map(|v| vec![v - h.lambda.ln()]).collect();
        let (sol, log_det_k) = gauss_solve(&k, &r);
        let quad: f64 = r.iter().zip(&sol).map(|(a, b)| a[0] * b[0]).sum();
        let direct = -0.5 * quad - 0.5 * log_det_k;
        assert!((via_white - direct).abs() < 1e-6, "n={n}: {via_white} vs {direct}");
    }
}

/// Exponential kernel: the process is AR(1), so only the last value matters.
#[test]
fn exponential_kernel_forecast_is_autoregressive() {
    let h = GpHyper::new(40.0, 0.3, 12.0, 1.0).unwrap();
    let past = [3.5, 3.8, 3.6, 3.9, 3.75];
    let (mean, cov) = conditional_moments(&past, &h, 3).unwrap();
    let rho = (-1.0f64 / 12.0).exp();
    let base = 40f64.ln();
    for (f, m) in mean.iter().enumerate() {
        let want = base + rho.powi(f as i32 + 1) * (past[4] - base);
        assert!((m - want).abs() < 1e-6, "step {f}: {m} vs {want}");
    }
    assert!((cov[(0, 0)] - 0.09 * (1.0 - rho * rho)).abs() < 1e-6);
}

/// General case against textbook Gaussian conditioning by elimination.
#[test]
fn conditional_moments_match_gaussian_conditioning() {
    let h = GpHyper::new(25.0, 0.4, 6.0, 1.6).unwrap();
    let past = [3.1, 3.4, 3.0, 3.3, 3.6, 3.2, 3.5];
    let (n, hz) = (past.len(), 3);
    let (mean, cov) = conditional_moments(&past, &h, hz).unwrap();

    let k11: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| kernel(&h, i, j)).collect()).collect();
    let k12: Vec<Vec<f64>> = (0..n).map(|i| (0..hz).map(|f| kernel(&h, i, n + f)).collect()).collect();
    let (w, _) = gauss_solve(&k11, &k12);
    let base = h.lambda.ln();
    for f in 0..hz {
        let want = base + (0..n).map(|i| w[i][f] * (past[i] - base)).sum::<f64>();
        assert!((mean[f] - want).abs() < 1e-5, "mean {f}");
        for g in 0..hz {
            let want = kernel(&h, n + f, n + g) - (0..n).map(|i| k12[i][f] * w[i][g]).sum::<f64>();
            assert!((cov[(f, g)] - want).abs() < 1e-5, "cov {f},{g}");
        }
    }
}

/// Joint forecasting of two steps and forecasting one step at a time give
/// the same distribution for the second step.
#[test]
fn joint_and_sequential_forecasts_agree() {
    let h = GpHyper::new(35.0, 0.3, 5.0, 1.4).unwrap();
    let past = [3.4, 3.6, 3.5, 3.8];
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(99);
    let n = 40_000;
    let mut joint = Vec::with_capacity(n);
    let mut seq = Vec::with_capacity(n);
    for _ in 0..n {
        joint.push(conditional_forecast_log(&past, &h, 2, &mut rng).unwrap()[1]);
        let first = conditional_forecast_log(&past, &h, 1, &mut rng).unwrap()[0];
        let mut extended = past.to_vec();
        extended.push(first);
        seq.push(conditional_forecast_log(&extended, &h, 1, &mut rng).unwrap()[0]);
    }
    let moments = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64)
    };
    let ((mj, vj), (ms, vs)) = (moments(&joint), moments(&seq));
    let (exact_mean, exact_cov) = conditional_moments(&past, &h, 2).unwrap();
    let se = (exact_cov[(1, 1)] / n as f64).sqrt();
    assert!((mj - exact_mean[1]).abs() < 4.0 * se);
    assert!((ms - exact_mean[1]).abs() < 4.0 * se);
    assert!((vj / exact_cov[(1, 1)] - 1.0).abs() < 0.05);
    assert!((vs / exact_cov[(1, 1)] - 1.0).abs() < 0.05);
}

#[test]
fn identity_factor_when_uncorrelated() {
    let h = GpHyper::new(20.0, 0.5, 1e-4, 2.0).unwrap();
    let l = correlation_factor(5, &h).unwrap();
    assert!(l.max_abs_diff(&Matrix::identity(5)) < 1e-7);
}
