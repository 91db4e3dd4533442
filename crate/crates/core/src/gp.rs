//! Gaussian-process prior on log eye-in ability.
//!
//! `log mu2_t` is a GP with constant mean `log(lambda)` and powered
//! exponential covariance `sigma^2 exp(-|j - k|^alpha / ell^alpha)` over
//! innings indices. Sampling works in whitened coordinates: with
//! `L L^T = K + jitter I`, the latent vector `z ~ N(0, I)` maps to
//! `log mu2 = log(lambda) + L z`.
//!
//! Only the correlation matrix (`sigma = 1`) is factorised; the factor of
//! `K` is that factor scaled by `sigma`, so changing `sigma` never triggers
//! a refactorisation.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{toeplitz_cholesky, Matrix};
use crate::scalar::Real;

/// Relative jitter tried first, as a fraction of `sigma^2`.
pub const BASE_JITTER: f64 = 1e-8;
/// Largest relative jitter before giving up.
pub const MAX_JITTER: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpHyper<F> {
    /// Median eye-in ability (the GP mean is `log(lambda)`).
    pub lambda: F,
    /// Marginal standard deviation of `log mu2`.
    pub sigma: F,
    /// Length scale, in innings.
    pub ell: F,
    /// Smoothness exponent in [1, 2].
    pub alpha: F,
}

impl<F: Real> GpHyper<F> {
    pub fn new(lambda: F, sigma: F, ell: F, alpha: F) -> Result<Self> {
        let h = Self { lambda, sigma, ell, alpha };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        let zero = F::zero();
        if !(self.lambda > zero && self.sigma >= zero && self.ell > zero) {
            return Err(Error::InvalidParameter(format!(
                "GP hyperparameters need lambda > 0, sigma >= 0, ell > 0 (got {}, {}, {})",
                self.lambda, self.sigma, self.ell
            )));
        }
        if !(self.alpha >= F::one() && self.alpha <= F::lit(2.0)) {
            return Err(Error::InvalidParameter(format!("alpha must lie in [1, 2], got {}", self.alpha)));
        }
        Ok(())
    }

    fn factor_error(&self, jitter: f64) -> Error {
        Error::Factorisation {
            ell: self.ell.to_f64_lossy(),
            alpha: self.alpha.to_f64_lossy(),
            sigma: self.sigma.to_f64_lossy(),
            jitter,
        }
    }
}

/// `exp(-(|j - k| / ell)^alpha)`.
#[inline]
pub fn correlation<F: Real>(gap: usize, ell: F, alpha: F) -> F {
    if gap == 0 {
        return F::one();
    }
    (-(F::from_count(gap) / ell).powf(alpha)).exp()
}

/// Correlation matrix over innings `1..=n`.
pub fn correlation_matrix<F: Real>(n: usize, ell: F, alpha: F) -> Matrix<F> {
    let by_gap: Vec<F> = (0..n).map(|g| correlation(g, ell, alpha)).collect();
    Matrix::from_fn(n, n, |j, k| by_gap[j.abs_diff(k)])
}

/// Covariance matrix `K` over innings `1..=n`.
pub fn covariance_matrix<F: Real>(n: usize, h: &GpHyper<F>) -> Matrix<F> {
    let s2 = h.sigma * h.sigma;
    let by_gap: Vec<F> = (0..n).map(|g| s2 * correlation(g, h.ell, h.alpha)).collect();
    Matrix::from_fn(n, n, |j, k| by_gap[j.abs_diff(k)])
}

/// Cholesky factor together with the absolute jitter that was added.
#[derive(Debug, Clone)]
pub struct CholeskyFactor<F> {
    pub lower: Matrix<F>,
    pub jitter: F,
}

/// Factorises `K + jitter I`, starting at `1e-8 * sigma^2` and escalating by
/// tenfold steps up to `1e-4 * sigma^2`, where `sigma^2` is the largest
/// diagonal entry. Returns the jitter multiple that failed last on error.
fn factor_escalating<F: Real>(k: &Matrix<F>) -> std::result::Result<CholeskyFactor<F>, f64> {
    let scale = (0..k.rows()).fold(F::zero(), |m, i| m.max(k[(i, i)]));
    let mut rel = BASE_JITTER;
    loop {
        let jitter = F::lit(rel) * scale;
        if let Some(lower) = k.cholesky_jittered(jitter) {
            return Ok(CholeskyFactor { lower, jitter });
        }
        if rel >= MAX_JITTER * 0.999 {
            return Err(rel);
        }
        rel *= 10.0;
    }
}

/// Jittered Cholesky factor of a covariance matrix.
pub fn chol_factor<F: Real>(k: &Matrix<F>) -> Result<CholeskyFactor<F>> {
    factor_escalating(k).map_err(|jitter| {
        let s2 = (0..k.rows()).fold(F::zero(), |m, i| m.max(k[(i, i)]));
        Error::Factorisation { ell: f64::NAN, alpha: f64::NAN, sigma: s2.sqrt().to_f64_lossy(), jitter }
    })
}

/// Factor of the correlation matrix for given `(ell, alpha)`, with the same
/// jitter schedule as [`chol_factor`].
pub fn correlation_factor<F: Real>(n: usize, h: &GpHyper<F>) -> Result<Matrix<F>> {
    let col: Vec<F> = (0..n).map(|g| correlation(g, h.ell, h.alpha)).collect();
    let mut rel = BASE_JITTER;
    loop {
        if let Some(lower) = toeplitz_cholesky(&col, F::lit(rel)) {
            return Ok(lower);
        }
        if rel >= MAX_JITTER * 0.999 {
            return Err(h.factor_error(rel));
        }
        rel *= 10.0;
    }
}

/// Small cache of correlation factors keyed by `(n, ell, alpha)`.
///
/// Holds two entries so that a rejected hyperparameter proposal followed by
/// a return to the previous state does not refactorise.
#[derive(Debug, Clone)]
pub struct FactorCache<F> {
    entries: Vec<((usize, F, F), Matrix<F>)>,
    hits: u64,
    misses: u64,
}

impl<F: Real> Default for FactorCache<F> {
    fn default() -> Self {
        Self { entries: Vec::with_capacity(2), hits: 0, misses: 0 }
    }
}

impl<F: Real> FactorCache<F> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn factor(&mut self, n: usize, h: &GpHyper<F>) -> Result<&Matrix<F>> {
        let key = (n, h.ell, h.alpha);
        if let Some(pos) = self.entries.iter().position(|(k, _)| *k == key) {
            self.hits += 1;
            if pos != 0 {
                self.entries.swap(0, pos);
            }
            return Ok(&self.entries[0].1);
        }
        self.misses += 1;
        let l = correlation_factor(n, h)?;
        if self.entries.len() == 2 {
            self.entries.pop();
        }
        self.entries.insert(0, (key, l));
        Ok(&self.entries[0].1)
    }

    /// `(hits, misses)`.
    pub fn stats(&self) -> (u64, u64) {
        (self.hits, self.misses)
    }
}

/// `log mu2 = log(lambda) + sigma * L_corr z`, written into `out`.
pub fn latent_to_log_mu2_with<F: Real>(corr_factor: &Matrix<F>, z: &[F], h: &GpHyper<F>, out: &mut [F]) {
    corr_factor.lower_mul_vec_into(z, out);
    let base = h.lambda.ln();
    for v in out.iter_mut() {
        *v = base + h.sigma * *v;
    }
}

/// Eye-in abilities implied by a whitened latent vector.
pub fn latent_to_mu2<F: Real>(z: &[F], h: &GpHyper<F>) -> Result<Vec<F>> {
    h.validate()?;
    let l = correlation_factor(z.len(), h)?;
    let mut out = vec![F::zero(); z.len()];
    latent_to_log_mu2_with(&l, z, h, &mut out);
    Ok(out.into_iter().map(F::exp).collect())
}

/// Mean and covariance of `log mu2` at innings `T+1..=T+horizon` given the
/// realised `log mu2` at `1..=T`.
pub fn conditional_moments<F: Real>(log_mu2_past: &[F], h: &GpHyper<F>, horizon: usize) -> Result<(Vec<F>, Matrix<F>)> {
    let n = log_mu2_past.len();
    let joint = correlation_factor(n + horizon, h)?;
    let white = past_whitened(&joint, log_mu2_past, h);
    let base = h.lambda.ln();
    let mean = (0..horizon)
        .map(|f| {
            let row = joint.row(n + f);
            base + h.sigma * row[..n].iter().zip(&white).fold(F::zero(), |acc, (&a, &b)| acc + a * b)
        })
        .collect();
    let s2 = h.sigma * h.sigma;
    let cov = Matrix::from_fn(horizon, horizon, |a, b| {
        let (ra, rb) = (joint.row(n + a), joint.row(n + b));
        let upto = a.min(b) + n + 1;
        s2 * (n..upto).fold(F::zero(), |acc, k| acc + ra[k] * rb[k])
    });
    Ok((mean, cov))
}

/// Whitened coordinates of the realised past under the joint factor.
fn past_whitened<F: Real>(joint: &Matrix<F>, log_mu2_past: &[F], h: &GpHyper<F>) -> Vec<F> {
    let n = log_mu2_past.len();
    if n == 0 || h.sigma == F::zero() {
        return vec![F::zero(); n];
    }
    let base = h.lambda.ln();
    let centred: Vec<F> = log_mu2_past.iter().map(|&v| (v - base) / h.sigma).collect();
    // leading n x n block of the joint factor is the factor of the past
    let mut x = vec![F::zero(); n];
    for i in 0..n {
        let row = joint.row(i);
        let s = (0..i).fold(centred[i], |acc, j| acc - row[j] * x[j]);
        x[i] = s / row[i];
    }
    x
}

/// Draws `mu2` at innings `T+1..=T+horizon` from the GP conditional given
/// the realised `log mu2` at `1..=T`.
pub fn conditional_forecast_log<F: Real, R: Rng + ?Sized>(
    log_mu2_past: &[F],
    h: &GpHyper<F>,
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<F>> {
    let n = log_mu2_past.len();
    let joint = correlation_factor(n + horizon, h)?;
    let mut white = past_whitened(&joint, log_mu2_past, h);
    white.extend((0..horizon).map(|_| F::lit(rng.sample::<f64, _>(StandardNormal))));
    let base = h.lambda.ln();
    Ok((0..horizon)
        .map(|f| {
            let row = joint.row(n + f);
            base + h.sigma * row[..=n + f].iter().zip(&white).fold(F::zero(), |acc, (&a, &b)| acc + a * b)
        })
        .collect())
}

/// Forecast of `mu2` for the `horizon` innings after the fitted latent vector `z`.
pub fn conditional_forecast<F: Real, R: Rng + ?Sized>(
    z: &[F],
    h: &GpHyper<F>,
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<F>> {
    h.validate()?;
    let l = correlation_factor(z.len(), h)?;
    let mut past = vec![F::zero(); z.len()];
    latent_to_log_mu2_with(&l, z, h, &mut past);
    Ok(conditional_forecast_log(&past, h, horizon, rng)?.into_iter().map(F::exp).collect())
}
