//! Nested sampling with Metropolis exploration inside the likelihood constraint.
//!
//! The prior is always the unit hypercube; problems map it to their own
//! parameter space with [`NestedProblem::prior_transform`]. Each iteration
//! discards the worst live point, credits it with prior mass
//! `X_{i-1} - X_i` where `log X_i = -i / n_live`, and replaces it by a
//! Metropolis walk started from a surviving live point that only accepts
//! moves whose likelihood exceeds the discarded one.

use std::io::Write;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{effective_sample_size, log_add_exp};

/// A target for nested sampling.
pub trait NestedProblem {
    /// Number of unit-cube coordinates.
    fn dimension(&self) -> usize;

    /// Maps a unit-cube point to a parameter point, written into `params`.
    fn prior_transform(&self, unit: &[f64], params: &mut Vec<f64>);

    /// Log-likelihood of a parameter point. Takes `&mut self` so problems
    /// can keep per-run caches.
    fn log_likelihood(&mut self, params: &[f64]) -> f64;
}

/// Sampler settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NsConfig {
    pub n_live: usize,
    /// Metropolis steps per replacement.
    pub mh_steps: usize,
    /// Stop once `max L_live * X < exp(termination_log_ratio) * Z`.
    pub termination_log_ratio: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl NsConfig {
    /// Desk-scale settings used by tests and as the CLI default.
    pub fn test_scale() -> Self {
        Self { n_live: 200, mh_steps: 100, termination_log_ratio: -5.0, max_iterations: 2_000_000, seed: 0 }
    }

    /// 1000 live points and 1000 Metropolis steps per iteration.
    pub fn full_scale() -> Self {
        Self { n_live: 1000, mh_steps: 1000, ..Self::test_scale() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_live < 2 {
            return Err(Error::InvalidParameter("n_live must be at least 2".into()));
        }
        if self.mh_steps < 1 {
            return Err(Error::InvalidParameter("mh_steps must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for NsConfig {
    fn default() -> Self {
        Self::test_scale()
    }
}

/// One discarded (or finally swept) point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsSample {
    pub params: Vec<f64>,
    pub log_likelihood: f64,
    /// Log of prior mass times likelihood (unnormalised posterior weight).
    pub log_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsResult {
    pub log_z: f64,
    pub log_z_err: f64,
    /// Kullback-Leibler divergence from prior to posterior, in nats.
    pub information: f64,
    pub samples: Vec<NsSample>,
    /// Number of discard iterations before the final sweep.
    pub iterations: usize,
    pub n_live: usize,
    /// `-iterations / n_live`, the log prior volume left at termination.
    pub log_volume: f64,
    /// True when `max_iterations` stopped the run.
    pub truncated: bool,
    /// Mean Metropolis acceptance fraction over replacements.
    pub acceptance: f64,
}

impl NsResult {
    /// Posterior weights normalised to sum to one.
    pub fn normalised_weights(&self) -> Vec<f64> {
        self.samples.iter().map(|s| (s.log_weight - self.log_z).exp()).collect::<Vec<_>>().normalise()
    }

    pub fn effective_sample_size(&self) -> f64 {
        effective_sample_size(&self.normalised_weights())
    }

    /// Weighted posterior mean of parameter `k`.
    pub fn posterior_mean(&self, k: usize) -> f64 {
        self.samples.iter().zip(self.normalised_weights()).map(|(s, w)| w * s.params[k]).sum()
    }
}

trait Normalise {
    fn normalise(self) -> Self;
}

impl Normalise for Vec<f64> {
    fn normalise(mut self) -> Self {
        let s: f64 = self.iter().sum();
        if s > 0.0 {
            self.iter_mut().for_each(|w| *w /= s);
        }
        self
    }
}

/// Progress snapshot passed to the callback.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Progress {
    pub iteration: usize,
    pub log_z: f64,
    pub threshold: f64,
    pub acceptance: f64,
}

/// Optional observers for a run.
#[derive(Default)]
pub struct Hooks<'a> {
    /// Called every `progress_every` iterations.
    pub progress: Option<Box<dyn FnMut(&Progress) + 'a>>,
    pub progress_every: usize,
    /// Receives one JSON line per iteration.
    pub run_log: Option<Box<dyn Write + 'a>>,
}

struct LivePoint {
    unit: Vec<f64>,
    params: Vec<f64>,
    log_l: f64,
}

fn finite_or_neg_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Reflects a coordinate back into [0, 1].
#[inline]
fn reflect_unit(x: f64) -> f64 {
    let y = x.rem_euclid(2.0);
    if y > 1.0 {
        2.0 - y
    } else {
        y
    }
}

/// Heavy-tailed block proposal in unit-cube coordinates.
fn propose<R: Rng>(rng: &mut R, current: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(current);
    let d = current.len();
    let k = if d == 1 || rng.gen_bool(0.5) {
        1
    } else {
        ((d as f64).powf(rng.gen::<f64>()).ceil() as usize).clamp(1, d)
    };
    // step scale log-uniform over four decades
    let scale = 10f64.powf(-4.0 * rng.gen::<f64>());
    let mut nudge = |i: usize, rng: &mut R| {
        let step: f64 = rng.sample(StandardNormal);
        out[i] = reflect_unit(out[i] + scale * step);
    };
    if k == 1 {
        let i = rng.gen_range(0..d);
        nudge(i, rng);
    } else {
        for i in index::sample(rng, d, k).into_iter() {
            nudge(i, rng);
        }
    }
}

pub fn run_nested_sampling<P: NestedProblem>(problem: &mut P, cfg: &NsConfig) -> Result<NsResult> {
    run_nested_sampling_with(problem, cfg, &mut Hooks::default())
}

pub fn run_nested_sampling_with<P: NestedProblem>(problem: &mut P, cfg: &NsConfig, hooks: &mut Hooks<'_>) -> Result<NsResult> {
    cfg.validate()?;
    let dim = problem.dimension();
    if dim == 0 {
        return Err(Error::InvalidParameter("problem dimension must be at least 1".into()));
    }
    let n = cfg.n_live;
    let nf = n as f64;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);

    let mut live: Vec<LivePoint> = (0..n)
        .map(|_| {
            let unit: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
            let mut params = Vec::with_capacity(dim);
            problem.prior_transform(&unit, &mut params);
            let log_l = finite_or_neg_inf(problem.log_likelihood(&params));
            LivePoint { unit, params, log_l }
        })
        .collect();

    // log(X_{i-1} - X_i) = -(i-1)/n + log(1 - e^{-1/n})
    let log_shell = (-(-1.0 / nf).exp_m1()).ln();
    let mut log_z = f64::NEG_INFINITY;
    let mut samples: Vec<NsSample> = Vec::new();
    let mut iteration = 0usize;
    let mut truncated = false;
    let mut accepted_total = 0u64;
    let mut proposed_total = 0u64;
    let mut idle_replacements = 0usize;
    let mut proposal = Vec::with_capacity(dim);
    let mut proposal_params = Vec::with_capacity(dim);

    loop {
        let (worst, min_l, max_l) = live.iter().enumerate().fold(
            (0usize, f64::INFINITY, f64::NEG_INFINITY),
            |(w, lo, hi), (i, p)| if p.log_l < lo { (i, p.log_l, hi.max(p.log_l)) } else { (w, lo, hi.max(p.log_l)) },
        );
        let log_x = -(iteration as f64) / nf;
        if min_l == max_l {
            // likelihood plateau: the remaining volume all carries this value
            break;
        }
        if log_z > f64::NEG_INFINITY && max_l + log_x < log_z + cfg.termination_log_ratio {
            break;
        }
        if iteration >= cfg.max_iterations {
            truncated = true;
            break;
        }

        let threshold = min_l;
        let log_w = log_x + log_shell + threshold;
        log_z = log_add_exp(log_z, log_w);
        samples.push(NsSample { params: live[worst].params.clone(), log_likelihood: threshold, log_weight: log_w });
        iteration += 1;

        let start = {
            let j = rng.gen_range(0..n - 1);
            if j >= worst {
                j + 1
            } else {
                j
            }
        };
        let mut unit = live[start].unit.clone();
        let mut params = live[start].params.clone();
        let mut log_l = live[start].log_l;
        let mut accepted = 0usize;
        for _ in 0..cfg.mh_steps {
            propose(&mut rng, &unit, &mut proposal);
            problem.prior_transform(&proposal, &mut proposal_params);
            let cand = finite_or_neg_inf(problem.log_likelihood(&proposal_params));
            if cand > threshold {
                std::mem::swap(&mut unit, &mut proposal);
                std::mem::swap(&mut params, &mut proposal_params);
                log_l = cand;
                accepted += 1;
            }
        }
        accepted_total += accepted as u64;
        proposed_total += cfg.mh_steps as u64;
        if accepted == 0 {
            idle_replacements += 1;
            if idle_replacements >= n {
                return Err(Error::Stagnation {
                    iteration,
                    reason: format!("no Metropolis move accepted in {n} consecutive replacements"),
                });
            }
        } else {
            idle_replacements = 0;
        }
        if !(log_l > threshold) {
            // walk never left a tied start point; the copy is still inside the
            // closed constraint, which only matters on plateaus
            log::debug!("replacement at iteration {iteration} tied with threshold");
        }
        live[worst] = LivePoint { unit, params, log_l };

        let acceptance = accepted as f64 / cfg.mh_steps as f64;
        if let Some(w) = hooks.run_log.as_mut() {
            let rec = Progress { iteration, log_z, threshold, acceptance };
            serde_json::to_writer(&mut *w, &rec)?;
            w.write_all(b"\n")?;
        }
        if let Some(cb) = hooks.progress.as_mut() {
            if hooks.progress_every > 0 && iteration % hooks.progress_every == 0 {
                cb(&Progress { iteration, log_z, threshold, acceptance });
            }
        }
    }

    // sweep the survivors in likelihood order, sharing the remaining volume
    let log_x = -(iteration as f64) / nf;
    live.sort_by(|a, b| a.log_l.total_cmp(&b.log_l));
    for p in live {
        let log_w = log_x - nf.ln() + p.log_l;
        log_z = log_add_exp(log_z, log_w);
        samples.push(NsSample { params: p.params, log_likelihood: p.log_l, log_weight: log_w });
    }

    let information = samples
        .iter()
        .filter(|s| s.log_likelihood > f64::NEG_INFINITY)
        .map(|s| (s.log_weight - log_z).exp() * s.log_likelihood)
        .sum::<f64>()
        - log_z;
    let information = information.max(0.0);
    Ok(NsResult {
        log_z,
        log_z_err: (information / nf).sqrt(),
        information,
        samples,
        iterations: iteration,
        n_live: n,
        log_volume: log_x,
        truncated,
        acceptance: if proposed_total == 0 { 0.0 } else { accepted_total as f64 / proposed_total as f64 },
    })
}

/// Equal-weight draws from a nested-sampling posterior.
#[derive(Debug, Clone)]
pub struct Resampled {
    pub draws: Vec<Vec<f64>>,
    /// Effective sample size of the source weights.
    pub ess: f64,
    /// Set when the effective sample size is below 10.
    pub warning: Option<String>,
}

/// Multinomial resampling with replacement according to posterior weight.
pub fn posterior_resample<R: Rng + ?Sized>(result: &NsResult, n: usize, rng: &mut R) -> Result<Resampled> {
    let weights = result.normalised_weights();
    if weights.iter().all(|&w| !(w > 0.0)) {
        return Err(Error::NoPosteriorMass);
    }
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in &weights {
        acc += w;
        cumulative.push(acc);
    }
    let draws = (0..n)
        .map(|_| {
            let u = rng.gen::<f64>() * acc;
            let k = cumulative.partition_point(|&c| c <= u).min(weights.len() - 1);
            result.samples[k].params.clone()
        })
        .collect();
    let ess = effective_sample_size(&weights);
    let warning = (ess < 10.0).then(|| format!("effective sample size {ess:.1} is below 10"));
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(Resampled { draws, ess, warning })
}
