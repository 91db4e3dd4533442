//! Priors, per-player fits and posterior summaries.
//!
//! The full model has `T + 8` unit-cube coordinates, laid out as
//! `[C, D, lambda, sigma, ell, alpha, psi, phi, z_1 .. z_T]`. The
//! constant-ability model drops the GP and keeps `[C, D, lambda, psi, phi]`
//! with the same priors.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{career_average, CareerRecord, TeamInnings, Venue};
use crate::error::{Error, Result};
use crate::gp::{self, FactorCache, GpHyper};
use crate::hazard::{self, expected_score, InningsAbility, ScoreContext};
use crate::nested::{posterior_resample, run_nested_sampling, NestedProblem, NsConfig, NsResult};
use crate::stats::{self, normal_quantile, splitmix64, Interval};

/// Number of scalar parameters ahead of the latent vector.
pub const N_SCALARS: usize = 8;
/// Names of the scalar parameters in layout order.
pub const SCALAR_NAMES: [&str; N_SCALARS] = ["C", "D", "lambda", "sigma", "ell", "alpha", "psi", "phi"];
/// Names of the constant-model parameters in layout order.
pub const CONSTANT_NAMES: [&str; 5] = ["C", "D", "lambda", "psi", "phi"];
/// Equal-weight draws used for every posterior summary.
pub const SUMMARY_DRAWS: usize = 2000;
/// Below this many effective samples a summary carries a warning.
pub const MIN_SUMMARY_ESS: f64 = 100.0;

pub const LOG_LAMBDA_MEAN: f64 = 3.218_875_824_868_200_7; // ln 25
pub const LOG_LAMBDA_SD: f64 = 0.75;
pub const LOG_SIGMA_MEAN: f64 = -1.609_437_912_434_100_3; // ln 0.2
pub const LOG_SIGMA_SD: f64 = 1.0;
pub const LOG_ELL_MEAN: f64 = 2.995_732_273_553_991; // ln 20
pub const LOG_ELL_SD: f64 = 1.0;
pub const LOG_EFFECT_SD: f64 = 0.25;

/// One point of the full model's parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub c: f64,
    pub d: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub ell: f64,
    pub alpha: f64,
    pub psi: f64,
    pub phi: f64,
    /// Whitened latent vector, one entry per innings.
    pub z: Vec<f64>,
}

impl ModelParams {
    pub fn from_slice(p: &[f64]) -> Self {
        assert!(p.len() >= N_SCALARS, "parameter vector too short");
        Self {
            c: p[0],
            d: p[1],
            lambda: p[2],
            sigma: p[3],
            ell: p[4],
            alpha: p[5],
            psi: p[6],
            phi: p[7],
            z: p[N_SCALARS..].to_vec(),
        }
    }

    /// Constant-model point (`sigma = 0`, no latent vector).
    pub fn from_constant_slice(p: &[f64]) -> Self {
        Self { c: p[0], d: p[1], lambda: p[2], sigma: 0.0, ell: 1.0, alpha: 1.0, psi: p[3], phi: p[4], z: Vec::new() }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.c, self.d, self.lambda, self.sigma, self.ell, self.alpha, self.psi, self.phi];
        v.extend_from_slice(&self.z);
        v
    }

    pub fn scalars(&self) -> [f64; N_SCALARS] {
        [self.c, self.d, self.lambda, self.sigma, self.ell, self.alpha, self.psi, self.phi]
    }

    pub fn hyper(&self) -> GpHyper<f64> {
        GpHyper { lambda: self.lambda, sigma: self.sigma, ell: self.ell, alpha: self.alpha }
    }

    /// Ability with `mu2 = lambda`, neutral context.
    pub fn base_ability(&self) -> InningsAbility<f64> {
        InningsAbility::from_parts(self.lambda, self.c, self.d, self.psi, self.phi)
    }

    pub fn validate(&self) -> Result<()> {
        InningsAbility::new(self.lambda, self.c, self.d, self.psi, self.phi)?;
        self.hyper().validate()
    }

    /// Eye-in ability for each innings; `lambda` everywhere when there is no
    /// latent vector or `sigma` is zero.
    pub fn mu2(&self, n: usize) -> Result<Vec<f64>> {
        if self.z.is_empty() || self.sigma == 0.0 {
            return Ok(vec![self.lambda; n]);
        }
        if self.z.len() != n {
            return Err(Error::InvalidParameter(format!("latent vector has {} entries, career has {n}", self.z.len())));
        }
        gp::latent_to_mu2(&self.z, &self.hyper())
    }
}

#[inline]
fn lognormal_from_unit(u: f64, log_mean: f64, log_sd: f64) -> f64 {
    (log_mean + log_sd * normal_quantile(u)).exp()
}

/// Maps the shared (non-latent) prior coordinates. `u` holds
/// `[C, D, lambda, sigma, ell, alpha, psi, phi]`.
fn scalar_transform(u: &[f64], out: &mut Vec<f64>) {
    let open = |k: usize| stats::clamp_open(u[k]);
    // Beta(1, 2) and Beta(1, 5) inverse CDFs
    out.push(1.0 - (1.0 - open(0)).sqrt());
    out.push(1.0 - (1.0 - open(1)).powf(0.2));
    out.push(lognormal_from_unit(u[2], LOG_LAMBDA_MEAN, LOG_LAMBDA_SD));
    out.push(lognormal_from_unit(u[3], LOG_SIGMA_MEAN, LOG_SIGMA_SD));
    out.push(lognormal_from_unit(u[4], LOG_ELL_MEAN, LOG_ELL_SD));
    out.push(1.0 + open(5));
    out.push(lognormal_from_unit(u[6], 0.0, LOG_EFFECT_SD));
    out.push(lognormal_from_unit(u[7], 0.0, LOG_EFFECT_SD));
}

/// Full-model prior transform into the flat layout.
pub fn prior_transform_into(u: &[f64], out: &mut Vec<f64>) {
    out.clear();
    scalar_transform(&u[..N_SCALARS], out);
    out.extend(u[N_SCALARS..].iter().map(|&x| normal_quantile(x)));
}

/// Full-model prior transform.
pub fn prior_transform(u: &[f64]) -> ModelParams {
    let mut v = Vec::with_capacity(u.len());
    prior_transform_into(u, &mut v);
    ModelParams::from_slice(&v)
}

/// Constant-model prior transform: `[C, D, lambda, psi, phi]`.
pub fn constant_prior_transform_into(u: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let full = [u[0], u[1], u[2], 0.5, 0.5, 0.5, u[3], u[4]];
    let mut tmp = Vec::with_capacity(N_SCALARS);
    scalar_transform(&full, &mut tmp);
    out.extend_from_slice(&[tmp[0], tmp[1], tmp[2], tmp[6], tmp[7]]);
}

/// Career log-likelihood at a model point.
pub fn career_log_likelihood(career: &CareerRecord, params: &ModelParams) -> Result<f64> {
    let mu2 = params.mu2(career.len())?;
    Ok(hazard::career_log_likelihood(career.innings(), &mu2, &params.base_ability()))
}

/// Nested-sampling target for the full GP model.
pub struct CareerProblem<'a> {
    career: &'a CareerRecord,
    cache: FactorCache<f64>,
    log_mu2: Vec<f64>,
}

impl<'a> CareerProblem<'a> {
    pub fn new(career: &'a CareerRecord) -> Self {
        Self { career, cache: FactorCache::new(), log_mu2: vec![0.0; career.len()] }
    }

    pub fn cache_stats(&self) -> (u64, u64) {
        self.cache.stats()
    }
}

impl NestedProblem for CareerProblem<'_> {
    fn dimension(&self) -> usize {
        self.career.len() + N_SCALARS
    }

    fn prior_transform(&self, unit: &[f64], params: &mut Vec<f64>) {
        prior_transform_into(unit, params);
    }

    fn log_likelihood(&mut self, p: &[f64]) -> f64 {
        let h = GpHyper { lambda: p[2], sigma: p[3], ell: p[4], alpha: p[5] };
        let n = self.career.len();
        let factor = match self.cache.factor(n, &h) {
            Ok(f) => f,
            Err(e) => {
                log::debug!("{e}");
                return f64::NEG_INFINITY;
            }
        };
        gp::latent_to_log_mu2_with(factor, &p[N_SCALARS..], &h, &mut self.log_mu2);
        let shared = InningsAbility::from_parts(1.0, p[0], p[1], p[6], p[7]);
        self.career
            .innings()
            .iter()
            .zip(&self.log_mu2)
            .map(|(rec, &lm)| hazard::innings_log_likelihood(rec, &shared.with_mu2(lm.exp())))
            .sum()
    }
}

/// Nested-sampling target for the constant-ability model.
pub struct ConstantProblem<'a> {
    career: &'a CareerRecord,
}

impl<'a> ConstantProblem<'a> {
    pub fn new(career: &'a CareerRecord) -> Self {
        Self { career }
    }
}

impl NestedProblem for ConstantProblem<'_> {
    fn dimension(&self) -> usize {
        CONSTANT_NAMES.len()
    }

    fn prior_transform(&self, unit: &[f64], params: &mut Vec<f64>) {
        constant_prior_transform_into(unit, params);
    }

    fn log_likelihood(&mut self, p: &[f64]) -> f64 {
        let a = InningsAbility::from_parts(p[2], p[0], p[1], p[3], p[4]);
        self.career.innings().iter().map(|rec| hazard::innings_log_likelihood(rec, &a)).sum()
    }
}

/// Fits the full GP model to one career.
pub fn fit_player(career: &CareerRecord, cfg: &NsConfig) -> Result<NsResult> {
    let mut problem = CareerProblem::new(career);
    let result = run_nested_sampling(&mut problem, cfg)?;
    let (hits, misses) = problem.cache_stats();
    log::debug!("{}: factor cache hits {hits}, misses {misses}", career.player_id);
    Ok(result)
}

/// Fits the constant-ability model; its `log_z` is the null evidence.
pub fn fit_constant_model(career: &CareerRecord, cfg: &NsConfig) -> Result<NsResult> {
    run_nested_sampling(&mut ConstantProblem::new(career), cfg)
}

/// Next-innings parameters of one posterior draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbilityDraw {
    pub mu2: f64,
    pub c: f64,
    pub d: f64,
    pub psi: f64,
    pub phi: f64,
}

impl AbilityDraw {
    pub fn ability(&self) -> InningsAbility<f64> {
        InningsAbility::from_parts(self.mu2, self.c, self.d, self.psi, self.phi)
    }

    /// Neutral-venue, 50/50 team-innings expected score.
    pub fn nu(&self) -> f64 {
        expected_score(&self.ability(), ScoreContext::NeutralMarginal).unwrap_or(f64::NAN)
    }
}

/// Posterior summary of one scalar parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub interval: Interval,
}

/// Posterior trajectory of expected scores and derived quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub player_id: String,
    /// Career length `T`.
    pub innings: usize,
    pub horizon: usize,
    pub career_average: Option<f64>,
    /// Neutral-venue, 50/50-innings `nu(t)` for `t = 1..=T + horizon`.
    pub nu: Vec<Interval>,
    /// `nu(t)` with each innings' recorded venue and team innings, `t = 1..=T`.
    pub nu_known_context: Vec<Interval>,
    /// Per-draw minimum of the neutral trajectory over the career.
    pub career_low: Vec<f64>,
    pub career_high: Vec<f64>,
    /// 1-based innings index of each draw's minimum.
    pub argmin: Vec<usize>,
    pub argmax: Vec<usize>,
    pub next_innings: Interval,
    /// Next-innings `nu` in a specified context, when one was requested.
    pub next_innings_known: Option<Interval>,
    pub next_draws: Vec<AbilityDraw>,
    pub params: Vec<ParamSummary>,
    pub log_z: f64,
    pub log_z_err: f64,
    pub ess: f64,
    pub warnings: Vec<String>,
}

impl TrajectorySummary {
    pub fn career_low_interval(&self) -> Interval {
        Interval::from_samples(&self.career_low)
    }

    pub fn career_high_interval(&self) -> Interval {
        Interval::from_samples(&self.career_high)
    }

    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SummaryOptions {
    pub horizon: usize,
    pub draws: usize,
    pub seed: u64,
    /// Context for an extra next-innings prediction.
    pub next_context: Option<(Venue, TeamInnings)>,
}

impl SummaryOptions {
    pub fn new(horizon: usize, seed: u64) -> Self {
        Self { horizon, draws: SUMMARY_DRAWS, seed, next_context: None }
    }
}

struct DrawTrajectory {
    nu: Vec<f64>,
    nu_known: Vec<f64>,
    next: AbilityDraw,
    next_known: Option<f64>,
}

fn trajectory_for_draw(
    career: &CareerRecord,
    p: &ModelParams,
    horizon: usize,
    next_context: Option<(Venue, TeamInnings)>,
    rng: &mut Xoshiro256PlusPlus,
) -> Result<DrawTrajectory> {
    let n = career.len();
    let mu2_past = p.mu2(n)?;
    let steps = horizon.max(1);
    let future = if p.z.is_empty() || p.sigma == 0.0 {
        vec![p.lambda; steps]
    } else {
        let log_past: Vec<f64> = mu2_past.iter().map(|m| m.ln()).collect();
        gp::conditional_forecast_log(&log_past, &p.hyper(), steps, rng)?.into_iter().map(f64::exp).collect()
    };
    let base = p.base_ability();
    let nu_of = |m: f64, ctx| expected_score(&base.with_mu2(m), ctx);
    let mut nu = Vec::with_capacity(n + horizon);
    for &m in mu2_past.iter().chain(future.iter().take(horizon)) {
        nu.push(nu_of(m, ScoreContext::NeutralMarginal)?);
    }
    let nu_known = career
        .innings()
        .iter()
        .zip(&mu2_past)
        .map(|(rec, &m)| {
            nu_of(m, ScoreContext::Known { venue: rec.venue.exponent(), team_innings: rec.team_innings.exponent() })
        })
        .collect::<Result<Vec<_>>>()?;
    let next = AbilityDraw { mu2: future[0], c: p.c, d: p.d, psi: p.psi, phi: p.phi };
    let next_known = next_context
        .map(|(v, i)| {
            nu_of(future[0], ScoreContext::Known { venue: v.exponent(), team_innings: i.exponent() })
        })
        .transpose()?;
    Ok(DrawTrajectory { nu, nu_known, next, next_known })
}

/// Summarises a full-model fit: pointwise `nu(t)` intervals over the career
/// and `horizon` forecast innings, career extremes and the next-innings
/// prediction.
pub fn summarise_trajectory(career: &CareerRecord, result: &NsResult, opts: &SummaryOptions) -> Result<TrajectorySummary> {
    let n = career.len();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(opts.seed);
    let resampled = posterior_resample(result, opts.draws, &mut rng)?;
    let params: Vec<ModelParams> = resampled
        .draws
        .iter()
        .map(|d| if d.len() == CONSTANT_NAMES.len() { ModelParams::from_constant_slice(d) } else { ModelParams::from_slice(d) })
        .collect();
    let draw_seed = rng.gen::<u64>();
    let per_draw: Vec<DrawTrajectory> = params
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let mut r = Xoshiro256PlusPlus::seed_from_u64(splitmix64(draw_seed ^ k as u64));
            trajectory_for_draw(career, p, opts.horizon, opts.next_context, &mut r)
        })
        .collect::<Result<_>>()?;

    let column = |f: &dyn Fn(&DrawTrajectory) -> f64| -> Interval {
        Interval::from_samples(&per_draw.iter().map(f).collect::<Vec<_>>())
    };
    let nu = (0..n + opts.horizon).map(|t| column(&|d| d.nu[t])).collect();
    let nu_known_context = (0..n).map(|t| column(&|d| d.nu_known[t])).collect();

    let mut career_low = Vec::with_capacity(per_draw.len());
    let mut career_high = Vec::with_capacity(per_draw.len());
    let mut argmin = Vec::with_capacity(per_draw.len());
    let mut argmax = Vec::with_capacity(per_draw.len());
    for d in &per_draw {
        let (mut lo, mut hi) = (0usize, 0usize);
        for t in 1..n {
            if d.nu[t] < d.nu[lo] {
                lo = t;
            }
            if d.nu[t] > d.nu[hi] {
                hi = t;
            }
        }
        career_low.push(d.nu[lo]);
        career_high.push(d.nu[hi]);
        argmin.push(lo + 1);
        argmax.push(hi + 1);
    }

    let next_draws: Vec<AbilityDraw> = per_draw.iter().map(|d| d.next).collect();
    let next_nu: Vec<f64> = next_draws.iter().map(AbilityDraw::nu).collect();
    let next_innings_known = opts
        .next_context
        .map(|_| Interval::from_samples(&per_draw.iter().map(|d| d.next_known.unwrap_or(f64::NAN)).collect::<Vec<_>>()));

    let is_constant = params.first().is_some_and(|p| p.z.is_empty());
    let names: &[&str] = if is_constant { &CONSTANT_NAMES } else { &SCALAR_NAMES };
    let param_summaries = names
        .iter()
        .map(|&name| {
            let idx = SCALAR_NAMES.iter().position(|&s| s == name).unwrap();
            let vals: Vec<f64> = params.iter().map(|p| p.scalars()[idx]).collect();
            ParamSummary { name: name.to_owned(), mean: stats::mean(&vals), interval: Interval::from_samples(&vals) }
        })
        .collect();

    let mut warnings = Vec::new();
    if let Some(w) = resampled.warning {
        warnings.push(w);
    }
    if resampled.ess < MIN_SUMMARY_ESS {
        let w = format!("low effective sample size {:.1} (< {MIN_SUMMARY_ESS})", resampled.ess);
        log::warn!("{}: {w}", career.player_id);
        warnings.push(w);
    }

    Ok(TrajectorySummary {
        player_id: career.player_id.clone(),
        innings: n,
        horizon: opts.horizon,
        career_average: career_average(career).ok(),
        nu,
        nu_known_context,
        career_low,
        career_high,
        argmin,
        argmax,
        next_innings: Interval::from_samples(&next_nu),
        next_innings_known,
        next_draws,
        params: param_summaries,
        log_z: result.log_z,
        log_z_err: result.log_z_err,
        ess: resampled.ess,
        warnings,
    })
}

/// One row of a ranking table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub rank: usize,
    pub player: String,
    pub innings: usize,
    pub career_average: Option<f64>,
    pub nu_next_median: f64,
    pub ci68_lo: f64,
    pub ci68_hi: f64,
}

/// Orders players by predicted next-innings `nu`, highest first. Ties go to
/// the narrower 68% interval, then to the player id.
pub fn rank_players(summaries: &[&TrajectorySummary]) -> Vec<RankRow> {
    let mut order: Vec<&TrajectorySummary> = summaries.to_vec();
    order.sort_by(|a, b| {
        b.next_innings
            .median
            .total_cmp(&a.next_innings.median)
            .then(a.next_innings.width68().total_cmp(&b.next_innings.width68()))
            .then(a.player_id.cmp(&b.player_id))
    });
    order
        .into_iter()
        .enumerate()
        .map(|(i, s)| RankRow {
            rank: i + 1,
            player: s.player_id.clone(),
            innings: s.innings,
            career_average: s.career_average,
            nu_next_median: s.next_innings.median,
            ci68_lo: s.next_innings.lo68,
            ci68_hi: s.next_innings.hi68,
        })
        .collect()
}

/// Outcome of a head-to-head next-innings comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadToHead {
    /// `P(X_A > X_B) + P(X_A = X_B) / 2`.
    pub probability: f64,
    /// `E[X_A - X_B]`.
    pub margin: f64,
}

/// Neutral-venue score distribution with team innings marginalised 50/50.
fn marginal_pmf(a: &InningsAbility<f64>) -> Vec<f64> {
    let first = a.with_exponents(0, 1);
    let second = a.with_exponents(0, -1);
    let len = hazard::truncated_mass(&first).1.max(hazard::truncated_mass(&second).1);
    let p1 = hazard::pmf_table(&first, len);
    let p2 = hazard::pmf_table(&second, len);
    p1.iter().zip(&p2).map(|(x, y)| 0.5 * (x + y)).collect()
}

/// Posterior-predictive comparison of two players' next innings.
///
/// Draws are paired index by index (recycling the shorter set), treated as
/// independent across players. For each pair the score comparison is done
/// exactly from the two score distributions; the result averages over pairs.
pub fn head_to_head(a: &[AbilityDraw], b: &[AbilityDraw]) -> Result<HeadToHead> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter("head-to-head needs posterior draws for both players".into()));
    }
    let pairs = a.len().max(b.len());
    let (prob, margin) = (0..pairs)
        .into_par_iter()
        .map(|k| {
            let (da, db) = (&a[k % a.len()], &b[k % b.len()]);
            let pa = marginal_pmf(&da.ability());
            let pb = marginal_pmf(&db.ability());
            let mut below_b = 0.0;
            let mut win = 0.0;
            for (x, &px) in pa.iter().enumerate() {
                let pbx = pb.get(x).copied().unwrap_or(0.0);
                win += px * (below_b + 0.5 * pbx);
                below_b += pbx;
            }
            (win, da.nu() - db.nu())
        })
        .collect::<Vec<(f64, f64)>>()
        .into_iter()
        .fold((0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1));
    Ok(HeadToHead { probability: prob / pairs as f64, margin: margin / pairs as f64 })
}
