//! Predictive evaluation, population-level post-processing and simulation.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CareerRecord, InningsRecord, TeamInnings, Venue};
use crate::error::{Error, Result};
use crate::gp;
use crate::hazard::{self, InningsAbility};
use crate::inference::{fit_player, summarise_trajectory, ModelParams, SummaryOptions, LOG_EFFECT_SD};
use crate::nested::NsConfig;
use crate::stats::{self, derive_seed, log_sum_exp, normal_ln_pdf, splitmix64};

/// Runs per dismissal over the most recent `ceil(fraction * T)` innings.
///
/// A window without a dismissal grows backwards until it contains one; a
/// career without any dismissal returns its total runs.
pub fn sma_predict(career: &CareerRecord, window_fraction: f64) -> Result<f64> {
    let innings = career.innings();
    if innings.is_empty() {
        return Err(Error::NoInnings);
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("window fraction must lie in (0, 1], got {window_fraction}")));
    }
    let n = innings.len();
    let window = ((window_fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut start = n - window;
    let outs_in = |from: usize| innings[from..].iter().filter(|i| i.dismissed).count();
    while start > 0 && outs_in(start) == 0 {
        start -= 1;
    }
    let runs: u64 = innings[start..].iter().map(|i| u64::from(i.runs)).sum();
    let outs = outs_in(start).max(1);
    Ok(runs as f64 / outs as f64)
}

/// Model evaluated by leave-one-out prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Predictor {
    /// Posterior median of next-innings `nu` in the held-out innings' context.
    Gp,
    /// Moving average over the given fraction of the career.
    Sma(f64),
}

impl Predictor {
    pub fn label(&self) -> String {
        match self {
            Predictor::Gp => "Gaussian process".to_owned(),
            Predictor::Sma(f) => format!("SMA({}%)", (f * 100.0).round()),
        }
    }

    /// The five models of the standard comparison.
    pub fn standard_set() -> Vec<Predictor> {
        vec![Predictor::Sma(0.10), Predictor::Sma(0.25), Predictor::Sma(0.50), Predictor::Sma(1.0), Predictor::Gp]
    }
}

/// Splits off the most recent dismissed innings. Returns the career before
/// it and the held-out innings, or `None` if there is nothing to predict from.
pub fn holdout(career: &CareerRecord) -> Option<(CareerRecord, InningsRecord)> {
    if career.len() < 2 {
        return None;
    }
    let pos = career.innings().iter().rposition(|i| i.dismissed)?;
    if pos == 0 {
        return None;
    }
    Some((career.truncated(pos).ok()?, career.innings()[pos]))
}

/// Held-out score and every model's prediction for one player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvCase {
    pub player: String,
    /// Full career length, used by the minimum-innings filters.
    pub career_innings: usize,
    pub actual: f64,
    pub predictions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvRow {
    pub model: String,
    pub min_innings: Option<usize>,
    pub mse: f64,
    pub n_players: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvTable {
    pub models: Vec<Predictor>,
    pub cases: Vec<LoocvCase>,
    pub rows: Vec<LoocvRow>,
    /// Players failing the holdout preconditions.
    pub excluded: usize,
}

impl LoocvTable {
    pub fn mse(&self, model: Predictor, min_innings: Option<usize>) -> Option<f64> {
        let label = model.label();
        self.rows.iter().find(|r| r.model == label && r.min_innings == min_innings).map(|r| r.mse)
    }
}

fn predict_case(career: &CareerRecord, models: &[Predictor], cfg: &NsConfig) -> Result<Option<LoocvCase>> {
    let Some((past, held)) = holdout(career) else {
        return Ok(None);
    };
    let seed = derive_seed(cfg.seed, &career.player_id);
    let mut gp_prediction = None;
    let mut predictions = Vec::with_capacity(models.len());
    for m in models {
        let p = match m {
            Predictor::Sma(f) => sma_predict(&past, *f)?,
            Predictor::Gp => match gp_prediction {
                Some(p) => p,
                None => {
                    let result = fit_player(&past, &cfg.with_seed(seed))?;
                    let opts = SummaryOptions { next_context: Some((held.venue, held.team_innings)), ..SummaryOptions::new(0, splitmix64(seed)) };
                    let s = summarise_trajectory(&past, &result, &opts)?;
                    let p = s.next_innings_known.expect("context requested").median;
                    gp_prediction = Some(p);
                    p
                }
            },
        };
        predictions.push(p);
    }
    Ok(Some(LoocvCase {
        player: career.player_id.clone(),
        career_innings: career.len(),
        actual: f64::from(held.runs),
        predictions,
    }))
}

/// Aggregates per-player cases into mean squared errors per model and filter.
pub fn loocv_rows(models: &[Predictor], cases: &[LoocvCase], filters: &[Option<usize>]) -> Vec<LoocvRow> {
    let mut rows = Vec::new();
    for (k, m) in models.iter().enumerate() {
        for &min in filters {
            let sel: Vec<&LoocvCase> = cases.iter().filter(|c| min.is_none_or(|n| c.career_innings >= n)).collect();
            let mse = if sel.is_empty() {
                f64::NAN
            } else {
                sel.iter().map(|c| (c.predictions[k] - c.actual).powi(2)).sum::<f64>() / sel.len() as f64
            };
            rows.push(LoocvRow { model: m.label(), min_innings: min, mse, n_players: sel.len() });
        }
    }
    rows
}

/// Minimum-innings filters of the standard error table.
pub const STANDARD_FILTERS: [Option<usize>; 4] = [None, Some(10), Some(20), Some(50)];

/// Leave-one-out mean squared prediction error of each model over a cohort.
///
/// Each player's most recent dismissed innings is predicted from everything
/// before it. Per-player fits run in parallel with seeds derived from the
/// player id, so results do not depend on cohort order.
pub fn loocv_mse(cohort: &[CareerRecord], models: &[Predictor], cfg: &NsConfig, filters: &[Option<usize>]) -> Result<LoocvTable> {
    let outcomes: Vec<Option<LoocvCase>> =
        cohort.par_iter().map(|c| predict_case(c, models, cfg)).collect::<Result<_>>()?;
    let excluded = outcomes.iter().filter(|o| o.is_none()).count();
    let mut cases: Vec<LoocvCase> = outcomes.into_iter().flatten().collect();
    if cases.is_empty() {
        return Err(Error::NoEligiblePlayers(format!("{excluded} players lack a predictable dismissed innings")));
    }
    cases.sort_by(|a, b| a.player.cmp(&b.player));
    let rows = loocv_rows(models, &cases, filters);
    Ok(LoocvTable { models: models.to_vec(), cases, rows, excluded })
}

/// Population-level median multiplier and log-spread of one match effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierHyper {
    pub mu_eff: f64,
    pub sigma_eff: f64,
}

pub const MU_EFF_BOUNDS: (f64, f64) = (0.9, 1.1);
pub const SIGMA_EFF_BOUNDS: (f64, f64) = (0.1, 0.3);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierConfig {
    pub chains: usize,
    /// Metropolis steps per chain, including burn-in.
    pub steps: usize,
    /// Fraction of each chain discarded (and used for step-size tuning).
    pub burn_in: f64,
    /// Keep every `thin`-th post-burn-in draw.
    pub thin: usize,
    pub seed: u64,
}

impl Default for HierConfig {
    fn default() -> Self {
        Self { chains: 4, steps: 50_000, burn_in: 0.2, thin: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierPosterior {
    pub draws: Vec<HierHyper>,
    /// Split-R-hat for `mu_eff` and `sigma_eff`.
    pub rhat: [f64; 2],
    pub converged: bool,
    pub players_used: usize,
    pub excluded: usize,
    pub warnings: Vec<String>,
}

impl HierPosterior {
    pub fn mean(&self) -> HierHyper {
        let n = self.draws.len() as f64;
        HierHyper {
            mu_eff: self.draws.iter().map(|d| d.mu_eff).sum::<f64>() / n,
            sigma_eff: self.draws.iter().map(|d| d.sigma_eff).sum::<f64>() / n,
        }
    }
}

/// Log-effects of one player, recycled under a new population prior.
struct Recycled {
    log_e: Vec<f64>,
    /// `-log N(log e | 0, 0.25^2)` less its maximum over samples.
    rel_inv_prior: Vec<f64>,
    max_inv_prior: f64,
    log_s: f64,
}

impl Recycled {
    fn new(log_e: Vec<f64>) -> Self {
        let inv: Vec<f64> = log_e.iter().map(|&le| -normal_ln_pdf(le, 0.0, LOG_EFFECT_SD)).collect();
        let max_inv_prior = inv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_s = (log_e.len() as f64).ln();
        Self { rel_inv_prior: inv.iter().map(|v| v - max_inv_prior).collect(), log_e, max_inv_prior, log_s }
    }

    /// `log((1/S) sum_s N(log e_s | log_mu, sigma^2) / N(log e_s | 0, 0.25^2))`.
    fn log_marginal(&self, log_mu: f64, sigma: f64) -> f64 {
        let half_prec = 0.5 / (sigma * sigma);
        let offset = self.max_inv_prior - sigma.ln() - stats::LN_SQRT_2PI - self.log_s;
        // every term is at most exp(0); fall back to a max-shifted sum on underflow
        let sum: f64 = self
            .log_e
            .iter()
            .zip(&self.rel_inv_prior)
            .map(|(&le, &rel)| {
                let d = le - log_mu;
                (rel - half_prec * d * d).exp()
            })
            .sum();
        if sum > 1e-280 {
            return sum.ln() + offset;
        }
        let terms: Vec<f64> = self
            .log_e
            .iter()
            .zip(&self.rel_inv_prior)
            .map(|(&le, &rel)| {
                let d = le - log_mu;
                rel - half_prec * d * d
            })
            .collect();
        log_sum_exp(&terms) + offset
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn from_logit(a: f64, b: f64) -> HierHyper {
    HierHyper {
        mu_eff: MU_EFF_BOUNDS.0 + (MU_EFF_BOUNDS.1 - MU_EFF_BOUNDS.0) * sigmoid(a),
        sigma_eff: SIGMA_EFF_BOUNDS.0 + (SIGMA_EFF_BOUNDS.1 - SIGMA_EFF_BOUNDS.0) * sigmoid(b),
    }
}

/// `log(s (1 - s))` for `s = sigmoid(x)`: uniform box prior in logit coordinates.
#[inline]
fn log_logistic_jacobian(x: f64) -> f64 {
    -x.abs() - 2.0 * (-x.abs()).exp().ln_1p()
}

/// Posterior over the population hyperparameters of one effect (`psi` or
/// `phi`), reusing each player's posterior samples drawn under the
/// individual prior `log e ~ N(0, 0.25^2)`.
///
/// The recycled likelihood of `(mu_eff, sigma_eff)` is the product over
/// players of the sample average of `N(log e | log mu_eff, sigma_eff^2) /
/// N(log e | 0, 0.25^2)`, with uniform priors on the boxes [0.9, 1.1] and
/// [0.1, 0.3]. Sampling uses random-walk Metropolis in logit coordinates.
pub fn hierarchical_postprocess(per_player: &[Vec<f64>], cfg: &HierConfig) -> Result<HierPosterior> {
    let mut warnings = Vec::new();
    let mut players = Vec::new();
    let centre = (MU_EFF_BOUNDS.0 + MU_EFF_BOUNDS.1) / 2.0;
    let centre_sigma = (SIGMA_EFF_BOUNDS.0 + SIGMA_EFF_BOUNDS.1) / 2.0;
    for (j, samples) in per_player.iter().enumerate() {
        let log_e: Vec<f64> = samples.iter().filter(|&&e| e > 0.0 && e.is_finite()).map(|e| e.ln()).collect();
        let ratios_vanish = log_e.is_empty()
            || log_e
                .iter()
                .all(|&le| (normal_ln_pdf(le, centre.ln(), centre_sigma) - normal_ln_pdf(le, 0.0, LOG_EFFECT_SD)).exp() == 0.0);
        if ratios_vanish {
            let w = format!("player {j}: importance ratios vanish, excluded");
            log::warn!("{w}");
            warnings.push(w);
            continue;
        }
        if log_e.len() < 100 {
            warnings.push(format!("player {j}: only {} effect samples", log_e.len()));
        }
        players.push(Recycled::new(log_e));
    }
    if players.is_empty() {
        return Err(Error::NoEligiblePlayers("no player contributed usable effect samples".into()));
    }
    let excluded = per_player.len() - players.len();

    let log_target = |a: f64, b: f64| -> f64 {
        let h = from_logit(a, b);
        let ll: f64 = players.iter().map(|p| p.log_marginal(h.mu_eff.ln(), h.sigma_eff)).sum();
        ll + log_logistic_jacobian(a) + log_logistic_jacobian(b)
    };

    let burn = ((cfg.steps as f64) * cfg.burn_in) as usize;
    let thin = cfg.thin.max(1);
    let chains: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.chains.max(1))
        .into_par_iter()
        .map(|c| {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(splitmix64(cfg.seed ^ (c as u64).wrapping_mul(0x9e37)));
            let (mut a, mut b): (f64, f64) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            let mut lp = log_target(a, b);
            let mut scale = 0.5;
            let mut window_acc = 0usize;
            let (mut mus, mut sigmas) = (Vec::new(), Vec::new());
            for step in 0..cfg.steps {
                let na = a + scale * rng.sample::<f64, _>(StandardNormal);
                let nb = b + scale * rng.sample::<f64, _>(StandardNormal);
                let nlp = log_target(na, nb);
                if (nlp - lp) > rng.gen::<f64>().ln() {
                    a = na;
                    b = nb;
                    lp = nlp;
                    window_acc += 1;
                }
                if step < burn {
                    if (step + 1) % 100 == 0 {
                        // aim for roughly 30% acceptance
                        scale *= ((window_acc as f64 / 100.0) - 0.3).exp();
                        window_acc = 0;
                    }
                } else if (step - burn) % thin == 0 {
                    let h = from_logit(a, b);
                    mus.push(h.mu_eff);
                    sigmas.push(h.sigma_eff);
                }
            }
            (mus, sigmas)
        })
        .collect();

    let mu_chains: Vec<Vec<f64>> = chains.iter().map(|c| c.0.clone()).collect();
    let sigma_chains: Vec<Vec<f64>> = chains.iter().map(|c| c.1.clone()).collect();
    let rhat = if chains.len() > 1 && mu_chains[0].len() >= 4 {
        [stats::split_rhat(&mu_chains), stats::split_rhat(&sigma_chains)]
    } else {
        [f64::NAN, f64::NAN]
    };
    let converged = rhat.iter().all(|&r| r < 1.01);
    if !converged {
        let w = format!("split R-hat {:.4}/{:.4} exceeds 1.01", rhat[0], rhat[1]);
        log::warn!("{w}");
        warnings.push(w);
    }
    let draws = chains
        .iter()
        .flat_map(|(m, s)| m.iter().zip(s).map(|(&mu_eff, &sigma_eff)| HierHyper { mu_eff, sigma_eff }))
        .collect();
    Ok(HierPosterior { draws, rhat, converged, players_used: players.len(), excluded, warnings })
}

/// Default fixture schedule: two innings per match, alternating home and
/// away series of two matches, every fifth match at a neutral venue.
pub fn default_schedule(n: usize) -> Vec<(Venue, TeamInnings)> {
    (0..n)
        .map(|t| {
            let m = t / 2;
            let venue = if m % 5 == 4 {
                Venue::Neutral
            } else if (m / 2) % 2 == 0 {
                Venue::Home
            } else {
                Venue::Away
            };
            let ti = if t % 2 == 0 { TeamInnings::First } else { TeamInnings::Second };
            (venue, ti)
        })
        .collect()
}

/// A simulated career together with the eye-in abilities that generated it.
#[derive(Debug, Clone)]
pub struct SimulatedCareer {
    pub career: CareerRecord,
    pub mu2: Vec<f64>,
}

/// Draws a career from the model: `log mu2` from the GP prior (or the
/// constant `lambda` when `sigma` is zero), then each score by walking the
/// hazard. A `censor_fraction` of innings become not-out at a uniformly
/// chosen point of the realised score.
pub fn simulate_career_with_truth<R: Rng + ?Sized>(
    player_id: &str,
    truth: &ModelParams,
    schedule: &[(Venue, TeamInnings)],
    censor_fraction: f64,
    rng: &mut R,
) -> Result<SimulatedCareer> {
    let n = schedule.len();
    if n == 0 {
        return Err(Error::NoInnings);
    }
    InningsAbility::new(truth.lambda, truth.c, truth.d, truth.psi, truth.phi)?;
    truth.hyper().validate()?;
    let mu2 = if truth.sigma == 0.0 {
        vec![truth.lambda; n]
    } else {
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        gp::latent_to_mu2(&z, &truth.hyper())?
    };
    let base = truth.base_ability();
    let innings = schedule
        .iter()
        .zip(&mu2)
        .enumerate()
        .map(|(t, (&(venue, ti), &m))| {
            let score = hazard::sample_score(&base.with_mu2(m).with_context(venue, ti), rng);
            let (runs, dismissed) = if censor_fraction > 0.0 && rng.gen::<f64>() < censor_fraction {
                (rng.gen_range(0..=score), false)
            } else {
                (score, true)
            };
            InningsRecord::new(t + 1, runs, dismissed, venue, ti)
        })
        .collect();
    Ok(SimulatedCareer { career: CareerRecord::new(player_id, innings)?, mu2 })
}

pub fn simulate_career<R: Rng + ?Sized>(
    truth: &ModelParams,
    schedule: &[(Venue, TeamInnings)],
    censor_fraction: f64,
    rng: &mut R,
) -> Result<CareerRecord> {
    simulate_career_with_truth("simulated", truth, schedule, censor_fraction, rng).map(|s| s.career)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn career(rows: &[(u32, bool)]) -> CareerRecord {
        CareerRecord::from_ordered(
            "p",
            rows.iter().map(|&(r, o)| InningsRecord::new(0, r, o, Venue::Home, TeamInnings::First)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn sma_examples() {
        let c = career(&[(10, true), (20, false), (30, true)]);
        assert_eq!(sma_predict(&c, 1.0).unwrap(), 30.0);

        // 100 innings, last 10 average 7 per dismissal
        let mut rows: Vec<(u32, bool)> = (0..90).map(|_| (50, true)).collect();
        rows.extend((0..10).map(|_| (7, true)));
        assert_eq!(sma_predict(&career(&rows), 0.1).unwrap(), 7.0);

        // last ten not out: window grows back to the earlier dismissal
        let mut rows: Vec<(u32, bool)> = vec![(40, true), (12, true)];
        rows.extend((0..98).map(|_| (1, false)));
        assert_eq!(sma_predict(&career(&rows), 0.1).unwrap(), (12.0 + 98.0) / 1.0);

        let c = career(&[(5, false), (6, false)]);
        assert_eq!(sma_predict(&c, 0.5).unwrap(), 11.0);
    }

    #[test]
    fn holdout_drops_from_last_dismissal() {
        let c = career(&[(3, true), (9, true), (4, false)]);
        let (past, held) = holdout(&c).unwrap();
        assert_eq!(past.len(), 1);
        assert_eq!(held.runs, 9);
        assert!(holdout(&career(&[(3, true)])).is_none());
        assert!(holdout(&career(&[(3, true), (8, false)])).is_none());
    }

    #[test]
    fn loocv_constant_scores_sma_exact() {
        let cohort: Vec<CareerRecord> = (0..3)
            .map(|k| {
                CareerRecord::from_ordered(
                    format!("p{k}"),
                    (0..12).map(|_| InningsRecord::new(0, 17, true, Venue::Away, TeamInnings::Second)).collect(),
                )
                .unwrap()
            })
            .collect();
        let t = loocv_mse(&cohort, &[Predictor::Sma(1.0), Predictor::Sma(0.1)], &NsConfig::test_scale(), &STANDARD_FILTERS)
            .unwrap();
        assert_eq!(t.mse(Predictor::Sma(1.0), None), Some(0.0));
        assert_eq!(t.mse(Predictor::Sma(0.1), Some(10)), Some(0.0));
        assert_eq!(t.rows.iter().find(|r| r.min_innings == Some(20)).unwrap().n_players, 0);
    }

    #[test]
    fn loocv_requires_eligible_players() {
        let cohort = vec![career(&[(3, false)])];
        assert!(matches!(
            loocv_mse(&cohort, &[Predictor::Sma(1.0)], &NsConfig::test_scale(), &[None]),
            Err(Error::NoEligiblePlayers(_))
        ));
    }

    #[test]
    fn simulate_without_censoring_is_all_out() {
        let truth = ModelParams::from_constant_slice(&[0.3, 0.1, 30.0, 1.0, 1.0]);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
        let c = simulate_career(&truth, &default_schedule(50), 0.0, &mut rng).unwrap();
        assert!(c.innings().iter().all(|i| i.dismissed));
        assert_eq!(c.len(), 50);
    }

    #[test]
    fn logit_jacobian_matches_direct() {
        for x in [-30.0, -2.0, 0.0, 0.7, 25.0] {
            let direct = sigmoid(x).ln() + sigmoid(-x).ln();
            assert!((log_logistic_jacobian(x) - direct).abs() < 1e-9);
        }
    }
}
