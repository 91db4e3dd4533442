//! Within-innings hazard model.
//!
//! On score `x` in innings `t` the batter's effective average is
//!
//! ```text
//! mu(x, t) = [mu2_t + (C mu2_t - mu2_t) exp(-x / (D mu2_t))] * psi^v_t * phi^i_t
//! ```
//!
//! and the probability of being dismissed on that score, having reached it,
//! is `H(x) = 1 / (mu(x, t) + 1)`. Scores follow the discrete distribution
//! `P(X = x) = H(x) prod_{a<x} (1 - H(a))`; a not-out score `y` contributes
//! the survival probability `P(X >= y)`.

use rand::Rng;

use crate::data::{InningsRecord, TeamInnings, Venue};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Survival probability below which [`expected_score`] switches to the
/// analytic geometric tail.
pub const SURVIVAL_CUTOFF: f64 = 1e-12;

/// Exponent magnitude beyond which `exp(-x / L)` is treated as zero.
const EXP_UNDERFLOW: f64 = 700.0;

/// Hard cap on terms summed by [`expected_score`].
const MAX_SUM_TERMS: usize = 100_000_000;

/// Ability parameters for a single innings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InningsAbility<F> {
    /// Eye-in ability, in batting-average units.
    pub mu2: F,
    /// Initial ability as a fraction of `mu2`.
    pub c: F,
    /// e-folding length of the transition as a fraction of `mu2`.
    pub d: F,
    /// Venue multiplier.
    pub psi: F,
    /// Team-innings multiplier.
    pub phi: F,
    /// Venue exponent in {-1, 0, 1}.
    pub venue: i32,
    /// Team-innings exponent in {-1, 0, 1}; 0 means unknown.
    pub team_innings: i32,
}

impl<F: Real> InningsAbility<F> {
    /// Validated constructor with neutral venue and unknown team innings.
    pub fn new(mu2: F, c: F, d: F, psi: F, phi: F) -> Result<Self> {
        let a = Self { mu2, c, d, psi, phi, venue: 0, team_innings: 0 };
        a.validate()?;
        Ok(a)
    }

    /// Unchecked constructor for hot loops whose inputs come from a prior transform.
    #[inline]
    pub fn from_parts(mu2: F, c: F, d: F, psi: F, phi: F) -> Self {
        Self { mu2, c, d, psi, phi, venue: 0, team_innings: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        let zero = F::zero();
        let one = F::one();
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_owned()));
        if !(self.mu2 > zero) || !self.mu2.is_finite() {
            return bad("mu2 must be positive and finite");
        }
        if !(self.c > zero && self.c < one) {
            return bad("C must lie in (0, 1)");
        }
        if !(self.d > zero && self.d < one) {
            return bad("D must lie in (0, 1)");
        }
        if !(self.psi > zero) || !(self.phi > zero) {
            return bad("psi and phi must be positive");
        }
        if !(-1..=1).contains(&self.venue) || !(-1..=1).contains(&self.team_innings) {
            return bad("venue and team-innings exponents must lie in {-1, 0, 1}");
        }
        Ok(())
    }

    /// Same ability with explicit venue and team-innings exponents.
    #[inline]
    pub fn with_exponents(mut self, venue: i32, team_innings: i32) -> Self {
        self.venue = venue;
        self.team_innings = team_innings;
        self
    }

    /// Same ability in the context of a recorded innings.
    #[inline]
    pub fn with_context(self, venue: Venue, team_innings: TeamInnings) -> Self {
        self.with_exponents(venue.exponent(), team_innings.exponent())
    }

    #[inline]
    pub fn with_mu2(mut self, mu2: F) -> Self {
        self.mu2 = mu2;
        self
    }

    /// `psi^v * phi^i`.
    #[inline]
    pub fn multiplier(&self) -> F {
        self.psi.powi(self.venue) * self.phi.powi(self.team_innings)
    }

    /// Effective average once the transition is complete.
    #[inline]
    pub fn limiting_average(&self) -> F {
        self.mu2 * self.multiplier()
    }

    #[inline]
    fn curve(&self) -> Curve<F> {
        let mult = self.multiplier();
        let ell = self.d * self.mu2;
        let inv_ell = ell.recip();
        Curve {
            limit: self.mu2 * mult,
            gap: (self.c * self.mu2 - self.mu2) * mult,
            decay: if inv_ell > F::lit(EXP_UNDERFLOW) { F::zero() } else { (-inv_ell).exp() },
            inv_ell,
        }
    }
}

/// `mu(x) = limit + gap * exp(-x / L)`, with `gap <= 0`.
#[derive(Debug, Clone, Copy)]
struct Curve<F> {
    limit: F,
    gap: F,
    /// `exp(-1 / L)`.
    decay: F,
    inv_ell: F,
}

impl<F: Real> Curve<F> {
    #[inline]
    fn transition(&self, x: u32) -> F {
        if x == 0 {
            return F::one();
        }
        let arg = F::from_u32(x).unwrap() * self.inv_ell;
        if arg > F::lit(EXP_UNDERFLOW) {
            F::zero()
        } else {
            (-arg).exp()
        }
    }

    #[inline]
    fn at(&self, x: u32) -> F {
        self.limit + self.gap * self.transition(x)
    }

    /// True once `gap * e` no longer changes `limit` at working precision.
    #[inline]
    fn settled(&self, e: F) -> bool {
        -self.gap * e <= self.limit * F::epsilon()
    }

    /// `sum_{a < x} log(1 - H(a))`.
    ///
    /// Accumulates `prod mu` and `prod (mu + 1)` separately and takes
    /// logarithms only when the larger product nears overflow.
    fn log_survival(&self, x: u32) -> F {
        let ceiling = F::max_value().sqrt();
        let floor = F::min_positive_value().sqrt();
        let mut log_sum = F::zero();
        let mut num = F::one();
        let mut den = F::one();
        let mut e = F::one();
        for a in 0..x {
            if self.settled(e) {
                let rest = F::from_u32(x - a).unwrap();
                return log_sum + (num / den).ln() + rest * log_one_minus_hazard(self.limit);
            }
            let mu = self.limit + self.gap * e;
            num *= mu;
            den *= mu + F::one();
            if den > ceiling || num < floor {
                log_sum += (num / den).ln();
                num = F::one();
                den = F::one();
            }
            e *= self.decay;
        }
        log_sum + (num / den).ln()
    }
}

/// Effective average on score `x`.
pub fn effective_average<F: Real>(x: u32, a: &InningsAbility<F>) -> F {
    a.curve().at(x)
}

/// Dismissal probability given an effective average.
#[inline]
pub fn hazard<F: Real>(mu: F) -> F {
    (mu + F::one()).recip()
}

/// `log(1 - H) = log(mu / (mu + 1))`.
#[inline]
pub fn log_one_minus_hazard<F: Real>(mu: F) -> F {
    -(mu.recip()).ln_1p()
}

/// `log H = -log(mu + 1)`.
#[inline]
pub fn log_hazard<F: Real>(mu: F) -> F {
    -mu.ln_1p()
}

/// `log P(X >= y)`.
pub fn log_survival<F: Real>(y: u32, a: &InningsAbility<F>) -> F {
    a.curve().log_survival(y)
}

/// `log P(X = x)`.
pub fn log_pmf<F: Real>(x: u32, a: &InningsAbility<F>) -> F {
    let curve = a.curve();
    curve.log_survival(x) + log_hazard(curve.at(x))
}

/// Log-likelihood of one recorded innings: the score probability if the
/// batter was dismissed, the survival probability if not out.
pub fn innings_log_likelihood<F: Real>(rec: &InningsRecord, a: &InningsAbility<F>) -> F {
    let a = a.with_context(rec.venue, rec.team_innings);
    let curve = a.curve();
    let surv = curve.log_survival(rec.runs);
    if rec.dismissed {
        surv + log_hazard(curve.at(rec.runs))
    } else {
        surv
    }
}

/// Log-likelihood of a whole career given one eye-in ability per innings
/// and the shared parameters carried by `shared` (its `mu2` is ignored).
pub fn career_log_likelihood<F: Real>(innings: &[InningsRecord], mu2: &[F], shared: &InningsAbility<F>) -> F {
    assert_eq!(innings.len(), mu2.len(), "one mu2 per innings");
    innings
        .iter()
        .zip(mu2)
        .map(|(rec, &m)| innings_log_likelihood(rec, &shared.with_mu2(m)))
        .fold(F::zero(), |acc, v| acc + v)
}

/// Context used when turning ability into an expected score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreContext {
    /// Neutral venue, team innings first or second with equal probability.
    NeutralMarginal,
    /// Fixed venue and team-innings exponents.
    Known { venue: i32, team_innings: i32 },
}

/// `E[X] = sum_{x >= 0} P(X > x)` for a fixed context.
///
/// Terms are summed until the survival probability drops below
/// [`SURVIVAL_CUTOFF`] or the transition has settled, then the geometric
/// tail `S * mu_inf` is added.
pub fn expected_score_fixed<F: Real>(a: &InningsAbility<F>) -> Result<F> {
    let curve = a.curve();
    let cutoff = F::lit(SURVIVAL_CUTOFF);
    let mut survival = F::one();
    let mut total = F::zero();
    let mut e = F::one();
    for _ in 0..MAX_SUM_TERMS {
        let mu = curve.limit + curve.gap * e;
        survival *= mu / (mu + F::one());
        total += survival;
        e *= curve.decay;
        if survival < cutoff || curve.settled(e) {
            return Ok(total + survival * curve.limit);
        }
    }
    Err(Error::InvalidParameter(format!(
        "expected score did not converge within {MAX_SUM_TERMS} terms (mu_inf = {})",
        curve.limit
    )))
}

/// Expected runs `nu` under the requested context.
pub fn expected_score<F: Real>(a: &InningsAbility<F>, ctx: ScoreContext) -> Result<F> {
    match ctx {
        ScoreContext::NeutralMarginal => {
            let first = expected_score_fixed(&a.with_exponents(0, 1))?;
            let second = expected_score_fixed(&a.with_exponents(0, -1))?;
            Ok(F::lit(0.5) * (first + second))
        }
        ScoreContext::Known { venue, team_innings } => expected_score_fixed(&a.with_exponents(venue, team_innings)),
    }
}

/// Probabilities `P(X = x)` for `x = 0..n`.
pub fn pmf_table<F: Real>(a: &InningsAbility<F>, n: usize) -> Vec<F> {
    let curve = a.curve();
    let mut out = Vec::with_capacity(n);
    let mut log_s = F::zero();
    for x in 0..n as u32 {
        let mu = curve.at(x);
        out.push((log_s + log_hazard(mu)).exp());
        log_s += log_one_minus_hazard(mu);
    }
    out
}

/// Sum of `P(X = x)` from `x = 0` until the survival probability drops
/// below [`SURVIVAL_CUTOFF`]. Returns the sum and the number of terms.
pub fn truncated_mass<F: Real>(a: &InningsAbility<F>) -> (F, usize) {
    let curve = a.curve();
    let cutoff = F::lit(SURVIVAL_CUTOFF).ln();
    let mut log_s = F::zero();
    let mut total = F::zero();
    let mut x = 0u32;
    while log_s >= cutoff {
        let mu = curve.at(x);
        total += (log_s + log_hazard(mu)).exp();
        log_s += log_one_minus_hazard(mu);
        x += 1;
    }
    (total, x as usize)
}

/// Draws a score by walking the hazard one run at a time.
pub fn sample_score<F: Real, R: Rng + ?Sized>(a: &InningsAbility<F>, rng: &mut R) -> u32 {
    let curve = a.curve();
    let mut x = 0u32;
    loop {
        let h = hazard(curve.at(x)).to_f64_lossy();
        if rng.gen::<f64>() < h {
            return x;
        }
        x += 1;
    }
}
