use cricket_gp::evaluation::{
    hierarchical_postprocess, loocv_mse, simulate_career, HierConfig, Predictor, MU_EFF_BOUNDS, SIGMA_EFF_BOUNDS,
    STANDARD_FILTERS,
};
use cricket_gp::inference::ModelParams;
use cricket_gp::nested::NsConfig;
use cricket_gp::stats::{ks_critical_1pct, ks_statistic};
use cricket_gp::{CareerRecord, Error, TeamInnings, Venue};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Flat eye-in curve (C close to one) so the score is geometric with mean `mu`.
fn flat_truth(mu: f64, psi: f64) -> ModelParams {
    ModelParams::from_constant_slice(&[1.0 - 1e-12, 0.5, mu, psi, 1.0])
}

#[test]
fn simulated_scores_have_the_geometric_mean() {
    let n = 100_000;
    let schedule = vec![(Venue::Neutral, TeamInnings::Unknown); n];
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(12);
    let c = simulate_career(&flat_truth(30.0, 1.0), &schedule, 0.0, &mut rng).unwrap();
    let xs: Vec<f64> = c.innings().iter().map(|i| f64::from(i.runs)).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    assert!((mean - 30.0).abs() < 3.0 * sd / (n as f64).sqrt(), "mean {mean}");
}

#[test]
fn home_away_ratio_is_psi_squared() {
    let n = 200_000;
    let schedule: Vec<_> =
        (0..n).map(|t| (if t % 2 == 0 { Venue::Home } else { Venue::Away }, TeamInnings::Unknown)).collect();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(13);
    let c = simulate_career(&flat_truth(30.0, 1.2), &schedule, 0.0, &mut rng).unwrap();
    let avg = |v: Venue| {
        let xs: Vec<f64> = c.innings().iter().filter(|i| i.venue == v).map(|i| f64::from(i.runs)).collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    let ratio = avg(Venue::Home) / avg(Venue::Away);
    assert!((ratio - 1.44).abs() < 0.02, "ratio {ratio}");
}

#[test]
fn censoring_fraction_is_respected() {
    let schedule = vec![(Venue::Neutral, TeamInnings::First); 20_000];
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(14);
    let c = simulate_career(&flat_truth(30.0, 1.0), &schedule, 0.1, &mut rng).unwrap();
    let frac = 1.0 - c.dismissals() as f64 / c.len() as f64;
    assert!((frac - 0.1).abs() < 0.01, "{frac}");
}

fn cohort(seed: u64, n: usize) -> Vec<CareerRecord> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let len = rng.gen_range(5..60);
            let schedule = vec![(Venue::Home, TeamInnings::First); len];
            let mut c = simulate_career(&flat_truth(rng.gen_range(15.0..50.0), 1.0), &schedule, 0.1, &mut rng).unwrap();
            c = CareerRecord::from_ordered(format!("player{k:02}"), c.innings().to_vec()).unwrap();
            c
        })
        .collect()
}

#[test]
fn loocv_is_invariant_to_cohort_order() {
    let models = vec![Predictor::Sma(0.1), Predictor::Sma(0.5), Predictor::Sma(1.0)];
    let cfg = NsConfig::default();
    let mut players = cohort(3, 25);
    let a = loocv_mse(&players, &models, &cfg, &STANDARD_FILTERS).unwrap();
    players.reverse();
    players.swap(0, 7);
    let b = loocv_mse(&players, &models, &cfg, &STANDARD_FILTERS).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.cases, b.cases);
    let all = a.rows.iter().find(|r| r.min_innings.is_none()).unwrap();
    let min20 = a.rows.iter().find(|r| r.min_innings == Some(20)).unwrap();
    assert!(min20.n_players <= all.n_players);
}

#[test]
fn gp_predictor_runs_in_loocv() {
    let players = cohort(4, 2);
    let cfg = NsConfig { n_live: 40, mh_steps: 10, seed: 1, ..NsConfig::default() };
    let t = loocv_mse(&players, &[Predictor::Gp, Predictor::Sma(1.0)], &cfg, &[None]).unwrap();
    let gp = t.mse(Predictor::Gp, None).unwrap();
    assert!(gp.is_finite() && gp >= 0.0);
    assert_eq!(t.cases.len(), 2);
}

fn hier_cfg(seed: u64) -> HierConfig {
    HierConfig { seed, ..HierConfig::default() }
}

/// Samples drawn from the individual prior carry no information, so the
/// hyperposterior is the uniform hyperprior.
#[test]
fn uninformative_player_returns_the_hyperprior() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(40);
    let samples: Vec<f64> = (0..4000).map(|_| (0.25 * rng.sample::<f64, _>(StandardNormal)).exp()).collect();
    let post = hierarchical_postprocess(&[samples], &hier_cfg(2)).unwrap();
    let mus: Vec<f64> = post.draws.iter().map(|d| d.mu_eff).collect();
    let sigmas: Vec<f64> = post.draws.iter().map(|d| d.sigma_eff).collect();
    // thinned chains are still autocorrelated: judge against a reduced sample size
    let crit = ks_critical_1pct(post.draws.len() / 20);
    let uniform = |(a, b): (f64, f64)| move |x: f64| ((x - a) / (b - a)).clamp(0.0, 1.0);
    let d_mu = ks_statistic(&mus, uniform(MU_EFF_BOUNDS));
    let d_sigma = ks_statistic(&sigmas, uniform(SIGMA_EFF_BOUNDS));
    assert!(d_mu < crit && d_sigma < crit, "KS {d_mu} {d_sigma} vs {crit}");
}

#[test]
fn hyperposterior_stays_in_the_box_and_excludes_hopeless_players() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(41);
    let mut per_player: Vec<Vec<f64>> = (0..20)
        .map(|_| {
            let centre = 0.1 * rng.sample::<f64, _>(StandardNormal);
            (0..300).map(|_| (centre + 0.05 * rng.sample::<f64, _>(StandardNormal)).exp()).collect()
        })
        .collect();
    per_player.push(vec![(40.0f64).exp(); 300]);
    let post = hierarchical_postprocess(&per_player, &HierConfig { steps: 10_000, ..hier_cfg(3) }).unwrap();
    assert_eq!(post.excluded, 1);
    assert_eq!(post.players_used, 20);
    assert!(!post.warnings.is_empty());
    for d in &post.draws {
        assert!(d.mu_eff > MU_EFF_BOUNDS.0 && d.mu_eff < MU_EFF_BOUNDS.1);
        assert!(d.sigma_eff > SIGMA_EFF_BOUNDS.0 && d.sigma_eff < SIGMA_EFF_BOUNDS.1);
    }
}

#[test]
fn hierarchical_needs_a_usable_player() {
    let r = hierarchical_postprocess(&[vec![(40.0f64).exp(); 200]], &hier_cfg(1));
    assert!(matches!(r, Err(Error::NoEligiblePlayers(_))));
}
