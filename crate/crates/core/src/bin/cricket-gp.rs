use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde_json::json;

use cricket_gp::config::{KeyValues, TruthSpec};
use cricket_gp::data::{career_average, parse_career_file, write_career, CareerRecord};
use cricket_gp::evaluation::{
    default_schedule, hierarchical_postprocess, loocv_mse, simulate_career_with_truth, HierConfig, Predictor,
    STANDARD_FILTERS,
};
use cricket_gp::inference::{
    fit_constant_model, head_to_head, rank_players, summarise_trajectory, CareerProblem, SummaryOptions,
    SUMMARY_DRAWS,
};
use cricket_gp::nested::{posterior_resample, run_nested_sampling_with, Hooks, NsConfig};
use cricket_gp::persist::{
    read_samples_file, read_summary_file, sig6, summary_for_ranking, summary_json, write_atomic,
    write_samples_file, write_trajectory_csv, ModelKind,
};
use cricket_gp::stats::{derive_seed, splitmix64};
use cricket_gp::{Error, Result};

/// Environment variable holding the default worker count.
const WORKERS_ENV: &str = "CRICKET_GP_WORKERS";

#[derive(Parser, Debug)]
#[command(name = "cricket-gp", version, about = "Gaussian-process batting ability model for Test cricket")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

#[derive(clap::Args, Debug, Clone, Default)]
struct Options {
    /// Career file or directory of career files (repeatable).
    #[arg(long, global = true)]
    input: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    outdir: Option<PathBuf>,
    /// key=value file supplying defaults for any flag (and the simulator truth).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Live points.
    #[arg(long, global = true)]
    nlive: Option<usize>,
    /// Metropolis steps per replacement.
    #[arg(long = "mh-steps", global = true)]
    mh_steps: Option<usize>,
    /// Forecast innings beyond the end of the career.
    #[arg(long, global = true)]
    horizon: Option<usize>,
    /// Base seed; each player's seed is derived from it and the player id.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Skip players with fewer innings.
    #[arg(long = "min-innings", global = true)]
    min_innings: Option<usize>,
    /// Worker threads (default: $CRICKET_GP_WORKERS, else all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Match effect for `hier`.
    #[arg(long, global = true, value_enum)]
    effect: Option<Effect>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Fit the full model to each career and write samples, trajectory and summary.
    Fit,
    /// Next-innings predictions and pairwise head-to-head comparisons from summaries.
    Predict,
    /// Rank fitted players by predicted next-innings score.
    Rank,
    /// Evidence of the full model against the constant-ability model.
    Evidence,
    /// Leave-one-out prediction error of the model and moving-average baselines.
    Loocv,
    /// Population-level posterior of a match effect from per-player samples.
    Hier,
    /// Simulate careers from a truth specification.
    Simulate,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Effect {
    Psi,
    Phi,
}

impl Effect {
    fn name(self) -> &'static str {
        match self {
            Effect::Psi => "psi",
            Effect::Phi => "phi",
        }
    }

    /// Position in the parameter vector (same in both model layouts' prefix order).
    fn index(self, model: ModelKind) -> usize {
        match (model, self) {
            (ModelKind::Gp, Effect::Psi) => 6,
            (ModelKind::Gp, Effect::Phi) => 7,
            (ModelKind::Constant, Effect::Psi) => 3,
            (ModelKind::Constant, Effect::Phi) => 4,
        }
    }
}

/// Flags merged over the config file.
#[derive(Debug, Clone)]
struct RunConfig {
    command: Command,
    inputs: Vec<PathBuf>,
    outdir: PathBuf,
    ns: NsConfig,
    horizon: usize,
    seed: u64,
    min_innings: usize,
    workers: usize,
    effect: Effect,
    file: Option<KeyValues>,
}

impl RunConfig {
    fn resolve(command: Command, o: Options) -> Result<Self> {
        let file = o.config.as_deref().map(KeyValues::from_file).transpose()?;
        let from_file = |key: &str| -> Result<Option<usize>> { file.as_ref().map_or(Ok(None), |f| f.get(key)) };
        let defaults = NsConfig::default();
        let seed = match o.seed {
            Some(s) => s,
            None => file.as_ref().map_or(Ok(None), |f| f.get("seed"))?.unwrap_or(defaults.seed),
        };
        let ns = NsConfig {
            n_live: o.nlive.or(from_file("nlive")?).unwrap_or(defaults.n_live),
            mh_steps: o.mh_steps.or(from_file("mh_steps")?).unwrap_or(defaults.mh_steps),
            seed,
            ..defaults
        };
        ns.validate()?;
        let env_workers = std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok());
        let workers = o
            .workers
            .or(from_file("workers")?)
            .or(env_workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1);
        let effect = match o.effect {
            Some(e) => e,
            None => match file.as_ref().and_then(|f| f.get_str("effect")) {
                None => Effect::Psi,
                Some(v) => Effect::from_str(v, true)
                    .map_err(|_| Error::InvalidParameter(format!("effect must be psi or phi, got {v:?}")))?,
            },
        };
        let mut inputs = o.input;
        if inputs.is_empty() {
            if let Some(v) = file.as_ref().and_then(|f| f.get_str("input")) {
                inputs.push(PathBuf::from(v));
            }
        }
        let outdir = o
            .outdir
            .or_else(|| file.as_ref().and_then(|f| f.get_str("outdir")).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self {
            command,
            inputs,
            outdir,
            ns,
            horizon: o.horizon.or(from_file("horizon")?).unwrap_or(20),
            seed,
            min_innings: o.min_innings.or(from_file("min_innings")?).unwrap_or(0),
            workers,
            effect,
            file,
        })
    }

    fn player_ns(&self, player: &str) -> NsConfig {
        self.ns.with_seed(derive_seed(self.seed, player))
    }
}

/// Machine-readable error line on stderr.
fn report(err: &Error, player: Option<&str>) {
    let mut v = json!({ "error": err.kind(), "message": err.to_string() });
    if let Some(p) = player {
        v["player"] = json!(p);
    }
    eprintln!("{v}");
}

/// Expands `--input` paths: files as given, directories to their sorted entries with `ext`.
fn expand_inputs(inputs: &[PathBuf], suffix: &str) -> Result<Vec<PathBuf>> {
    if inputs.is_empty() {
        return Err(Error::InvalidParameter("no --input given".into()));
    }
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Error::file(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|q| q.is_file() && q.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(suffix)))
                .collect();
            entries.sort();
            out.extend(entries);
        } else if p.exists() {
            out.push(p.clone());
        } else {
            return Err(Error::file(p, std::io::Error::from(std::io::ErrorKind::NotFound)));
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidParameter(format!("no *{suffix} files found in the given inputs")));
    }
    Ok(out)
}

/// Career files, excluding outputs of other commands that may share a directory.
/// Parses every career file. Unreadable files are reported against their
/// player and skipped; the flag records whether any were.
fn load_careers(cfg: &RunConfig) -> Result<(Vec<CareerRecord>, bool)> {
    let files = expand_inputs(&cfg.inputs, ".csv")?;
    let mut careers = Vec::new();
    let mut failed = false;
    for f in files {
        let name = f.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.ends_with(".trajectory.csv") || ["rankings.csv", "evidence.csv", "loocv.csv", "predictions.csv", "head_to_head.csv"].contains(&name) || name.starts_with("hier_") {
            continue;
        }
        let c = match parse_career_file(&f) {
            Ok(c) => c,
            Err(e) => {
                report(&e, f.file_stem().and_then(|s| s.to_str()));
                failed = true;
                continue;
            }
        };
        if c.len() < cfg.min_innings {
            log::info!("{}: {} innings < --min-innings {}, skipped", c.player_id, c.len(), cfg.min_innings);
            continue;
        }
        careers.push(c);
    }
    if careers.is_empty() {
        return Err(Error::NoEligiblePlayers("no career passed the input filters".into()));
    }
    Ok((careers, failed))
}

/// Runs `job` for every player in the bounded pool, reporting failures.
/// Returns the successes in input order and whether any player failed.
fn for_each_player<T: Send>(
    careers: &[CareerRecord],
    job: impl Fn(&CareerRecord) -> Result<T> + Sync,
) -> (Vec<T>, bool) {
    let results: Vec<Result<T>> = careers.par_iter().map(&job).collect();
    let mut ok = Vec::new();
    let mut failed = false;
    for (c, r) in careers.iter().zip(results) {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                report(&e, Some(&c.player_id));
                failed = true;
            }
        }
    }
    (ok, failed)
}

fn fit_one(cfg: &RunConfig, career: &CareerRecord) -> Result<()> {
    let ns = cfg.player_ns(&career.player_id);
    let mut problem = CareerProblem::new(career);
    let player = career.player_id.clone();
    let progress = move |p: &cricket_gp::nested::Progress| {
        log::info!("{player}: iteration {} log Z {:.3} acceptance {:.3}", p.iteration, p.log_z, p.acceptance);
    };
    let mut hooks = Hooks { progress: Some(Box::new(progress)), progress_every: 1000, ..Hooks::default() };
    let result = run_nested_sampling_with(&mut problem, &ns, &mut hooks)?;
    let dir = &cfg.outdir;
    write_samples_file(&dir.join(format!("{}.samples.jsonl", career.player_id)), career, ModelKind::Gp, &ns, &result)?;
    let opts = SummaryOptions::new(cfg.horizon, splitmix64(ns.seed));
    let summary = summarise_trajectory(career, &result, &opts)?;
    for w in &summary.warnings {
        log::warn!("{}: {w}", career.player_id);
    }
    write_atomic(&dir.join(format!("{}.trajectory.csv", career.player_id)), |w| {
        write_trajectory_csv(w, career, &summary)
    })?;
    write_atomic(&dir.join(format!("{}.summary.json", career.player_id)), |w| {
        serde_json::to_writer_pretty(&mut *w, &summary_json(&summary))?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

fn cmd_fit(cfg: &RunConfig) -> Result<bool> {
    let (careers, bad) = load_careers(cfg)?;
    let (_, failed) = for_each_player(&careers, |c| fit_one(cfg, c));
    Ok(!(failed || bad))
}

fn summary_files(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    expand_inputs(&cfg.inputs, ".summary.json")
}

fn cmd_rank(cfg: &RunConfig) -> Result<bool> {
    let records = summary_files(cfg)?
        .iter()
        .map(|p| read_summary_file(p))
        .collect::<Result<Vec<_>>>()?;
    let summaries: Vec<_> =
        records.iter().filter(|r| r.innings >= cfg.min_innings).map(summary_for_ranking).collect();
    if summaries.is_empty() {
        return Err(Error::NoEligiblePlayers("no fitted player passed --min-innings".into()));
    }
    let refs: Vec<_> = summaries.iter().collect();
    let rows = rank_players(&refs);
    write_atomic(&cfg.outdir.join("rankings.csv"), |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["rank", "player", "innings", "career_average", "nu_next_median", "ci68_lo", "ci68_hi"])?;
        for r in &rows {
            out.write_record([
                r.rank.to_string(),
                r.player.clone(),
                r.innings.to_string(),
                r.career_average.map(sig6).unwrap_or_default(),
                sig6(r.nu_next_median),
                sig6(r.ci68_lo),
                sig6(r.ci68_hi),
            ])?;
        }
        out.flush()?;
        Ok(())
    })?;
    Ok(true)
}

fn cmd_predict(cfg: &RunConfig) -> Result<bool> {
    let mut records = summary_files(cfg)?
        .iter()
        .map(|p| read_summary_file(p))
        .collect::<Result<Vec<_>>>()?;
    records.retain(|r| r.innings >= cfg.min_innings);
    records.sort_by(|a, b| a.player.cmp(&b.player));
    if records.is_empty() {
        return Err(Error::NoEligiblePlayers("no fitted player passed --min-innings".into()));
    }
    write_atomic(&cfg.outdir.join("predictions.csv"), |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["player", "innings", "nu_next_median", "ci68_lo", "ci68_hi", "ci95_lo", "ci95_hi"])?;
        for r in &records {
            let iv = &r.next_innings;
            out.write_record([
                r.player.clone(),
                r.innings.to_string(),
                sig6(iv.median),
                sig6(iv.lo68),
                sig6(iv.hi68),
                sig6(iv.lo95),
                sig6(iv.hi95),
            ])?;
        }
        out.flush()?;
        Ok(())
    })?;
    let pairs: Vec<(usize, usize)> =
        (0..records.len()).flat_map(|i| (i + 1..records.len()).map(move |j| (i, j))).collect();
    let results = pairs
        .iter()
        .map(|&(i, j)| head_to_head(&records[i].next_draws, &records[j].next_draws))
        .collect::<Result<Vec<_>>>()?;
    write_atomic(&cfg.outdir.join("head_to_head.csv"), |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["player_a", "player_b", "probability_a_outscores_b", "expected_margin"])?;
        for (&(i, j), h) in pairs.iter().zip(&results) {
            out.write_record([records[i].player.clone(), records[j].player.clone(), sig6(h.probability), sig6(h.margin)])?;
        }
        out.flush()?;
        Ok(())
    })?;
    Ok(true)
}

struct EvidenceRow {
    player: String,
    log_z: f64,
    log_z_err: f64,
    log_z0: f64,
    log_z0_err: f64,
}

fn cmd_evidence(cfg: &RunConfig) -> Result<bool> {
    let (careers, bad) = load_careers(cfg)?;
    let (rows, failed) = for_each_player(&careers, |c| {
        let ns = cfg.player_ns(&c.player_id);
        let full = cricket_gp::inference::fit_player(c, &ns)?;
        let null = fit_constant_model(c, &ns)?;
        Ok(EvidenceRow {
            player: c.player_id.clone(),
            log_z: full.log_z,
            log_z_err: full.log_z_err,
            log_z0: null.log_z,
            log_z0_err: null.log_z_err,
        })
    });
    write_atomic(&cfg.outdir.join("evidence.csv"), |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["player", "log_z", "log_z0", "log_bayes_factor", "log_z_err", "log_z0_err"])?;
        for r in &rows {
            out.write_record([
                r.player.clone(),
                sig6(r.log_z),
                sig6(r.log_z0),
                sig6(r.log_z - r.log_z0),
                sig6(r.log_z_err),
                sig6(r.log_z0_err),
            ])?;
        }
        out.flush()?;
        Ok(())
    })?;
    Ok(!(failed || bad))
}

fn cmd_loocv(cfg: &RunConfig) -> Result<bool> {
    let (careers, bad) = load_careers(cfg)?;
    let mut filters = STANDARD_FILTERS.to_vec();
    if cfg.min_innings > 0 && !filters.contains(&Some(cfg.min_innings)) {
        filters.push(Some(cfg.min_innings));
    }
    let models = Predictor::standard_set();
    let table = loocv_mse(&careers, &models, &cfg.ns, &filters)?;
    let filter_label = |f: Option<usize>| f.map_or("all".to_owned(), |m| format!("min{m}"));
    write_atomic(&cfg.outdir.join("loocv.csv"), |w| {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["model".to_owned()];
        for &f in &filters {
            header.push(format!("mse_{}", filter_label(f)));
            header.push(format!("n_players_{}", filter_label(f)));
        }
        out.write_record(&header)?;
        for m in &models {
            let label = m.label();
            let mut row = vec![label.clone()];
            for &f in &filters {
                match table.rows.iter().find(|r| r.model == label && r.min_innings == f) {
                    Some(r) if r.n_players > 0 => {
                        row.push(sig6(r.mse));
                        row.push(r.n_players.to_string());
                    }
                    _ => {
                        row.push(String::new());
                        row.push("0".into());
                    }
                }
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    })?;
    if table.excluded > 0 {
        log::warn!("{} players excluded: no innings left to predict from", table.excluded);
    }
    Ok(!bad)
}

fn cmd_hier(cfg: &RunConfig) -> Result<bool> {
    let files = expand_inputs(&cfg.inputs, ".samples.jsonl")?;
    let mut per_player = Vec::new();
    for f in &files {
        let (header, result) = read_samples_file(f)?;
        if header.innings < cfg.min_innings {
            continue;
        }
        let k = cfg.effect.index(header.model);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(derive_seed(cfg.seed, &header.player));
        let resampled = posterior_resample(&result, SUMMARY_DRAWS, &mut rng)?;
        if let Some(w) = &resampled.warning {
            log::warn!("{}: {w}", header.player);
        }
        per_player.push(resampled.draws.iter().map(|d| d[k]).collect::<Vec<f64>>());
    }
    let post = hierarchical_postprocess(&per_player, &HierConfig { seed: cfg.seed, ..HierConfig::default() })?;
    let name = cfg.effect.name();
    write_atomic(&cfg.outdir.join(format!("hier_{name}.csv")), |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["draw", &format!("mu_{name}"), &format!("sigma_{name}")])?;
        for (i, d) in post.draws.iter().enumerate() {
            out.write_record([(i + 1).to_string(), sig6(d.mu_eff), sig6(d.sigma_eff)])?;
        }
        out.flush()?;
        Ok(())
    })?;
    let mean = post.mean();
    println!(
        "{}",
        json!({
            "effect": name,
            "players_used": post.players_used,
            "excluded": post.excluded,
            "mu_mean": sig6(mean.mu_eff).parse::<f64>().unwrap_or(f64::NAN),
            "sigma_mean": sig6(mean.sigma_eff).parse::<f64>().unwrap_or(f64::NAN),
            "rhat": [sig6(post.rhat[0]), sig6(post.rhat[1])],
            "converged": post.converged,
        })
    );
    Ok(true)
}

fn cmd_simulate(cfg: &RunConfig) -> Result<bool> {
    let truth = match &cfg.file {
        Some(kv) => TruthSpec::from_key_values(kv)?,
        None => TruthSpec::default(),
    };
    let dir = cfg.outdir.join("simulated");
    let schedule = default_schedule(truth.innings);
    let width = truth.players.max(1).to_string().len().max(3);
    let mut truth_rows = Vec::new();
    for k in 1..=truth.players {
        let player = format!("sim{k:0width$}");
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(derive_seed(cfg.seed, &player));
        let sim = simulate_career_with_truth(&player, &truth.params, &schedule, truth.censor_fraction, &mut rng)?;
        write_atomic(&dir.join(format!("{player}.csv")), |w| write_career(&sim.career, w))?;
        log::info!("{player}: career average {:?}", career_average(&sim.career).ok());
        truth_rows.push((player, sim.mu2));
    }
    write_atomic(&dir.join("truth.tsv"), |w| {
        writeln!(w, "player\tt\tmu2")?;
        for (p, mu2) in &truth_rows {
            for (t, m) in mu2.iter().enumerate() {
                writeln!(w, "{p}\t{}\t{}", t + 1, sig6(*m))?;
            }
        }
        Ok(())
    })?;
    Ok(true)
}

fn run(cfg: &RunConfig) -> Result<bool> {
    match cfg.command {
        Command::Fit => cmd_fit(cfg),
        Command::Predict => cmd_predict(cfg),
        Command::Rank => cmd_rank(cfg),
        Command::Evidence => cmd_evidence(cfg),
        Command::Loocv => cmd_loocv(cfg),
        Command::Hier => cmd_hier(cfg),
        Command::Simulate => cmd_simulate(cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = match RunConfig::resolve(cli.command, cli.opts) {
        Ok(c) => c,
        Err(e) => {
            report(&e, None);
            return ExitCode::from(2);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build() {
        Ok(p) => p,
        Err(e) => {
            report(&Error::InvalidParameter(format!("cannot start worker pool: {e}")), None);
            return ExitCode::FAILURE;
        }
    };
    match pool.install(|| run(&cfg)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            report(&e, None);
            ExitCode::FAILURE
        }
    }
}
