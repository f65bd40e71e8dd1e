//! Mode dispatch: simulations, training, calibration, analysis and
//! ablations, fanned over a worker pool. Only this module writes files.

use std::fmt::Display;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ecomarket_core::baselines::BaselineParams;
use ecomarket_core::derive_seed;
use ecomarket_core::env::{aggregate_utility, EpisodeLog, Idle, MarketEnv, Population, SimConfig};
use ecomarket_core::lob::Level;
use ecomarket_core::ot::{evaluate_candidate, rank, Clouds, OtError, Ranked, Score, ScoreOptions};
use ecomarket_core::policy::{ActorCritic, Deterministic, Policy, PolicyStep};
use ecomarket_core::rl::Observation;
use ecomarket_core::stylized::{analyze, bin_episode, standardize_returns, BarSeries, ReturnPanel};
use ecomarket_core::train::{evaluate_deterministic, train, TrainReport, Trainer};
use log::{info, warn};
use rand_core::RngCore;
use rayon::prelude::*;

use crate::config::{Mode, RunConfig, Variant};
use crate::error::Error;
use crate::formats::{self, AblationRow, DatedBars, FormatError};

const RUN_STREAM: u64 = 1;
const REFERENCE_STREAM: u64 = 2;
const EVAL_STREAM: u64 = 3;

/// Seed of an auxiliary stream, disjoint from per-episode seeds.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    derive_seed(derive_seed(seed, u64::MAX - 2), stream)
}

/// Seeds of the held-out greedy episodes used by ablations.
pub fn eval_seeds(seed: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|e| derive_seed(stream_seed(seed, EVAL_STREAM), e)).collect()
}

/// What drives learning agents during a simulation.
#[derive(Debug, Clone)]
pub enum Actor {
    Idle,
    Sampled(ActorCritic),
    Greedy(ActorCritic),
}

impl Policy for Actor {
    fn act(&self, obs: &Observation, rng: &mut dyn RngCore) -> PolicyStep {
        match self {
            Actor::Idle => Idle.act(obs, rng),
            Actor::Sampled(p) => p.act(obs, rng),
            Actor::Greedy(p) => Deterministic(p).act(obs, rng),
        }
    }
}

impl Actor {
    fn new(params: ActorCritic, greedy: bool) -> Self {
        if greedy {
            Actor::Greedy(params)
        } else {
            Actor::Sampled(params)
        }
    }
}

/// Checkpointed or freshly initialized policy for the configured population.
pub fn configured_actor(cfg: &RunConfig) -> Result<Actor, Error> {
    if !cfg.population.is_learning() {
        return Ok(Actor::Idle);
    }
    let params = match &cfg.checkpoint {
        Some(p) => formats::load_checkpoint(p).map_err(|e| Error::file(p, e))?,
        None => ActorCritic::seeded(&cfg.net, derive_seed(cfg.seed, u64::MAX)),
    };
    Ok(Actor::new(params, cfg.deterministic))
}

/// One simulated episode and the book it left behind.
#[derive(Debug, Clone)]
pub struct Episode {
    pub index: u64,
    pub log: EpisodeLog,
    pub book: Vec<Level>,
}

/// Episode `index` uses seed `derive_seed(seed, index)`, as in training.
pub fn simulate_episode(
    sim: &SimConfig,
    population: &Population,
    policy: &dyn Policy,
    seed: u64,
    index: u64,
) -> Result<Episode, Error> {
    let mut env = MarketEnv::new(sim.clone(), *population, derive_seed(seed, index), index)?;
    let mut log = EpisodeLog { gbm_vol: env.gbm_vol(), ..EpisodeLog::default() };
    while !env.is_done() {
        log.record(env.step(policy)?);
    }
    log.final_agents = env.agents().to_vec();
    Ok(Episode { index, log, book: env.book().snapshot() })
}

/// Runs episodes `0..n` in parallel, returned in index order.
pub fn simulate_many(sim: &SimConfig, population: &Population, actor: &Actor, seed: u64, n: usize) -> Result<Vec<Episode>, Error> {
    (0..n as u64)
        .into_par_iter()
        .map(|k| simulate_episode(sim, population, actor, seed, k))
        .collect()
}

/// Bins every episode into one day labelled `{prefix}{index}`.
pub fn bars_from_episodes<'a>(
    logs: impl IntoIterator<Item = (u64, &'a EpisodeLog)>,
    t_len: usize,
    prefix: &str,
) -> Result<DatedBars, Error> {
    let mut dates = Vec::new();
    let mut days = Vec::new();
    for (k, log) in logs {
        let day = bin_episode(&log.mid_series(), &log.volume_series(), t_len)
            .ok_or_else(|| Error::Usage(format!("episode of {} steps is shorter than t_len = {t_len}", log.steps.len())))?;
        dates.push(format!("{prefix}{k:04}"));
        days.push(day);
    }
    Ok(DatedBars { dates, bars: BarSeries::new(days)? })
}

/// Synthetic stand-in for proprietary reference data: an FCN market with
/// the given parameters, one day per episode.
pub fn reference_market(
    sim: &SimConfig,
    baseline: &BaselineParams,
    runs: usize,
    seed: u64,
    t_len: usize,
) -> Result<DatedBars, Error> {
    let eps = simulate_many(sim, &Population::Fcn(*baseline), &Actor::Idle, stream_seed(seed, REFERENCE_STREAM), runs)?;
    bars_from_episodes(eps.iter().map(|e| (e.index, &e.log)), t_len, "synthetic-")
}

/// Standardized panels of `runs` episodes, one per episode, simulated in order.
pub fn run_panels(
    sim: &SimConfig,
    population: &Population,
    policy: &dyn Policy,
    seed: u64,
    runs: usize,
    t_len: usize,
) -> Result<Vec<ReturnPanel>, Error> {
    (0..runs as u64)
        .map(|k| {
            let ep = simulate_episode(sim, population, policy, seed, k)?;
            let bars = bars_from_episodes([(k, &ep.log)], t_len, "")?;
            Ok(standardize_returns(&bars.bars)?)
        })
        .collect()
}

/// Parallel grid search; results are reduced by candidate index, so the
/// ranking does not depend on the number of workers.
pub fn calibrate_parallel<C, E, F>(
    candidates: &[C],
    runner: F,
    reference: &ReturnPanel,
    opts: &ScoreOptions,
) -> Result<Vec<Ranked<C>>, OtError>
where
    C: Clone + Send + Sync,
    E: Display,
    F: Fn(usize, &C) -> Result<Vec<ReturnPanel>, E> + Sync,
{
    let reference = Clouds::new(reference, opts)?;
    let results = candidates
        .par_iter()
        .enumerate()
        .map(|(index, c)| {
            let score = evaluate_candidate(runner(index, c), &reference, opts);
            if let Err(e) = &score {
                warn!("candidate {index} failed: {e}");
            }
            Ranked { index, candidate: c.clone(), score, rank: None }
        })
        .collect();
    Ok(rank(results))
}

/// Files produced by a run.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl Artifacts {
    fn write(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<(), FormatError>,
    ) -> Result<(), Error> {
        let path = self.dir.join(name);
        let file = fs::File::create(&path).map_err(|e| Error::file(&path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w).map_err(|e| Error::file(&path, e))?;
        w.flush().map_err(|e| Error::file(&path, e))?;
        self.files.push(path);
        Ok(())
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, Error> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| Error::Pool(e.to_string()))
}

/// Runs the configured mode into `cfg.out`.
///
/// The resolved configuration is written first. When a mode fails after
/// that, an `INCOMPLETE` file holding the error marks the directory.
pub fn run_experiment(cfg: &RunConfig) -> Result<Artifacts, Error> {
    cfg.validate()?;
    let dir = cfg.out.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
    let _ = fs::remove_file(dir.join("INCOMPLETE"));
    let mut art = Artifacts { dir: dir.clone(), files: Vec::new() };
    let resolved = cfg.to_toml();
    art.write("config.toml", |w| Ok(w.write_all(resolved.as_bytes())?))?;

    let result = pool(cfg.jobs)?.install(|| match cfg.mode {
        Mode::Sim => run_sim(cfg, &mut art),
        Mode::Train => run_train(cfg, &mut art),
        Mode::Calibrate => run_calibrate(cfg, &mut art),
        Mode::Analyze => run_analyze(cfg, &mut art),
        Mode::Ablate => run_ablate(cfg, &mut art),
    });
    if let Err(e) = &result {
        let _ = fs::write(dir.join("INCOMPLETE"), format!("{e}\n"));
    }
    result.map(|_| art)
}

fn run_sim(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Error> {
    let population = cfg.population();
    let actor = configured_actor(cfg)?;
    info!("simulating {} episode(s) of {}", cfg.episodes, cfg.population);
    let episodes = simulate_many(&cfg.sim, &population, &actor, cfg.seed, cfg.episodes)?;
    for ep in &episodes {
        let k = ep.index;
        art.write(&format!("episode_{k:04}.csv"), |w| formats::write_episode(w, &ep.log))?;
        art.write(&format!("book_{k:04}.csv"), |w| formats::write_book(w, cfg.sim.t_sim, &ep.book))?;
        if population.is_learning() {
            art.write(&format!("rewards_{k:04}.csv"), |w| formats::write_rewards(w, &ep.log.decisions))?;
            art.write(&format!("rollouts_{k:04}.csv"), |w| formats::write_rollouts(w, &ep.log.transitions))?;
        }
    }
    if cfg.sim.t_sim as usize >= cfg.t_len {
        let bars = bars_from_episodes(episodes.iter().map(|e| (e.index, &e.log)), cfg.t_len, "episode-")?;
        art.write("bars.csv", |w| formats::write_bars(w, &bars))?;
    } else {
        warn!("episodes shorter than t_len = {}; no bars written", cfg.t_len);
    }
    Ok(())
}

fn run_train(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Error> {
    let population = cfg.population();
    let tc = cfg.train_config();
    let mut trainer = match &cfg.checkpoint {
        Some(p) => Trainer::from_params(formats::load_checkpoint(p).map_err(|e| Error::file(p, e))?, cfg.ppo, cfg.seed),
        None => Trainer::new(&tc, cfg.seed),
    };
    let mut report = TrainReport::default();
    for _ in 0..cfg.episodes {
        if cfg.max_updates.is_some_and(|m| trainer.learner.updates() >= m) {
            break;
        }
        let stats = trainer.run_episode(&cfg.sim, &population, cfg.seed, cfg.max_updates, &mut report.curves)?;
        info!(
            "episode {}: mean reward {:.5}, utility {:.3}, {} updates",
            stats.episode, stats.mean_reward, stats.utility, stats.updates_so_far
        );
        report.episodes.push(stats);
    }
    let params = trainer.params().clone();
    art.write("checkpoint.bin", |w| Ok(w.write_all(&ecomarket_core::policy::encode_checkpoint(&params))?))?;
    art.write("curves.csv", |w| formats::write_curves(w, &report.curves))?;
    art.write("train_episodes.csv", |w| formats::write_train_episodes(w, &report.episodes))?;
    Ok(())
}

/// Reference bars from the configured file, or the synthetic market.
fn load_reference(cfg: &RunConfig, art: &mut Artifacts) -> Result<(String, DatedBars), Error> {
    match &cfg.reference {
        Some(p) => {
            let ing = formats::ingest_bars(p, cfg.t_len).map_err(|e| Error::file(p, e))?;
            Ok((label_of(p), ing.bars))
        }
        None => {
            info!("no reference file; generating {} synthetic FCN day(s)", cfg.calibration.reference_runs);
            let bars = reference_market(&cfg.sim, &cfg.baseline, cfg.calibration.reference_runs, cfg.seed, cfg.t_len)?;
            art.write("reference_bars.csv", |w| formats::write_bars(w, &bars))?;
            Ok(("synthetic_reference".to_string(), bars))
        }
    }
}

fn label_of(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string())
}

fn run_calibrate(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Error> {
    let (_, reference) = load_reference(cfg, art)?;
    let reference = standardize_returns(&reference.bars)?;
    let opts = cfg.calibration.score;
    let runs = cfg.calibration.grid.runs;
    let run_seed = stream_seed(cfg.seed, RUN_STREAM);
    if cfg.population.is_learning() {
        let base = configured_actor(cfg)?;
        let candidates = cfg.calibration.grid.candidates();
        info!("calibrating {} candidates x {runs} runs", candidates.len());
        let ranked = calibrate_parallel(
            &candidates,
            |i, c| -> Result<Vec<ReturnPanel>, Error> {
                let population = Population::Learning { priors: cfg.candidate_priors(c), mask: Default::default() };
                let actor = if cfg.calibration.train_episodes > 0 {
                    let tc = ecomarket_core::train::TrainConfig { episodes: cfg.calibration.train_episodes, ..cfg.train_config() };
                    Actor::new(train(&cfg.sim, &population, &tc, derive_seed(cfg.seed, i as u64))?.0, cfg.deterministic)
                } else {
                    base.clone()
                };
                run_panels(&cfg.sim, &population, &actor, run_seed, runs, cfg.t_len)
            },
            &reference,
            &opts,
        )?;
        art.write("calibration.csv", |w| formats::write_calibration(w, &ranked))
    } else {
        let candidates = cfg.calibration.baseline_grid.candidates();
        info!("calibrating {} baseline candidates x {runs} runs", candidates.len());
        let ranked = calibrate_parallel(
            &candidates,
            |_, c| -> Result<Vec<ReturnPanel>, Error> {
                let population = cfg.population.build(&cfg.priors, &c.apply(&cfg.baseline));
                run_panels(&cfg.sim, &population, &Idle, run_seed, runs, cfg.t_len)
            },
            &reference,
            &opts,
        )?;
        art.write("calibration.csv", |w| formats::write_calibration(w, &ranked))
    }
}

fn run_analyze(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Error> {
    let (model, bars) = match &cfg.input {
        Some(p) => (label_of(p), formats::ingest_bars(p, cfg.t_len).map_err(|e| Error::file(p, e))?.bars),
        None => {
            let actor = configured_actor(cfg)?;
            let eps = simulate_many(&cfg.sim, &cfg.population(), &actor, cfg.seed, cfg.episodes)?;
            let bars = bars_from_episodes(eps.iter().map(|e| (e.index, &e.log)), cfg.t_len, "episode-")?;
            art.write("bars.csv", |w| formats::write_bars(w, &bars))?;
            (cfg.population.to_string(), bars)
        }
    };
    let (ref_label, reference) = load_reference(cfg, art)?;
    let report = analyze(&bars.bars)?;
    let ref_report = analyze(&reference.bars)?;
    if report.acorr.is_none() {
        warn!("{model}: absolute-return autocorrelation decay is undefined");
    }
    art.write("metrics.csv", |w| formats::write_metrics(w, &[(model.clone(), report), (ref_label, ref_report)]))?;

    let opts = cfg.calibration.score;
    let score: Result<Score, String> = (|| {
        let ref_clouds = Clouds::new(&standardize_returns(&reference.bars)?, &opts)?;
        let clouds = Clouds::new(&standardize_returns(&bars.bars)?, &opts)?;
        Ok::<_, Error>(clouds.score(&ref_clouds, &opts.weights)?)
    })()
    .map_err(|e| e.to_string());
    art.write("ot.csv", |w| formats::write_ot_report(w, &[(model, score)]))
}

fn run_ablate(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Error> {
    let tc = cfg.train_config();
    let seeds = eval_seeds(cfg.seed, cfg.ablation.eval_episodes);
    let jobs: Vec<(Variant, usize)> =
        cfg.ablation.variants.iter().flat_map(|&v| (0..cfg.trials).map(move |t| (v, t))).collect();
    info!("ablation: {} variants x {} trials", cfg.ablation.variants.len(), cfg.trials);
    let rows: Vec<AblationRow> = jobs
        .par_iter()
        .map(|&(variant, trial)| {
            let population = variant.population(&cfg.priors);
            let (params, _) = train(&cfg.sim, &population, &tc, derive_seed(cfg.seed, trial as u64))?;
            let logs = evaluate_deterministic(&cfg.sim, &population, &params, &seeds)?;
            let utility = aggregate_utility(&logs);
            let mean_reward = logs.iter().map(EpisodeLog::mean_reward).sum::<f64>() / logs.len() as f64;
            info!("{variant} trial {trial}: utility {utility:.3}");
            Ok(AblationRow { variant: variant.to_string(), trial, utility, mean_reward })
        })
        .collect::<Result<_, Error>>()?;
    let summary: Vec<(String, Vec<f64>)> = cfg
        .ablation
        .variants
        .iter()
        .map(|v| {
            let name = v.to_string();
            let xs = rows.iter().filter(|r| r.variant == name).map(|r| r.utility).collect();
            (name, xs)
        })
        .collect();
    art.write("ablation_trials.csv", |w| formats::write_ablation_trials(w, &rows))?;
    art.write("ablation.csv", |w| formats::write_ablation_summary(w, &summary))
}
