//! Shared-policy training loop and deterministic evaluation.

use alloc::vec::Vec;

use thiserror::Error;

use crate::derive_seed;
use crate::env::{episode_utility, run_episode, EnvError, EpisodeLog, MarketEnv, Population, SimConfig};
use crate::policy::{ActorCritic, Deterministic, NetConfig, PpoConfig, PpoError, PpoLearner, RolloutRecord, UpdateStats};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub episodes: usize,
    /// Stop as soon as this many updates have run.
    pub max_updates: Option<usize>,
    pub ppo: PpoConfig,
    pub net: NetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { episodes: 1, max_updates: None, ppo: PpoConfig::default(), net: NetConfig::default() }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("training needs a learning population")]
    NotLearning,
    #[error("training budget must be at least one episode")]
    EmptyBudget,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
}

/// Per-episode summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats {
    pub episode: u64,
    pub mean_reward: f64,
    pub utility: f64,
    pub updates_so_far: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub curves: Vec<UpdateStats>,
    pub episodes: Vec<EpisodeStats>,
}

/// Policy, optimizer state and the per-agent rollout buffers.
pub struct Trainer {
    pub learner: PpoLearner,
    buffers: Vec<Vec<RolloutRecord>>,
    next_episode: u64,
}

impl Trainer {
    /// Fresh network initialized from `seed`.
    pub fn new(cfg: &TrainConfig, seed: u64) -> Self {
        let params = ActorCritic::seeded(&cfg.net, derive_seed(seed, u64::MAX));
        Self::from_params(params, cfg.ppo, seed)
    }

    pub fn from_params(params: ActorCritic, ppo: PpoConfig, seed: u64) -> Self {
        Trainer {
            learner: PpoLearner::new(params, ppo, derive_seed(seed, u64::MAX - 1)),
            buffers: Vec::new(),
            next_episode: 0,
        }
    }

    pub fn params(&self) -> &ActorCritic {
        &self.learner.params
    }

    /// Runs one episode, updating whenever an agent's buffer fills.
    ///
    /// Buffers persist across episodes. Stops early once `max_updates`
    /// updates have happened, returning the stats collected so far.
    pub fn run_episode(
        &mut self,
        sim: &SimConfig,
        population: &Population,
        seed: u64,
        max_updates: Option<usize>,
        curves: &mut Vec<UpdateStats>,
    ) -> Result<EpisodeStats, TrainError> {
        if !population.is_learning() {
            return Err(TrainError::NotLearning);
        }
        let episode = self.next_episode;
        self.next_episode += 1;
        if self.buffers.len() != sim.n_agents {
            self.buffers.resize_with(sim.n_agents, Vec::new);
        }
        let mut env = MarketEnv::new(sim.clone(), *population, derive_seed(seed, episode), episode)?;
        let mut log = EpisodeLog::default();
        let rollout_len = self.learner.config.rollout_len.max(1);
        while !env.is_done() {
            if max_updates.is_some_and(|m| self.learner.updates() >= m) {
                break;
            }
            let out = env.step(&self.learner.params)?;
            if let Some(rec) = out.transition {
                let buf = &mut self.buffers[out.agent];
                buf.push(rec);
                if buf.len() >= rollout_len {
                    let stats = self.learner.update(buf)?;
                    buf.clear();
                    curves.push(stats);
                }
            }
            log.record(out);
        }
        Ok(EpisodeStats {
            episode,
            mean_reward: log.mean_reward(),
            utility: episode_utility(&log),
            updates_so_far: self.learner.updates(),
        })
    }

    /// Number of transitions waiting in each agent's buffer.
    pub fn buffer_lengths(&self) -> Vec<usize> {
        self.buffers.iter().map(Vec::len).collect()
    }
}

/// Trains a fresh shared policy for the configured budget.
pub fn train(
    sim: &SimConfig,
    population: &Population,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(ActorCritic, TrainReport), TrainError> {
    let mut trainer = Trainer::new(cfg, seed);
    let report = train_with(&mut trainer, sim, population, cfg, seed)?;
    Ok((trainer.learner.params, report))
}

/// Continues training an existing trainer.
pub fn train_with(
    trainer: &mut Trainer,
    sim: &SimConfig,
    population: &Population,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainReport, TrainError> {
    if cfg.episodes == 0 {
        return Err(TrainError::EmptyBudget);
    }
    let mut report = TrainReport::default();
    for _ in 0..cfg.episodes {
        if cfg.max_updates.is_some_and(|m| trainer.learner.updates() >= m) {
            break;
        }
        let stats = trainer.run_episode(sim, population, seed, cfg.max_updates, &mut report.curves)?;
        report.episodes.push(stats);
    }
    Ok(report)
}

/// Runs one greedy (mean-action) episode per seed.
pub fn evaluate_deterministic(
    sim: &SimConfig,
    population: &Population,
    params: &ActorCritic,
    seeds: &[u64],
) -> Result<Vec<EpisodeLog>, EnvError> {
    let policy = Deterministic(params);
    seeds.iter().map(|&s| run_episode(sim, population, &policy, s, 0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traits::{TraitMask, TraitPriors};
    use alloc::vec;

    fn pop() -> Population {
        Population::Learning { priors: TraitPriors::default(), mask: TraitMask::NONE }
    }

    fn tiny() -> TrainConfig {
        TrainConfig {
            episodes: 3,
            max_updates: None,
            ppo: PpoConfig { rollout_len: 16, batch_size: 8, epochs: 2, ..PpoConfig::default() },
            net: NetConfig { hidden_width: 8, hidden_layers: 2, ..NetConfig::default() },
        }
    }

    #[test]
    fn one_episode_with_default_rollout_never_updates() {
        let sim = SimConfig { n_agents: 200, t_sim: 2110, ..SimConfig::default() };
        let cfg = TrainConfig {
            episodes: 1,
            net: NetConfig { hidden_width: 4, hidden_layers: 1, ..NetConfig::default() },
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(&cfg, 1);
        let report = train_with(&mut trainer, &sim, &pop(), &cfg, 1).unwrap();
        assert!(report.curves.is_empty());
        let held: usize = trainer.buffer_lengths().iter().sum();
        // one transition per selection after an agent's first
        let selected = trainer.buffer_lengths().iter().filter(|&&n| n > 0).count();
        assert!(held + selected <= 2110 && held >= 2110 - 200);
    }

    #[test]
    fn curves_have_one_row_per_update() {
        let sim = SimConfig { n_agents: 2, t_sim: 120, halts: vec![(1, 10)], ..SimConfig::default() };
        let (_, report) = train(&sim, &pop(), &tiny(), 3).unwrap();
        let last = report.episodes.last().unwrap().updates_so_far;
        assert_eq!(report.curves.len(), last);
        assert!(last > 0);
        for (i, c) in report.curves.iter().enumerate() {
            assert_eq!(c.update_idx, i);
        }
    }

    #[test]
    fn max_updates_is_exact() {
        let sim = SimConfig { n_agents: 2, t_sim: 200, halts: vec![(1, 10)], ..SimConfig::default() };
        let cfg = TrainConfig { episodes: 50, max_updates: Some(5), ..tiny() };
        let (_, report) = train(&sim, &pop(), &cfg, 4).unwrap();
        assert_eq!(report.curves.len(), 5);
    }

    #[test]
    fn baselines_cannot_train() {
        let sim = SimConfig { n_agents: 2, t_sim: 20, halts: vec![], ..SimConfig::default() };
        let p = Population::Zi(Default::default());
        assert_eq!(train(&sim, &p, &tiny(), 0).unwrap_err(), TrainError::NotLearning);
    }
}
