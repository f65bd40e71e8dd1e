//! Clipped-surrogate PPO over one agent's rollout buffer.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use thiserror::Error;

use super::{gaussian_entropy, squashed_log_prob, ActorCritic};
use crate::rl::{Action, Observation, ACT_DIM};
use crate::SimRng;
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PpoConfig {
    pub rollout_len: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub clip_eps: f64,
    pub max_grad_norm: f64,
    pub gae_lambda: f64,
    /// Normalized rewards are clipped to `[-reward_clip, reward_clip]`.
    pub reward_clip: f64,
    /// Reward std below this is treated as zero.
    pub std_floor: f64,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            rollout_len: 1024,
            batch_size: 512,
            epochs: 5,
            learning_rate: 1e-4,
            clip_eps: 0.8,
            max_grad_norm: 0.5,
            gae_lambda: 0.95,
            reward_clip: 5.0,
            std_floor: 1e-8,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |key, reason| Err(PpoError::Config { key, reason });
        if self.rollout_len == 0 {
            return bad("rollout_len", "must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1");
        }
        let positive = [
            ("learning_rate", self.learning_rate),
            ("clip_eps", self.clip_eps),
            ("max_grad_norm", self.max_grad_norm),
            ("reward_clip", self.reward_clip),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(key, "must be positive");
            }
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda", "must lie in [0, 1]");
        }
        if !(self.std_floor.is_finite() && self.std_floor >= 0.0) {
            return bad("std_floor", "must be non-negative");
        }
        Ok(())
    }
}

/// One transition `(o, a, log pi, r, o')` of a single agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutRecord {
    pub obs: Observation,
    pub action: Action,
    pub pre_squash: [f64; ACT_DIM],
    pub log_prob: f64,
    pub reward: f64,
    pub next_obs: Observation,
    /// Discount factor of the agent that produced the transition.
    pub gamma: f64,
    /// Episode the transition came from; GAE does not bootstrap across episodes.
    pub episode: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PpoError {
    #[error("empty rollout buffer")]
    EmptyBuffer,
    #[error("invalid {key}: {reason}")]
    Config { key: &'static str, reason: &'static str },
    #[error("non-finite {what} at update {update} (actor loss {actor_loss}, critic loss {critic_loss})")]
    NonFinite { what: &'static str, update: usize, actor_loss: f64, critic_loss: f64 },
}

/// Diagnostics of one buffer flush.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub update_idx: usize,
    pub mean_reward: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Scales rewards by their sample std and clips them. A buffer whose std is
/// below `floor` carries no scale information and maps to zeros.
pub fn normalize_rewards(rewards: &[f64], floor: f64, clip: f64) -> Vec<f64> {
    let n = rewards.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mean = rewards.iter().sum::<f64>() / n as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    if !(std >= floor) {
        return vec![0.0; n];
    }
    rewards.iter().map(|r| (r / std).clamp(-clip, clip)).collect()
}

/// Generalized advantage estimation with a per-record discount.
///
/// `continues[i]` says whether record `i + 1` follows record `i` within the
/// same episode; otherwise the recursion restarts. Returns advantages and
/// critic targets.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    gammas: &[f64],
    continues: &[bool],
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut carry = 0.0;
    for i in (0..n).rev() {
        let delta = rewards[i] + gammas[i] * next_values[i] - values[i];
        let follow = if i + 1 < n && continues[i] { carry } else { 0.0 };
        carry = delta + gammas[i] * lambda * follow;
        adv[i] = carry;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Inputs of one gradient step.
#[derive(Debug, Clone, Default)]
pub struct MiniBatch {
    pub obs: Vec<Observation>,
    pub pre_squash: Vec<[f64; ACT_DIM]>,
    pub old_log_prob: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl MiniBatch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub actor: f64,
    pub critic: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.actor + self.critic
    }
}

/// Clipped surrogate (negated) plus half the mean squared value error.
pub fn actor_critic_loss(params: &ActorCritic, batch: &MiniBatch, clip_eps: f64) -> LossTerms {
    let n = batch.len() as f64;
    let mut terms = LossTerms { entropy: gaussian_entropy(&params.log_std), ..LossTerms::default() };
    for i in 0..batch.len() {
        let mean = params.mean(&batch.obs[i]);
        let lp = squashed_log_prob(&mean, &params.log_std, &batch.pre_squash[i]);
        let ratio = (lp - batch.old_log_prob[i]).exp();
        let a = batch.advantages[i];
        let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
        terms.actor -= (ratio * a).min(clipped * a) / n;
        if (ratio - clipped).abs() > 0.0 {
            terms.clip_fraction += 1.0 / n;
        }
        let v = params.value(&batch.obs[i]);
        terms.critic += 0.5 * (v - batch.returns[i]).powi(2) / n;
    }
    terms
}

/// Loss and its gradient, laid out like [`ActorCritic::flat_params`].
pub fn actor_critic_loss_grad(
    params: &ActorCritic,
    batch: &MiniBatch,
    clip_eps: f64,
) -> (LossTerms, Vec<f64>) {
    let n = batch.len() as f64;
    let a_len = params.actor.params().len();
    let c_len = params.critic.params().len();
    let mut grad = vec![0.0; a_len + ACT_DIM + c_len];
    let mut terms = LossTerms { entropy: gaussian_entropy(&params.log_std), ..LossTerms::default() };
    let std = [params.log_std[0].exp(), params.log_std[1].exp()];

    for i in 0..batch.len() {
        let obs = &batch.obs[i].0;
        let z = &batch.pre_squash[i];
        let acts = params.actor.forward_cached(obs);
        let mean = acts.output();
        let lp = squashed_log_prob(mean, &params.log_std, z);
        let ratio = (lp - batch.old_log_prob[i]).exp();
        let a = batch.advantages[i];
        let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
        let unclipped_term = ratio * a;
        let clipped_term = clipped * a;
        terms.actor -= unclipped_term.min(clipped_term) / n;
        if (ratio - clipped).abs() > 0.0 {
            terms.clip_fraction += 1.0 / n;
        }
        // the min picks the unclipped branch => d/d(log pi) = -ratio * A / n
        if unclipped_term <= clipped_term {
            let d_lp = -ratio * a / n;
            let mut d_mean = [0.0; ACT_DIM];
            for d in 0..ACT_DIM {
                let u = (z[d] - mean[d]) / std[d];
                d_mean[d] = d_lp * u / std[d];
                grad[a_len + d] += d_lp * (u * u - 1.0);
            }
            params.actor.backward(&acts, &d_mean, &mut grad[..a_len]);
        }

        let c_acts = params.critic.forward_cached(obs);
        let v = c_acts.output()[0];
        let err = v - batch.returns[i];
        terms.critic += 0.5 * err * err / n;
        params.critic.backward(&c_acts, &[err / n], &mut grad[a_len + ACT_DIM..]);
    }
    (terms, grad)
}

/// Adam with the usual moment constants.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
        }
    }
}

fn clip_grad_norm(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= scale);
    }
}

/// Shared parameters plus the optimizer state that updates them.
#[derive(Debug, Clone)]
pub struct PpoLearner {
    pub params: ActorCritic,
    pub config: PpoConfig,
    actor_opt: Adam,
    critic_opt: Adam,
    rng: SimRng,
    updates: usize,
}

impl PpoLearner {
    pub fn new(params: ActorCritic, config: PpoConfig, seed: u64) -> Self {
        let a_len = params.actor.params().len() + ACT_DIM;
        let c_len = params.critic.params().len();
        PpoLearner {
            actor_opt: Adam::new(a_len, config.learning_rate),
            critic_opt: Adam::new(c_len, config.learning_rate),
            params,
            config,
            rng: SimRng::seed_from_u64(seed),
            updates: 0,
        }
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Builds normalized-reward advantages and targets for a buffer.
    pub fn prepare(&self, buffer: &[RolloutRecord]) -> (Vec<f64>, Vec<f64>) {
        let cfg = &self.config;
        let raw: Vec<f64> = buffer.iter().map(|r| r.reward).collect();
        let rewards = normalize_rewards(&raw, cfg.std_floor, cfg.reward_clip);
        let values: Vec<f64> = buffer.iter().map(|r| self.params.value(&r.obs)).collect();
        let next_values: Vec<f64> = buffer.iter().map(|r| self.params.value(&r.next_obs)).collect();
        let gammas: Vec<f64> = buffer.iter().map(|r| r.gamma).collect();
        let continues: Vec<bool> = buffer
            .windows(2)
            .map(|w| w[0].episode == w[1].episode)
            .chain(core::iter::once(false))
            .collect();
        gae(&rewards, &values, &next_values, &gammas, &continues, cfg.gae_lambda)
    }

    /// Runs the configured epochs of minibatch updates on one buffer.
    pub fn update(&mut self, buffer: &[RolloutRecord]) -> Result<UpdateStats, PpoError> {
        if buffer.is_empty() {
            return Err(PpoError::EmptyBuffer);
        }
        let cfg = self.config;
        let (advantages, returns) = self.prepare(buffer);
        let a_len = self.params.actor.params().len() + ACT_DIM;

        let mut idx: Vec<usize> = (0..buffer.len()).collect();
        let mut sums = LossTerms::default();
        let mut steps = 0usize;
        for _ in 0..cfg.epochs {
            idx.shuffle(&mut self.rng);
            for chunk in idx.chunks(cfg.batch_size.max(1)) {
                let mut batch = MiniBatch::default();
                for &i in chunk {
                    let r = &buffer[i];
                    batch.obs.push(r.obs);
                    batch.pre_squash.push(r.pre_squash);
                    batch.old_log_prob.push(r.log_prob);
                    batch.advantages.push(advantages[i]);
                    batch.returns.push(returns[i]);
                }
                if cfg.normalize_advantages {
                    standardize(&mut batch.advantages, cfg.std_floor);
                }
                let (terms, mut grad) = actor_critic_loss_grad(&self.params, &batch, cfg.clip_eps);
                if !(terms.actor.is_finite() && terms.critic.is_finite()) || grad.iter().any(|g| !g.is_finite()) {
                    return Err(PpoError::NonFinite {
                        what: "loss or gradient",
                        update: self.updates,
                        actor_loss: terms.actor,
                        critic_loss: terms.critic,
                    });
                }
                let (g_actor, g_critic) = grad.split_at_mut(a_len);
                clip_grad_norm(g_actor, cfg.max_grad_norm);
                clip_grad_norm(g_critic, cfg.max_grad_norm);

                let mut flat = self.params.flat_params();
                let (p_actor, p_critic) = flat.split_at_mut(a_len);
                self.actor_opt.step(p_actor, g_actor);
                self.critic_opt.step(p_critic, g_critic);
                self.params.set_flat_params(&flat);

                sums.actor += terms.actor;
                sums.critic += terms.critic;
                sums.entropy += terms.entropy;
                sums.clip_fraction += terms.clip_fraction;
                steps += 1;
            }
        }
        if !self.params.is_finite() {
            return Err(PpoError::NonFinite {
                what: "parameters",
                update: self.updates,
                actor_loss: sums.actor,
                critic_loss: sums.critic,
            });
        }
        let k = steps.max(1) as f64;
        let stats = UpdateStats {
            update_idx: self.updates,
            mean_reward: buffer.iter().map(|r| r.reward).sum::<f64>() / buffer.len() as f64,
            actor_loss: sums.actor / k,
            critic_loss: sums.critic / k,
            entropy: sums.entropy / k,
            clip_fraction: sums.clip_fraction / k,
        };
        self.updates += 1;
        Ok(stats)
    }
}

fn standardize(xs: &mut [f64], floor: f64) {
    let n = xs.len();
    if n < 2 {
        return;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt().max(floor);
    xs.iter_mut().for_each(|x| *x = (*x - mean) / std);
}
