//! Shared actor-critic policy with a squashed-Gaussian action head.
//!
//! The actor maps a normalized observation to the mean of a diagonal
//! Gaussian over pre-squash actions `z`; the emitted action is `tanh(z)`.
//! The standard deviation is a state-independent learned vector. Stored
//! rollouts keep `z` itself so log-probabilities never need `atanh(±1)`.

mod checkpoint;
mod mlp;
mod ppo;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, CheckpointError, CHECKPOINT_VERSION};
pub use mlp::{orthogonal_matrix, Activations, Mlp};
pub use ppo::{
    actor_critic_loss, actor_critic_loss_grad, gae, normalize_rewards, Adam, LossTerms, MiniBatch,
    PpoConfig, PpoError, PpoLearner, RolloutRecord, UpdateStats,
};

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::rl::{Action, Observation, ACT_DIM, OBS_DIM};
#[allow(unused_imports)]
use num_traits::Float;

/// Output of one policy query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyStep {
    pub action: Action,
    /// Pre-squash Gaussian sample.
    pub pre_squash: [f64; ACT_DIM],
    pub log_prob: f64,
}

/// Anything that maps an observation to an action.
pub trait Policy {
    fn act(&self, obs: &Observation, rng: &mut dyn RngCore) -> PolicyStep;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("batch shape mismatch: {0}")]
    Shape(&'static str),
    #[error("invalid {key}: {reason}")]
    Config { key: &'static str, reason: &'static str },
}

/// Network shape and initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct NetConfig {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub log_std_init: f64,
    /// Multiplier on the actor's output-layer weights at initialization.
    pub actor_final_scale: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { hidden_width: 512, hidden_layers: 3, log_std_init: -1.0, actor_final_scale: 0.01 }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.hidden_width == 0 {
            return Err(PolicyError::Config { key: "hidden_width", reason: "must be at least 1" });
        }
        if !self.log_std_init.is_finite() {
            return Err(PolicyError::Config { key: "log_std_init", reason: "must be finite" });
        }
        if !(self.actor_final_scale.is_finite() && self.actor_final_scale > 0.0) {
            return Err(PolicyError::Config { key: "actor_final_scale", reason: "must be positive" });
        }
        Ok(())
    }

    fn sizes(&self, out: usize) -> Vec<usize> {
        let mut s = vec![OBS_DIM];
        s.extend(core::iter::repeat(self.hidden_width).take(self.hidden_layers));
        s.push(out);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub actor: Mlp,
    pub critic: Mlp,
    pub log_std: [f64; ACT_DIM],
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `log(1 - tanh(z)^2)` without cancellation for large `|z|`.
pub fn log_one_minus_tanh_sq(z: f64) -> f64 {
    2.0 * (core::f64::consts::LN_2 - z - softplus(-2.0 * z))
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Log-density of `tanh(z)` under the squashed diagonal Gaussian.
pub fn squashed_log_prob(mean: &[f64], log_std: &[f64; ACT_DIM], z: &[f64; ACT_DIM]) -> f64 {
    (0..ACT_DIM)
        .map(|d| {
            let std = log_std[d].exp();
            let u = (z[d] - mean[d]) / std;
            -0.5 * u * u - log_std[d] - HALF_LN_2PI - log_one_minus_tanh_sq(z[d])
        })
        .sum()
}

/// Entropy of the pre-squash Gaussian.
pub fn gaussian_entropy(log_std: &[f64; ACT_DIM]) -> f64 {
    log_std.iter().map(|ls| 0.5 * (2.0 * PI * core::f64::consts::E).ln() + ls).sum()
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(cfg: &NetConfig, rng: &mut R) -> Self {
        ActorCritic {
            actor: Mlp::orthogonal(&cfg.sizes(ACT_DIM), cfg.actor_final_scale, rng),
            critic: Mlp::orthogonal(&cfg.sizes(1), 1.0, rng),
            log_std: [cfg.log_std_init; ACT_DIM],
        }
    }

    /// Network initialized from a seed.
    pub fn seeded(cfg: &NetConfig, seed: u64) -> Self {
        Self::new(cfg, &mut crate::SimRng::seed_from_u64(seed))
    }

    pub fn mean(&self, obs: &Observation) -> Vec<f64> {
        self.actor.forward(&obs.0)
    }

    pub fn value(&self, obs: &Observation) -> f64 {
        self.critic.forward(&obs.0)[0]
    }

    /// Recomputes log-probabilities of stored pre-squash actions, the
    /// Gaussian entropy and critic values for a batch.
    pub fn evaluate(
        &self,
        obs: &[Observation],
        pre_squash: &[[f64; ACT_DIM]],
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), PolicyError> {
        if obs.len() != pre_squash.len() {
            return Err(PolicyError::Shape("observations and actions differ in length"));
        }
        if self.actor.input_dim() != OBS_DIM || self.actor.output_dim() != ACT_DIM {
            return Err(PolicyError::Shape("actor does not map 11 inputs to 2 outputs"));
        }
        if self.critic.input_dim() != OBS_DIM || self.critic.output_dim() != 1 {
            return Err(PolicyError::Shape("critic does not map 11 inputs to 1 output"));
        }
        let entropy = gaussian_entropy(&self.log_std);
        let mut log_probs = Vec::with_capacity(obs.len());
        let mut values = Vec::with_capacity(obs.len());
        for (o, z) in obs.iter().zip(pre_squash) {
            let mean = self.mean(o);
            log_probs.push(squashed_log_prob(&mean, &self.log_std, z));
            values.push(self.value(o));
        }
        Ok((log_probs, vec![entropy; obs.len()], values))
    }

    /// Flat view over every parameter: actor, log-std, critic.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.actor.params().to_vec();
        v.extend_from_slice(&self.log_std);
        v.extend_from_slice(self.critic.params());
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let a = self.actor.params().len();
        let c = self.critic.params().len();
        assert_eq!(flat.len(), a + ACT_DIM + c, "flat parameter length");
        self.actor.params_mut().copy_from_slice(&flat[..a]);
        self.log_std.copy_from_slice(&flat[a..a + ACT_DIM]);
        self.critic.params_mut().copy_from_slice(&flat[a + ACT_DIM..]);
    }

    pub fn is_finite(&self) -> bool {
        self.flat_params().iter().all(|x| x.is_finite())
    }
}

impl Policy for ActorCritic {
    fn act(&self, obs: &Observation, rng: &mut dyn RngCore) -> PolicyStep {
        let mean = self.mean(obs);
        let mut z = [0.0; ACT_DIM];
        for d in 0..ACT_DIM {
            let eps: f64 = StandardNormal.sample(rng);
            z[d] = mean[d] + self.log_std[d].exp() * eps;
        }
        PolicyStep {
            action: Action::new(z[0].tanh(), z[1].tanh()),
            pre_squash: z,
            log_prob: squashed_log_prob(&mean, &self.log_std, &z),
        }
    }
}

/// Evaluation-mode wrapper: acts with `tanh(mean)` and draws nothing.
#[derive(Debug, Clone, Copy)]
pub struct Deterministic<'a>(pub &'a ActorCritic);

impl Policy for Deterministic<'_> {
    fn act(&self, obs: &Observation, _rng: &mut dyn RngCore) -> PolicyStep {
        let mean = self.0.mean(obs);
        let z = [mean[0], mean[1]];
        PolicyStep {
            action: Action::new(z[0].tanh(), z[1].tanh()),
            pre_squash: z,
            log_prob: squashed_log_prob(&mean, &self.0.log_std, &z),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SimRng;
    use rand::SeedableRng;

    fn small() -> NetConfig {
        NetConfig { hidden_width: 16, ..NetConfig::default() }
    }

    fn random_obs(rng: &mut SimRng) -> Observation {
        let mut o = [0.0; OBS_DIM];
        o.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        Observation(o)
    }

    #[test]
    fn fresh_actor_means_are_small() {
        let mut rng = SimRng::seed_from_u64(1);
        let ac = ActorCritic::new(&NetConfig::default(), &mut rng);
        for _ in 0..1000 {
            let o = random_obs(&mut rng);
            assert!(ac.mean(&o).iter().all(|m| m.abs() < 0.1));
        }
    }

    #[test]
    fn log_prob_matches_definition() {
        let mut rng = SimRng::seed_from_u64(2);
        let ac = ActorCritic::new(&small(), &mut rng);
        let o = random_obs(&mut rng);
        let step = ac.act(&o, &mut rng);
        let mean = ac.mean(&o);
        let mut expect = 0.0;
        for d in 0..ACT_DIM {
            let s = ac.log_std[d].exp();
            let z = step.pre_squash[d];
            let normal = -0.5 * ((z - mean[d]) / s).powi(2) - s.ln() - 0.5 * (2.0 * PI).ln();
            expect += normal - (1.0 - z.tanh().powi(2)).ln();
        }
        assert!((expect - step.log_prob).abs() < 1e-10);
        assert_eq!(step.action.v_tilde, step.pre_squash[0].tanh());
    }

    #[test]
    fn tanh_correction_is_finite_for_saturated_actions() {
        for z in [-40.0, -20.0, 0.0, 20.0, 40.0] {
            assert!(log_one_minus_tanh_sq(z).is_finite());
        }
        let z = 0.3f64;
        assert!((log_one_minus_tanh_sq(z) - (1.0 - z.tanh().powi(2)).ln()).abs() < 1e-14);
    }

    #[test]
    fn deterministic_uses_tanh_of_mean() {
        let mut rng = SimRng::seed_from_u64(3);
        let ac = ActorCritic::new(&small(), &mut rng);
        let o = random_obs(&mut rng);
        let step = Deterministic(&ac).act(&o, &mut rng);
        let m = ac.mean(&o);
        assert_eq!(step.action.v_tilde, m[0].tanh());
        assert_eq!(step.action.r_tilde, m[1].tanh());
    }

    #[test]
    fn evaluate_reproduces_act() {
        let mut rng = SimRng::seed_from_u64(4);
        let ac = ActorCritic::new(&small(), &mut rng);
        let obs: Vec<Observation> = (0..20).map(|_| random_obs(&mut rng)).collect();
        let steps: Vec<PolicyStep> = obs.iter().map(|o| ac.act(o, &mut rng)).collect();
        let z: Vec<[f64; 2]> = steps.iter().map(|s| s.pre_squash).collect();
        let (lp, ent, vals) = ac.evaluate(&obs, &z).unwrap();
        for (a, s) in lp.iter().zip(&steps) {
            assert!((a - s.log_prob).abs() < 1e-10);
        }
        assert_eq!(ent.len(), 20);
        // batch of one equals the single-sample path
        let (lp1, _, v1) = ac.evaluate(&obs[..1], &z[..1]).unwrap();
        assert_eq!(lp1[0], lp[0]);
        assert_eq!(v1[0], vals[0]);
        assert!(ac.evaluate(&obs[..2], &z[..1]).is_err());
    }

    #[test]
    fn zero_critic_returns_bias() {
        let mut rng = SimRng::seed_from_u64(5);
        let mut ac = ActorCritic::new(&small(), &mut rng);
        let n = ac.critic.params().len();
        ac.critic.params_mut().iter_mut().for_each(|p| *p = 0.0);
        ac.critic.params_mut()[n - 1] = 0.25;
        let obs: Vec<Observation> = (0..5).map(|_| random_obs(&mut rng)).collect();
        let (_, _, v) = ac.evaluate(&obs, &[[0.0; 2]; 5]).unwrap();
        assert!(v.iter().all(|x| *x == 0.25));
    }
}
