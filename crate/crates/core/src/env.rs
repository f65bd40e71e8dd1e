//! Episode driver: fundamental process, random scheduling, halts and
//! portfolio accounting around one order book.
//!
//! Each step advances the fundamental, expires stale orders, reopens the
//! book if trading is allowed, then lets one uniformly drawn agent act.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::baselines::{
    adfcn_update, cap_pair, fcn_decide, fcn_predict, zi_decide, BaselineParams, FcnWeights,
};
use crate::derive_seed;
use crate::lob::{BookError, Order, OrderBook, Trade, TICK};
use crate::policy::{Policy, PolicyStep, RolloutRecord};
use crate::rl::{
    action_to_order, build_raw_observation, compute_reward, slot, Action, NormBounds, ObsInputs,
    Observation, OrderIntent, RewardBreakdown, RewardInputs, RewardParams,
};
use crate::traits::{mask_traits, sample_population, AgentTraits, PriorError, TraitMask, TraitPriors};
use crate::SimRng;
#[allow(unused_imports)]
use num_traits::Float;

const CENTS_PER_TICK: i64 = 10;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SimConfig {
    pub n_agents: usize,
    pub t_sim: u32,
    /// Inclusive step ranges during which orders rest without matching.
    pub halts: Vec<(u32, u32)>,
    pub tif: u32,
    pub p0_f: f64,
    pub gbm_drift: f64,
    /// Per-episode GBM volatility is drawn from `U(0, gbm_vol_max)`.
    pub gbm_vol_max: f64,
    pub reward: RewardParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_agents: 200,
            t_sim: 2110,
            halts: vec![(1, 100), (1100, 1110)],
            tif: 200,
            p0_f: 300.0,
            gbm_drift: 0.0,
            gbm_vol_max: 0.003,
            reward: RewardParams::default(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid {key}: {reason}")]
    Config { key: &'static str, reason: &'static str },
    #[error(transparent)]
    Priors(#[from] PriorError),
    #[error(transparent)]
    Book(#[from] BookError),
}

fn bad(key: &'static str, reason: &'static str) -> EnvError {
    EnvError::Config { key, reason }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let r = &self.reward;
        if self.n_agents == 0 {
            return Err(bad("n_agents", "must be at least 1"));
        }
        if self.t_sim == 0 {
            return Err(bad("t_sim", "must be at least 1"));
        }
        if self.tif == 0 {
            return Err(bad("tif", "must be at least 1"));
        }
        if !(self.p0_f.is_finite() && self.p0_f >= TICK) {
            return Err(bad("p0_f", "must be at least one tick"));
        }
        if !self.gbm_drift.is_finite() {
            return Err(bad("gbm_drift", "must be finite"));
        }
        if !(self.gbm_vol_max.is_finite() && self.gbm_vol_max >= 0.0) {
            return Err(bad("gbm_vol_max", "must be non-negative"));
        }
        for &(a, b) in &self.halts {
            if a < 1 || b < a || b > self.t_sim {
                return Err(bad("halts", "windows must satisfy 1 <= start <= end <= t_sim"));
            }
        }
        if r.v_max == 0 {
            return Err(bad("v_max", "must be at least 1"));
        }
        let positive = [
            ("r_max", r.r_max),
            ("xi", r.xi),
            ("omega_u", r.omega_u),
            ("ratio_ceiling", r.ratio_ceiling),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(key, "must be positive"));
            }
        }
        let nonneg = [
            ("omega_b", r.omega_b),
            ("omega_s", r.omega_s),
            ("omega_l", r.omega_l),
            ("beta_short", r.beta_short),
            ("beta_cash", r.beta_cash),
            ("beta_illiquidity", r.beta_illiquidity),
            ("beta_fundamental", r.beta_fundamental),
        ];
        for (key, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(key, "must be non-negative"));
            }
        }
        if r.xi >= 1.0 {
            return Err(bad("xi", "must be below 1"));
        }
        Ok(())
    }

    pub fn is_halted(&self, t: u32) -> bool {
        self.halts.iter().any(|&(a, b)| a <= t && t <= b)
    }
}

/// Who populates the market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Population {
    /// Learning agents sharing one policy; `mask` hides trait inputs.
    Learning { priors: TraitPriors, mask: TraitMask },
    Zi(BaselineParams),
    Fcn(BaselineParams),
    AdFcn(BaselineParams),
    /// Adaptive weights with risk aversion and window held at reference levels.
    AdFcnFixed(BaselineParams),
}

impl Population {
    pub fn is_learning(&self) -> bool {
        matches!(self, Population::Learning { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub traits: AgentTraits,
    /// Cash in hundredths of a currency unit.
    pub cash_cents: i64,
    pub position: i64,
    pub last_order_step: Option<u32>,
    pub order_count: u32,
    pub weights: Option<FcnWeights>,
}

impl AgentState {
    pub fn cash(&self) -> f64 {
        self.cash_cents as f64 / 100.0
    }
}

/// One learning agent's decision at a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub step: u32,
    pub agent: usize,
    /// 1-based count of this agent's selections.
    pub order_index: u32,
    pub gamma: f64,
    pub obs: Observation,
    pub action: Action,
    pub order: Option<OrderIntent>,
    pub reward: RewardBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub step: u32,
    pub agent: usize,
    pub halted: bool,
    pub mid: f64,
    pub fundamental: f64,
    pub trades: Vec<Trade>,
    pub expired: usize,
    pub order: Option<OrderIntent>,
    pub decision: Option<Decision>,
    pub transition: Option<RolloutRecord>,
}

/// GBM step with unit time increment.
pub fn fundamental_step<R: Rng + ?Sized>(p_prev: f64, drift: f64, vol: f64, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    gbm_with_shock(p_prev, drift, vol, z)
}

/// GBM step for a given standard-normal shock.
pub fn gbm_with_shock(p_prev: f64, drift: f64, vol: f64, z: f64) -> f64 {
    p_prev * ((drift - 0.5 * vol * vol) + vol * z).exp()
}

/// Policy for populations that never consult one.
#[derive(Debug, Clone, Copy, Default)]
pub struct Idle;

impl Policy for Idle {
    fn act(&self, _obs: &Observation, _rng: &mut dyn RngCore) -> PolicyStep {
        PolicyStep { action: Action::new(0.0, 0.0), pre_squash: [0.0; 2], log_prob: 0.0 }
    }
}

pub struct MarketEnv {
    config: SimConfig,
    population: Population,
    episode: u64,
    book: OrderBook,
    agents: Vec<AgentState>,
    market_rng: SimRng,
    agent_rng: SimRng,
    policy_rng: SimRng,
    gbm_vol: f64,
    t: u32,
    next_order_id: u64,
    mids: Vec<f64>,
    fundamentals: Vec<f64>,
    deviations: Vec<f64>,
    bounds: Option<NormBounds>,
    mask: TraitMask,
    pending: Vec<Option<(Observation, PolicyStep)>>,
    total_cash: i64,
    total_shares: i64,
}

impl MarketEnv {
    /// Sets up a fresh episode. Traits, market noise and agent decisions use
    /// independent streams derived from `seed`.
    pub fn new(config: SimConfig, population: Population, seed: u64, episode: u64) -> Result<Self, EnvError> {
        config.validate()?;
        let n = config.n_agents;
        let mut trait_rng = SimRng::seed_from_u64(derive_seed(seed, 0));
        let mut market_rng = SimRng::seed_from_u64(derive_seed(seed, 1));
        let agent_rng = SimRng::seed_from_u64(derive_seed(seed, 2));
        let policy_rng = SimRng::seed_from_u64(derive_seed(seed, 3));

        let (agents, bounds, mask) = match population {
            Population::Learning { priors, mask } => {
                let priors = priors.with_clipped_gamma();
                let traits = sample_population(&priors, n, &mut trait_rng)?;
                let agents = traits.into_iter().map(|t| initial_state(t, None)).collect();
                (agents, Some(NormBounds::from_priors(&priors)), mask)
            }
            Population::Zi(p) | Population::Fcn(p) | Population::AdFcn(p) | Population::AdFcnFixed(p) => {
                validate_baseline(&p)?;
                let adaptive = matches!(population, Population::AdFcn(_) | Population::AdFcnFixed(_));
                let mut agents = Vec::with_capacity(n);
                for _ in 0..n {
                    let mut w = FcnWeights::sample(&p, &mut trait_rng);
                    if adaptive {
                        cap_pair(&mut w, p.w_max);
                    }
                    let w0 = crate::traits::exp_draw(p.w_mean, &mut trait_rng).ceil() as i64;
                    let c0 = crate::traits::exp_draw(p.c_mean, &mut trait_rng);
                    let traits = AgentTraits { sigma: 0.0, alpha: w.alpha_t(&p), gamma: 0.0, w0, c0 };
                    let weights = (!matches!(population, Population::Zi(_))).then_some(w);
                    agents.push(initial_state(traits, weights));
                }
                (agents, None, TraitMask::NONE)
            }
        };
        let gbm_vol = if config.gbm_vol_max > 0.0 {
            market_rng.random_range(0.0..config.gbm_vol_max)
        } else {
            0.0
        };
        let total_cash = agents.iter().map(|a: &AgentState| a.cash_cents).sum();
        let total_shares = agents.iter().map(|a: &AgentState| a.position).sum();
        let cap = config.t_sim as usize + 1;
        let mut mids = Vec::with_capacity(cap);
        let mut fundamentals = Vec::with_capacity(cap);
        let mut deviations = Vec::with_capacity(cap);
        mids.push(config.p0_f);
        fundamentals.push(config.p0_f);
        deviations.push(0.0);
        Ok(MarketEnv {
            pending: vec![None; n],
            config,
            population,
            episode,
            book: OrderBook::new(),
            agents,
            market_rng,
            agent_rng,
            policy_rng,
            gbm_vol,
            t: 0,
            next_order_id: 0,
            mids,
            fundamentals,
            deviations,
            bounds,
            mask,
            total_cash,
            total_shares,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn book(&self) -> &OrderBook {
        &self.book
    }

    pub fn gbm_vol(&self) -> f64 {
        self.gbm_vol
    }

    /// Current step; 0 before the first call to [`step`](Self::step).
    pub fn now(&self) -> u32 {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.config.t_sim
    }

    /// Observed mid prices indexed by step, starting at step 0.
    pub fn mids(&self) -> &[f64] {
        &self.mids
    }

    pub fn fundamentals(&self) -> &[f64] {
        &self.fundamentals
    }

    /// Advances one step. `policy` is consulted only by learning populations.
    pub fn step(&mut self, policy: &dyn Policy) -> Result<StepOutcome, EnvError> {
        assert!(!self.is_done(), "episode already finished");
        self.t += 1;
        let t = self.t;
        let fundamental = fundamental_step(
            *self.fundamentals.last().expect("seeded with p0"),
            self.config.gbm_drift,
            self.gbm_vol,
            &mut self.market_rng,
        );
        let expired = self.book.expire(t).len();
        let halted = self.config.is_halted(t);
        let mut trades = Vec::new();
        if !halted {
            let reopened = self.book.uncross(t);
            self.apply_trades(&reopened);
            trades.extend(reopened);
        }
        let mid = self.book.mid_price(fundamental);
        self.mids.push(mid);
        self.fundamentals.push(fundamental);
        self.deviations.push((fundamental / mid).ln());

        let j = self.agent_index();
        let agent = &mut self.agents[j];
        agent.order_count += 1;
        let window_start = agent.last_order_step.unwrap_or(0) as usize;
        agent.last_order_step = Some(t);

        let (order, decision, transition) = match self.population {
            Population::Learning { .. } => {
                let (order, decision, transition) = self.learning_turn(j, window_start, mid, fundamental, halted, policy, &mut trades)?;
                (order, Some(decision), transition)
            }
            _ => {
                let intent = self.baseline_turn(j, mid, fundamental);
                if let Some(intent) = intent {
                    let executed = self.submit(j, intent, halted)?;
                    trades.extend(executed);
                }
                (intent, None, None)
            }
        };
        self.check_conservation();
        Ok(StepOutcome { step: t, agent: j, halted, mid, fundamental, trades, expired, order, decision, transition })
    }

    fn agent_index(&mut self) -> usize {
        self.market_rng.random_range(0..self.config.n_agents)
    }

    #[allow(clippy::too_many_arguments)]
    fn learning_turn(
        &mut self,
        j: usize,
        window_start: usize,
        mid: f64,
        fundamental: f64,
        halted: bool,
        policy: &dyn Policy,
        trades: &mut Vec<Trade>,
    ) -> Result<(Option<OrderIntent>, Decision, Option<RolloutRecord>), EnvError> {
        let params = self.config.reward;
        let bounds = self.bounds.expect("learning population has bounds");
        let t = self.t;
        let depth = self.book.depth_weighted_volumes(mid, params.xi, params.omega_b, params.omega_s);
        let agent = &self.agents[j];
        let traits = agent.traits;
        let raw = build_raw_observation(
            &ObsInputs {
                traits: &traits,
                cash: agent.cash(),
                position: agent.position,
                mid,
                fundamental,
                window: &self.mids[window_start..=t as usize],
                depth,
            },
            &params,
            &mut self.agent_rng,
        );
        let obs = mask_traits(&bounds.normalize(&raw), &self.mask);
        let step = policy.act(&obs, &mut self.policy_rng);
        let intent = action_to_order(&step.action, mid, params.v_max, params.r_max);
        if let Some(intent) = intent {
            let executed = self.submit(j, intent, halted)?;
            trades.extend(executed);
        }

        let agent = &self.agents[j];
        let depth_after = self.book.depth_weighted_volumes(mid, params.xi, params.omega_b, params.omega_s);
        let reward = compute_reward(
            &RewardInputs {
                alpha: traits.alpha,
                cash: agent.cash(),
                position: agent.position,
                mid,
                ret: raw.0[slot::RET],
                vol: raw.0[slot::VOL],
                depth: depth_after,
                deviations: &self.deviations,
            },
            &params,
        );
        let decision = Decision {
            step: t,
            agent: j,
            order_index: agent.order_count,
            gamma: traits.gamma,
            obs,
            action: step.action,
            order: intent,
            reward,
        };
        let transition = self.pending[j].replace((obs, step)).map(|(prev_obs, prev)| RolloutRecord {
            obs: prev_obs,
            action: prev.action,
            pre_squash: prev.pre_squash,
            log_prob: prev.log_prob,
            reward: reward.total,
            next_obs: obs,
            gamma: traits.gamma,
            episode: self.episode,
        });
        Ok((intent, decision, transition))
    }

    fn baseline_turn(&mut self, j: usize, mid: f64, fundamental: f64) -> Option<OrderIntent> {
        let (p, adaptive, fixed) = match self.population {
            Population::Zi(p) => return Some(zi_decide(mid, p.sigma_n, &mut self.agent_rng)),
            Population::Fcn(p) => (p, false, false),
            Population::AdFcn(p) => (p, true, false),
            Population::AdFcnFixed(p) => (p, true, true),
            Population::Learning { .. } => unreachable!("learning agents use the policy"),
        };
        let agent = &mut self.agents[j];
        let w = agent.weights.as_mut().expect("FCN agents carry weights");
        let tau_of = |w: &FcnWeights| if fixed { (p.tau.ceil() as usize).max(1) } else { w.tau_t(&p) };
        if adaptive {
            let tau_t = tau_of(w);
            adfcn_update(w, tau_t, &p, &self.mids, &self.fundamentals);
            agent.traits.alpha = if fixed { p.alpha } else { w.alpha_t(&p) };
        }
        let tau_t = tau_of(w);
        let z: f64 = StandardNormal.sample(&mut self.agent_rng);
        let pred = fcn_predict(w, tau_t, &p, fundamental, &self.mids, p.sigma_n * z);
        fcn_decide(pred.p_hat, p.order_spread, &mut self.agent_rng)
    }

    fn submit(&mut self, j: usize, intent: OrderIntent, halted: bool) -> Result<Vec<Trade>, EnvError> {
        let Some(order) =
            Order::from_signed(self.next_order_id, j, intent.signed_volume, intent.price, self.t, self.config.tif)
        else {
            return Ok(Vec::new());
        };
        self.next_order_id += 1;
        let trades = self.book.submit(order, halted)?;
        self.apply_trades(&trades);
        Ok(trades)
    }

    fn apply_trades(&mut self, trades: &[Trade]) {
        for tr in trades {
            let notional = tr.price * CENTS_PER_TICK * tr.volume as i64;
            let vol = tr.volume as i64;
            let buyer = &mut self.agents[tr.buyer];
            buyer.cash_cents -= notional;
            buyer.position += vol;
            let seller = &mut self.agents[tr.seller];
            seller.cash_cents += notional;
            seller.position -= vol;
        }
    }

    fn check_conservation(&self) {
        let cash: i64 = self.agents.iter().map(|a| a.cash_cents).sum();
        let shares: i64 = self.agents.iter().map(|a| a.position).sum();
        assert_eq!(cash, self.total_cash, "cash not conserved at step {}", self.t);
        assert_eq!(shares, self.total_shares, "shares not conserved at step {}", self.t);
    }

    /// Runs the remaining steps and collects the log.
    pub fn run(mut self, policy: &dyn Policy) -> Result<EpisodeLog, EnvError> {
        let mut log = EpisodeLog { gbm_vol: self.gbm_vol, ..EpisodeLog::default() };
        while !self.is_done() {
            let out = self.step(policy)?;
            log.record(out);
        }
        log.final_agents = self.agents;
        Ok(log)
    }
}

fn initial_state(traits: AgentTraits, weights: Option<FcnWeights>) -> AgentState {
    AgentState {
        cash_cents: (traits.c0 * 100.0).round() as i64,
        position: traits.w0,
        traits,
        last_order_step: None,
        order_count: 0,
        weights,
    }
}

/// Checks baseline parameters, naming the first offending key.
pub fn validate_baseline(p: &BaselineParams) -> Result<(), EnvError> {
    let nonneg = [
        ("sigma_n", p.sigma_n),
        ("lambda_f", p.lambda_f),
        ("lambda_c", p.lambda_c),
        ("lambda_n", p.lambda_n),
        ("alpha", p.alpha),
        ("order_spread", p.order_spread),
        ("eta", p.eta),
        ("w_mean", p.w_mean),
        ("c_mean", p.c_mean),
    ];
    for (key, v) in nonneg {
        if !(v.is_finite() && v >= 0.0) {
            return Err(bad(key, "must be non-negative"));
        }
    }
    if !(p.tau.is_finite() && p.tau > 0.0) {
        return Err(bad("tau", "must be positive"));
    }
    if p.tau_f == 0 {
        return Err(bad("tau_f", "must be at least 1"));
    }
    if !(p.w_max.is_finite() && p.w_max > 0.0) {
        return Err(bad("w_max", "must be positive"));
    }
    if !(p.alpha_diff > 0.0) {
        return Err(bad("alpha_diff", "must be positive"));
    }
    if !(p.tau_diff > 0.0) {
        return Err(bad("tau_diff", "must be positive"));
    }
    Ok(())
}

/// Per-step market record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u32,
    pub agent: usize,
    pub mid: f64,
    pub fundamental: f64,
    pub exec_volume: u64,
}

/// Everything an episode produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeLog {
    pub gbm_vol: f64,
    pub steps: Vec<StepRecord>,
    pub trades: Vec<Trade>,
    pub orders: Vec<(u32, usize, OrderIntent)>,
    pub decisions: Vec<Decision>,
    /// Transitions keyed by the agent that produced them.
    pub transitions: Vec<(usize, RolloutRecord)>,
    pub final_agents: Vec<AgentState>,
}

impl EpisodeLog {
    pub fn record(&mut self, out: StepOutcome) {
        self.steps.push(StepRecord {
            step: out.step,
            agent: out.agent,
            mid: out.mid,
            fundamental: out.fundamental,
            exec_volume: out.trades.iter().map(|t| t.volume as u64).sum(),
        });
        self.trades.extend(out.trades);
        if let Some(o) = out.order {
            self.orders.push((out.step, out.agent, o));
        }
        if let Some(d) = out.decision {
            self.decisions.push(d);
        }
        if let Some(tr) = out.transition {
            self.transitions.push((out.agent, tr));
        }
    }

    pub fn mid_series(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.mid).collect()
    }

    pub fn volume_series(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.exec_volume as f64).collect()
    }

    pub fn mean_reward(&self) -> f64 {
        if self.decisions.is_empty() {
            return 0.0;
        }
        self.decisions.iter().map(|d| d.reward.total).sum::<f64>() / self.decisions.len() as f64
    }
}

/// Runs a whole episode.
pub fn run_episode(
    config: &SimConfig,
    population: &Population,
    policy: &dyn Policy,
    seed: u64,
    episode: u64,
) -> Result<EpisodeLog, EnvError> {
    MarketEnv::new(config.clone(), *population, seed, episode)?.run(policy)
}

/// Sum over agents of discounted per-decision utilities of one episode.
pub fn episode_utility(log: &EpisodeLog) -> f64 {
    log.decisions.iter().map(|d| d.gamma.powi(d.order_index as i32) * d.reward.utility).sum()
}

/// Mean of [`episode_utility`] over episodes.
pub fn aggregate_utility(logs: &[EpisodeLog]) -> f64 {
    if logs.is_empty() {
        return 0.0;
    }
    logs.iter().map(episode_utility).sum::<f64>() / logs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{ActorCritic, NetConfig};

    fn small(n: usize, t: u32) -> SimConfig {
        SimConfig { n_agents: n, t_sim: t, halts: vec![(1, 20)], ..SimConfig::default() }
    }

    fn learning() -> Population {
        Population::Learning { priors: TraitPriors::default(), mask: TraitMask::NONE }
    }

    #[test]
    fn degenerate_gbm() {
        let mut rng = SimRng::seed_from_u64(0);
        assert_eq!(fundamental_step(300.0, 0.0, 0.0, &mut rng), 300.0);
        assert_eq!(gbm_with_shock(300.0, 0.0, 0.003, 0.0), 300.0 * (-0.5 * 0.003f64 * 0.003).exp());
    }

    #[test]
    fn gbm_increment_std() {
        let mut rng = SimRng::seed_from_u64(1);
        let n = 100_000;
        let mut p = 300.0;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let next = fundamental_step(p, 0.0, 0.003, &mut rng);
            let x = (next / p).ln();
            sum += x;
            sq += x * x;
            p = next;
        }
        let mean = sum / n as f64;
        let std = (sq / n as f64 - mean * mean).sqrt();
        assert!((std / 0.003 - 1.0).abs() < 0.02);
    }

    #[test]
    fn halts_block_execution() {
        let cfg = SimConfig { n_agents: 20, t_sim: 300, halts: vec![(1, 100)], ..SimConfig::default() };
        let log = run_episode(&cfg, &Population::Zi(BaselineParams::default()), &Idle, 3, 0).unwrap();
        assert!(log.trades.iter().all(|t| t.executed_at > 100));
        assert!(log.steps[..100].iter().all(|s| s.exec_volume == 0));
        assert!(!log.trades.is_empty());
    }

    #[test]
    fn single_agent_always_selected() {
        let mut rng = SimRng::seed_from_u64(2);
        let ac = ActorCritic::new(&NetConfig { hidden_width: 8, ..NetConfig::default() }, &mut rng);
        let log = run_episode(&small(1, 60), &learning(), &ac, 4, 0).unwrap();
        assert!(log.steps.iter().all(|s| s.agent == 0));
        assert_eq!(log.decisions.len(), 60);
        assert_eq!(log.transitions.len(), 59);
    }

    #[test]
    fn same_seed_same_log() {
        let mut rng = SimRng::seed_from_u64(3);
        let ac = ActorCritic::new(&NetConfig { hidden_width: 8, ..NetConfig::default() }, &mut rng);
        let a = run_episode(&small(5, 150), &learning(), &ac, 9, 0).unwrap();
        let b = run_episode(&small(5, 150), &learning(), &ac, 9, 0).unwrap();
        assert_eq!(a, b);
        let c = run_episode(&small(5, 150), &learning(), &ac, 10, 0).unwrap();
        assert_ne!(a.steps, c.steps);
    }

    #[test]
    fn zero_volume_action_still_rewarded() {
        let log = run_episode(&small(3, 40), &learning(), &Idle, 5, 0).unwrap();
        assert!(log.trades.is_empty() && log.orders.is_empty());
        assert_eq!(log.decisions.len(), 40);
        assert!(log.decisions.iter().all(|d| d.order.is_none() && d.reward.total.is_finite()));
    }

    #[test]
    fn windows_are_gaps_between_own_selections() {
        let mut env = MarketEnv::new(small(4, 200), learning(), 6, 0).unwrap();
        let mut last = [0u32; 4];
        while !env.is_done() {
            let out = env.step(&Idle).unwrap();
            let a = &env.agents()[out.agent];
            assert_eq!(a.last_order_step, Some(out.step));
            assert!(out.step > last[out.agent] || last[out.agent] == 0);
            last[out.agent] = out.step;
        }
    }

    #[test]
    fn utility_examples() {
        let mut log = EpisodeLog::default();
        assert_eq!(episode_utility(&log), 0.0);
        for i in 1..=2 {
            log.decisions.push(Decision {
                step: i,
                agent: 0,
                order_index: i,
                gamma: 0.5,
                obs: Observation([0.0; 11]),
                action: Action::new(0.0, 0.0),
                order: None,
                reward: RewardBreakdown { utility: 1.0, ..RewardBreakdown::default() },
            });
        }
        assert!((episode_utility(&log) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let mut c = SimConfig::default();
        c.reward.beta_short = -1.0;
        assert!(c.validate().is_err());
        let c = SimConfig { halts: vec![(0, 5)], ..SimConfig::default() };
        assert!(c.validate().is_err());
        let c = SimConfig { n_agents: 1, ..SimConfig::default() };
        assert!(c.validate().is_ok());
    }
}
