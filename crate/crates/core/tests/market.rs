use ecomarket_core::baselines::BaselineParams;
use ecomarket_core::env::{fundamental_step, run_episode, EnvError, Idle, MarketEnv, Population, SimConfig};
use ecomarket_core::policy::{ActorCritic, NetConfig};
use ecomarket_core::traits::{TraitMask, TraitPriors};
use ecomarket_core::SimRng;
use rand::SeedableRng;

fn small() -> SimConfig {
    SimConfig { n_agents: 30, t_sim: 400, halts: vec![(1, 50), (200, 210)], ..SimConfig::default() }
}

fn learning() -> Population {
    Population::Learning { priors: TraitPriors::default(), mask: TraitMask::NONE }
}

fn policy(seed: u64) -> ActorCritic {
    ActorCritic::seeded(&NetConfig { hidden_width: 16, actor_final_scale: 1.0, ..NetConfig::default() }, seed)
}

#[test]
fn same_seed_same_episode() {
    let p = policy(1);
    for pop in [learning(), Population::Zi(BaselineParams::default()), Population::AdFcn(BaselineParams::default())] {
        let a = run_episode(&small(), &pop, &p, 42, 3).unwrap();
        let b = run_episode(&small(), &pop, &p, 42, 3).unwrap();
        assert_eq!(a, b);
        let c = run_episode(&small(), &pop, &p, 43, 3).unwrap();
        assert_ne!(a.steps, c.steps);
    }
}

#[test]
fn nothing_trades_during_halts() {
    let p = policy(2);
    for pop in [learning(), Population::Fcn(BaselineParams::default())] {
        let log = run_episode(&small(), &pop, &p, 5, 0).unwrap();
        for s in &log.steps {
            let halted = small().is_halted(s.step);
            if halted {
                assert_eq!(s.exec_volume, 0, "step {}", s.step);
            }
        }
        assert!(log.trades.iter().all(|t| !small().is_halted(t.executed_at)));
    }
}

#[test]
fn zero_intelligence_trades_outside_halts() {
    for seed in 0..20 {
        let log = run_episode(&small(), &Population::Zi(BaselineParams::default()), &Idle, seed, 0).unwrap();
        assert!(!log.trades.is_empty(), "seed {seed}");
        assert_eq!(log.steps.len(), 400);
    }
}

#[test]
fn cash_and_shares_are_conserved() {
    let p = policy(3);
    for pop in [learning(), Population::Zi(BaselineParams::default()), Population::Fcn(BaselineParams::default())] {
        let mut env = MarketEnv::new(small(), pop, 9, 0).unwrap();
        let totals = |env: &MarketEnv| {
            let a = env.agents();
            (a.iter().map(|s| s.cash_cents).sum::<i64>(), a.iter().map(|s| s.position).sum::<i64>())
        };
        let start = totals(&env);
        while !env.is_done() {
            env.step(&p).unwrap();
            assert_eq!(totals(&env), start, "step {}", env.now());
        }
    }
}

#[test]
fn gbm_log_increments_have_the_set_volatility() {
    let mut rng = SimRng::seed_from_u64(17);
    let vol = 0.002;
    let mut p = 300.0;
    let incs: Vec<f64> = (0..100_000)
        .map(|_| {
            let next = fundamental_step(p, 0.0, vol, &mut rng);
            let r = (next / p).ln();
            p = next;
            r
        })
        .collect();
    let n = incs.len() as f64;
    let mean = incs.iter().sum::<f64>() / n;
    let std = (incs.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((std / vol - 1.0).abs() < 0.01, "{std}");
    assert!((mean + 0.5 * vol * vol).abs() < 3.0 * vol / n.sqrt());
}

#[test]
fn invalid_configs_name_the_key() {
    let halts = SimConfig { halts: vec![(0, 10)], ..small() };
    assert!(matches!(halts.validate(), Err(EnvError::Config { key: "halts", .. })));
    let empty = SimConfig { n_agents: 0, ..small() };
    assert!(matches!(MarketEnv::new(empty, learning(), 0, 0), Err(EnvError::Config { key: "n_agents", .. })));
    let mut r = small();
    r.reward.beta_short = -1.0;
    assert!(matches!(r.validate(), Err(EnvError::Config { key: "beta_short", .. })));
}

#[test]
fn single_agent_market_runs() {
    let cfg = SimConfig { n_agents: 1, t_sim: 50, halts: vec![], ..SimConfig::default() };
    let log = run_episode(&cfg, &learning(), &policy(4), 1, 0).unwrap();
    assert_eq!(log.steps.len(), 50);
    assert!(log.trades.iter().all(|t| t.buyer == 0 && t.seller == 0));
}
