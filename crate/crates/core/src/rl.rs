//! Observation, action and reward of a learning trader.
//!
//! An agent selected at step `t` sees an 11-component observation built from
//! its holdings, the mid-price path since its previous selection, book depth,
//! a noisy fundamental return and its own traits. Its 2-component action is
//! turned into a limit order; its reward mixes an arctan-squashed CARA-style
//! utility with short, cash, illiquidity and fundamental-deviation penalties.

use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::lob::{price_to_ticks, ticks_to_price};
use crate::traits::{AgentTraits, TraitPriors};
#[allow(unused_imports)]
use num_traits::Float;

pub const OBS_DIM: usize = 11;
pub const ACT_DIM: usize = 2;

/// Observation slot indices.
pub mod slot {
    pub const ASSET_RATIO: usize = 0;
    pub const ASSET_TO_VMAX: usize = 1;
    pub const INV_BUYING_POWER: usize = 2;
    pub const RET: usize = 3;
    pub const VOL: usize = 4;
    pub const POS_TO_BUY_DEPTH: usize = 5;
    pub const POS_TO_SELL_DEPTH: usize = 6;
    pub const BLURRED_FUND_RET: usize = 7;
    pub const SIGMA: usize = 8;
    pub const ALPHA: usize = 9;
    pub const GAMMA: usize = 10;
}

/// Observation before normalization, in slot order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawObservation(pub [f64; OBS_DIM]);

/// Observation after clipping and affine mapping onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

/// Scaled order volume and scaled order margin, both in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub v_tilde: f64,
    pub r_tilde: f64,
}

impl Action {
    pub fn new(v_tilde: f64, r_tilde: f64) -> Self {
        Action { v_tilde: v_tilde.clamp(-1.0, 1.0), r_tilde: r_tilde.clamp(-1.0, 1.0) }
    }
}

/// Per-slot `[lo, hi]` clipping bounds used for normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormBounds(pub [(f64, f64); OBS_DIM]);

impl NormBounds {
    /// Fixed bounds for the market slots, prior-dependent bounds for traits.
    pub fn from_priors(priors: &TraitPriors) -> Self {
        let mut b = [(0.0, 0.0); OBS_DIM];
        b[slot::ASSET_RATIO] = (-2.0, 2.0);
        b[slot::ASSET_TO_VMAX] = (-5.0, 5.0);
        b[slot::INV_BUYING_POWER] = (0.0, 1.0);
        b[slot::RET] = (-0.05, 0.05);
        b[slot::VOL] = (0.0, 0.0025);
        b[slot::POS_TO_BUY_DEPTH] = (0.0, 10.0);
        b[slot::POS_TO_SELL_DEPTH] = (0.0, 10.0);
        b[slot::BLURRED_FUND_RET] = (-0.2, 0.2);
        b[slot::SIGMA] = (0.0, priors.mu_sigma + 4.0 * priors.lambda_sigma);
        b[slot::ALPHA] = (
            priors.mu_alpha - 4.0 * priors.lambda_alpha,
            priors.mu_alpha + 4.0 * priors.lambda_alpha,
        );
        b[slot::GAMMA] = (priors.lambda_gamma, priors.gamma_max);
        NormBounds(b)
    }

    /// Clips each component to its bounds.
    pub fn clip(&self, raw: &RawObservation) -> RawObservation {
        let mut out = raw.0;
        for (x, (lo, hi)) in out.iter_mut().zip(self.0.iter()) {
            *x = x.max(*lo).min(*hi);
        }
        RawObservation(out)
    }

    /// Clips then maps `[lo, hi]` onto `[-1, 1]`. Degenerate bounds map to 0.
    pub fn normalize(&self, raw: &RawObservation) -> Observation {
        let clipped = self.clip(raw);
        let mut out = [0.0; OBS_DIM];
        for (i, (lo, hi)) in self.0.iter().enumerate() {
            out[i] = if hi > lo { 2.0 * (clipped.0[i] - lo) / (hi - lo) - 1.0 } else { 0.0 };
        }
        Observation(out)
    }

    /// Inverse of [`normalize`](Self::normalize) on the clipped range.
    pub fn denormalize(&self, obs: &Observation) -> RawObservation {
        let mut out = [0.0; OBS_DIM];
        for (i, (lo, hi)) in self.0.iter().enumerate() {
            out[i] = if hi > lo { lo + 0.5 * (obs.0[i] + 1.0) * (hi - lo) } else { *lo };
        }
        RawObservation(out)
    }
}

/// Market and reward constants shared by observation and reward.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RewardParams {
    pub v_max: u32,
    pub r_max: f64,
    pub xi: f64,
    pub omega_b: f64,
    pub omega_s: f64,
    pub beta_short: f64,
    pub beta_cash: f64,
    pub beta_illiquidity: f64,
    pub beta_fundamental: f64,
    pub omega_u: f64,
    pub omega_l: f64,
    /// Ceiling for ratios whose denominator vanishes.
    pub ratio_ceiling: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            v_max: 20,
            r_max: 0.05,
            xi: 0.05,
            omega_b: 100.0,
            omega_s: 100.0,
            beta_short: 0.1,
            beta_cash: 0.1,
            beta_illiquidity: 0.005,
            beta_fundamental: 0.2,
            omega_u: 6e-5,
            omega_l: 1.0,
            ratio_ceiling: 1e3,
        }
    }
}

/// `num / den` clamped to `[-ceiling, ceiling]`; a zero denominator yields
/// the signed ceiling (or 0 when the numerator is also 0).
pub fn capped_ratio(num: f64, den: f64, ceiling: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            ceiling.copysign(num)
        }
    } else {
        (num / den).clamp(-ceiling, ceiling)
    }
}

/// Mean one-step log return and its (biased) variance over a price window.
///
/// `mids` holds the mid prices at `t_{i-1}, ..., t_i`; a window of one
/// price gives `(0, 0)`.
pub fn window_return_volatility(mids: &[f64]) -> (f64, f64) {
    if mids.len() < 2 {
        return (0.0, 0.0);
    }
    let steps = (mids.len() - 1) as f64;
    let log_ret = |w: &[f64]| (w[1] / w[0]).ln();
    let ret = mids.windows(2).map(log_ret).sum::<f64>() / steps;
    let vol = mids.windows(2).map(|w| (log_ret(w) - ret).powi(2)).sum::<f64>() / steps;
    (ret, vol)
}

/// Illiquidity of a book with weighted depths `b` (bids) and `s` (asks).
///
/// Empty sides saturate the inverse and imbalance terms at `ceiling`.
pub fn illiquidity(b: f64, s: f64, omega_l: f64, ceiling: f64) -> f64 {
    let inv = |x: f64| if x > 0.0 { (1.0 / x).min(ceiling) } else { ceiling };
    let (hi, lo) = if b >= s { (b, s) } else { (s, b) };
    let imbalance = if lo > 0.0 { (hi / lo - 1.0).min(ceiling) } else { ceiling };
    inv(b) + inv(s) + omega_l * imbalance
}

/// Integrated fundamental return at the last index of `deviations`.
///
/// `deviations[t'] = log(p_f / p_mid)` at each step up to `t`. Scans back to
/// the most recent step whose sign differs from the one at `t`, then sums
/// `|dev / (t + 1 - t')|` over the steps after it. Without any flip the sum
/// runs over the whole history.
pub fn integrated_fundamental_return(deviations: &[f64]) -> f64 {
    let Some(&current) = deviations.last() else {
        return 0.0;
    };
    let sign = signum0(current);
    let t = deviations.len() - 1;
    let mut total = 0.0;
    for (tp, dev) in deviations.iter().enumerate().rev() {
        if signum0(*dev) != sign {
            break;
        }
        total += (dev / (t + 1 - tp) as f64).abs();
    }
    total
}

fn signum0(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Everything about the acting agent needed for an observation.
#[derive(Debug, Clone, Copy)]
pub struct ObsInputs<'a> {
    pub traits: &'a AgentTraits,
    pub cash: f64,
    pub position: i64,
    pub mid: f64,
    pub fundamental: f64,
    /// Mid prices from the previous selection through now, inclusive.
    pub window: &'a [f64],
    /// Weighted bid and ask depth around `mid`.
    pub depth: (f64, f64),
}

/// Builds the raw observation. Draws one Gaussian for the fundamental noise.
pub fn build_raw_observation<R: Rng + ?Sized>(
    inputs: &ObsInputs<'_>,
    params: &RewardParams,
    rng: &mut R,
) -> RawObservation {
    let ceiling = params.ratio_ceiling;
    let w = inputs.position as f64;
    let wealth = inputs.cash + w * inputs.mid;
    let (ret, vol) = window_return_volatility(inputs.window);
    let (b, s) = inputs.depth;
    let z: f64 = StandardNormal.sample(rng);
    let blurred = (inputs.fundamental / inputs.mid).ln() + inputs.traits.sigma * z;
    let inv_buying_power = if inputs.cash > 0.0 { (inputs.mid / inputs.cash).min(ceiling) } else { ceiling };

    let mut o = [0.0; OBS_DIM];
    o[slot::ASSET_RATIO] = capped_ratio(w * inputs.mid, wealth, ceiling);
    o[slot::ASSET_TO_VMAX] = w / params.v_max as f64;
    o[slot::INV_BUYING_POWER] = inv_buying_power;
    o[slot::RET] = ret;
    o[slot::VOL] = vol;
    o[slot::POS_TO_BUY_DEPTH] = capped_ratio(w.abs(), b, ceiling);
    o[slot::POS_TO_SELL_DEPTH] = capped_ratio(w.abs(), s, ceiling);
    o[slot::BLURRED_FUND_RET] = blurred;
    o[slot::SIGMA] = inputs.traits.sigma;
    o[slot::ALPHA] = inputs.traits.alpha;
    o[slot::GAMMA] = inputs.traits.gamma;
    RawObservation(o)
}

/// Signed volume and limit price (currency) of the order an action maps to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderIntent {
    pub signed_volume: i64,
    pub price: f64,
}

/// Converts an action to an order; `None` when the volume rounds to zero.
///
/// Volume is `ceil(v_max * v_tilde)`; price is
/// `p_mid - r_max * sign(v_tilde) * r_tilde * p_mid` rounded to the tick grid.
pub fn action_to_order(action: &Action, mid: f64, v_max: u32, r_max: f64) -> Option<OrderIntent> {
    let v_tilde = action.v_tilde.clamp(-1.0, 1.0);
    let r_tilde = action.r_tilde.clamp(-1.0, 1.0);
    let signed_volume = (v_max as f64 * v_tilde).ceil() as i64;
    if signed_volume == 0 {
        return None;
    }
    let sign = if v_tilde > 0.0 { 1.0 } else { -1.0 };
    let price = mid - r_max * sign * r_tilde * mid;
    Some(OrderIntent { signed_volume, price: ticks_to_price(price_to_ticks(price)) })
}

/// Reward terms. `total` is the utility minus the weighted penalties.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub utility: f64,
    pub short_penalty: f64,
    pub cash_penalty: f64,
    pub illiquidity_penalty: f64,
    pub fundamental_penalty: f64,
    pub total: f64,
}

/// State the reward is evaluated on.
#[derive(Debug, Clone, Copy)]
pub struct RewardInputs<'a> {
    pub alpha: f64,
    pub cash: f64,
    pub position: i64,
    pub mid: f64,
    /// Window return and volatility of the agent's observation.
    pub ret: f64,
    pub vol: f64,
    pub depth: (f64, f64),
    /// `log(p_f / p_mid)` for every step up to now.
    pub deviations: &'a [f64],
}

/// Arctan-squashed utility of wealth with a volatility risk charge.
pub fn utility(alpha: f64, cash: f64, position: i64, mid: f64, ret: f64, vol: f64, omega_u: f64) -> f64 {
    let w = position as f64;
    let wealth = cash + w * mid;
    let arg = wealth + ret * w * mid - 0.5 * alpha * vol * (w * mid).abs();
    2.0 / PI * (omega_u * arg).atan()
}

pub fn compute_reward(inputs: &RewardInputs<'_>, params: &RewardParams) -> RewardBreakdown {
    let u = utility(
        inputs.alpha,
        inputs.cash,
        inputs.position,
        inputs.mid,
        inputs.ret,
        inputs.vol,
        params.omega_u,
    );
    let short = if inputs.position < 0 { params.beta_short } else { 0.0 };
    let cash = if inputs.cash < 0.0 { params.beta_cash } else { 0.0 };
    let (b, s) = inputs.depth;
    let illiq = params.beta_illiquidity * illiquidity(b, s, params.omega_l, params.ratio_ceiling);
    let fund = params.beta_fundamental * integrated_fundamental_return(inputs.deviations);
    RewardBreakdown {
        utility: u,
        short_penalty: short,
        cash_penalty: cash,
        illiquidity_penalty: illiq,
        fundamental_penalty: fund,
        total: u - short - cash - illiq - fund,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SimRng;
    use rand::SeedableRng;

    #[test]
    fn action_examples() {
        let o = action_to_order(&Action::new(0.5, 0.5), 300.0, 20, 0.05).unwrap();
        assert_eq!(o, OrderIntent { signed_volume: 10, price: 292.5 });
        let o = action_to_order(&Action::new(-0.5, 0.5), 300.0, 20, 0.05).unwrap();
        assert_eq!(o, OrderIntent { signed_volume: -10, price: 307.5 });
        assert!(action_to_order(&Action::new(0.0, 0.3), 300.0, 20, 0.05).is_none());
        // ceil makes small negative volumes vanish
        assert!(action_to_order(&Action::new(-0.049, 0.3), 300.0, 20, 0.05).is_none());
        assert_eq!(
            action_to_order(&Action::new(0.001, 0.0), 300.0, 20, 0.05).unwrap().signed_volume,
            1
        );
    }

    #[test]
    fn flat_window() {
        assert_eq!(window_return_volatility(&[300.0, 300.0, 300.0]), (0.0, 0.0));
    }

    #[test]
    fn one_step_window() {
        let p1 = 300.0 * 0.01f64.exp();
        let (r, v) = window_return_volatility(&[300.0, p1]);
        assert!((r - 0.01).abs() < 1e-12);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn illiquidity_balanced() {
        assert!((illiquidity(4.0, 4.0, 1.0, 1e3) - 0.5).abs() < 1e-15);
        assert_eq!(illiquidity(0.0, 0.0, 1.0, 1e3), 3e3);
    }

    #[test]
    fn fundamental_return_flip_one_step_ago() {
        let devs = [0.01, -0.02, 0.03];
        assert!((integrated_fundamental_return(&devs) - 0.03).abs() < 1e-15);
    }

    #[test]
    fn fundamental_return_grows_with_run_length() {
        let mut prev = 0.0;
        for len in 1..50 {
            let mut devs = alloc::vec![-0.01];
            devs.extend(core::iter::repeat(0.02).take(len));
            let rf = integrated_fundamental_return(&devs);
            assert!(rf > prev);
            prev = rf;
        }
    }

    #[test]
    fn zero_sigma_gives_exact_fundamental_return() {
        let traits = AgentTraits { sigma: 0.0, alpha: 2.0, gamma: 0.95, w0: 0, c0: 1000.0 };
        let inputs = ObsInputs {
            traits: &traits,
            cash: 1000.0,
            position: 0,
            mid: 300.0,
            fundamental: 303.0,
            window: &[300.0, 300.0],
            depth: (1.0, 1.0),
        };
        let raw = build_raw_observation(&inputs, &RewardParams::default(), &mut SimRng::seed_from_u64(0));
        assert_eq!(raw.0[slot::BLURRED_FUND_RET], (303.0f64 / 300.0).ln());
    }

    #[test]
    fn normalization_round_trip_and_idempotent_clip() {
        let bounds = NormBounds::from_priors(&TraitPriors::default());
        let raw = RawObservation([3.0, -1.0, 0.2, 0.001, 0.01, 20.0, 1.0, -0.3, 0.02, 2.5, 0.95]);
        let clipped = bounds.clip(&raw);
        assert_eq!(bounds.clip(&clipped), clipped);
        let obs = bounds.normalize(&raw);
        assert!(obs.0.iter().all(|x| (-1.0..=1.0).contains(x)));
        let back = bounds.denormalize(&obs);
        for (a, b) in back.0.iter().zip(clipped.0.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reward_total_is_sum_of_terms() {
        let devs = [0.0, 0.01, 0.02];
        let inputs = RewardInputs {
            alpha: 2.0,
            cash: -5.0,
            position: -1,
            mid: 300.0,
            ret: 0.001,
            vol: 1e-4,
            depth: (3.0, 1.5),
            deviations: &devs,
        };
        let r = compute_reward(&inputs, &RewardParams::default());
        assert_eq!(r.short_penalty, 0.1);
        assert_eq!(r.cash_penalty, 0.1);
        let sum = r.utility - r.short_penalty - r.cash_penalty - r.illiquidity_penalty - r.fundamental_penalty;
        assert_eq!(r.total, sum);
    }
}
