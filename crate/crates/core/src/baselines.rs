//! Rule-based traders: zero-intelligence, FCN and adaptive FCN.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::rl::OrderIntent;
use crate::traits::exp_draw;
#[allow(unused_imports)]
use num_traits::Float;

/// Parameters shared by the rule-based populations.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct BaselineParams {
    /// Std of the noise component and of ZI log-price offsets.
    pub sigma_n: f64,
    pub lambda_f: f64,
    pub lambda_c: f64,
    pub lambda_n: f64,
    /// Mean-reversion horizon of the fundamentalist component.
    pub tau_f: u32,
    pub alpha: f64,
    pub alpha_diff: f64,
    pub tau: f64,
    pub tau_diff: f64,
    /// Relative std of the FCN limit price around the predicted price.
    pub order_spread: f64,
    pub eta: f64,
    pub w_max: f64,
    pub w_mean: f64,
    pub c_mean: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            sigma_n: 1e-4,
            lambda_f: 10.0,
            lambda_c: 1.5,
            lambda_n: 1.0,
            tau_f: 200,
            alpha: 0.1,
            alpha_diff: 1.0,
            tau: 100.0,
            tau_diff: 20.0,
            order_spread: 0.01,
            eta: 0.01,
            w_max: 20.0,
            w_mean: 20.0,
            c_mean: 15_000.0,
        }
    }
}

/// Zero-intelligence order: fair-coin side, one unit, log-normal price
/// around the mid.
pub fn zi_decide<R: Rng + ?Sized>(mid: f64, sigma_n: f64, rng: &mut R) -> OrderIntent {
    let buy: bool = rng.random();
    let z: f64 = StandardNormal.sample(rng);
    OrderIntent { signed_volume: if buy { 1 } else { -1 }, price: mid * (sigma_n * z).exp() }
}

/// Component weights of one FCN agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcnWeights {
    pub w_f: f64,
    pub w_c: f64,
    pub w_n: f64,
}

impl FcnWeights {
    pub fn sample<R: Rng + ?Sized>(params: &BaselineParams, rng: &mut R) -> Self {
        FcnWeights {
            w_f: exp_draw(params.lambda_f, rng),
            w_c: exp_draw(params.lambda_c, rng),
            w_n: exp_draw(params.lambda_n, rng),
        }
    }

    /// Risk aversion at the current weights.
    pub fn alpha_t(&self, params: &BaselineParams) -> f64 {
        params.alpha * (params.alpha_diff + self.w_f) / (params.alpha_diff + self.w_c)
    }

    /// Forecast window at the current weights, at least one step.
    pub fn tau_t(&self, params: &BaselineParams) -> usize {
        let raw = params.tau * (params.tau_diff + self.w_f) / (params.tau_diff + self.w_c);
        (raw.ceil() as usize).max(1)
    }

    /// Share of the chartist weight in the fundamentalist/chartist pair.
    pub fn chartist_share(&self) -> f64 {
        let total = self.w_f + self.w_c;
        if total > 0.0 {
            self.w_c / total
        } else {
            0.0
        }
    }
}

/// Return and price forecasts over `tau_t` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcnPrediction {
    pub r_hat: f64,
    pub p_hat: f64,
    pub tau_t: usize,
}

/// Mixes the fundamentalist, chartist and noise forecasts.
///
/// `history[k]` is the market price at step `k` and the last entry is the
/// current price. Lags longer than the history fall back to its first entry.
pub fn fcn_predict(
    weights: &FcnWeights,
    tau_t: usize,
    params: &BaselineParams,
    fundamental: f64,
    history: &[f64],
    noise: f64,
) -> FcnPrediction {
    let p = *history.last().expect("non-empty price history");
    let t = history.len() - 1;
    let lagged = history[t.saturating_sub(tau_t)];
    let total = weights.w_f + weights.w_c + weights.w_n;
    let mix = weights.w_f / params.tau_f as f64 * (fundamental / p).ln()
        + weights.w_c / tau_t as f64 * (p / lagged).ln()
        + weights.w_n * noise;
    let r_hat = if total > 0.0 { mix / total } else { 0.0 };
    FcnPrediction { r_hat, p_hat: p * (tau_t as f64 * r_hat).exp(), tau_t }
}

/// One-unit limit order around the predicted price: buy when the sampled
/// price lies below the prediction, sell when above.
pub fn fcn_decide<R: Rng + ?Sized>(p_hat: f64, order_spread: f64, rng: &mut R) -> Option<OrderIntent> {
    let std = order_spread * p_hat;
    let price = if std > 0.0 {
        Normal::new(p_hat, std).map(|d| d.sample(rng)).unwrap_or(p_hat)
    } else {
        let _: f64 = StandardNormal.sample(rng);
        p_hat
    };
    if !(price > 0.0) || price == p_hat {
        return None;
    }
    let signed_volume = if price < p_hat { 1 } else { -1 };
    Some(OrderIntent { signed_volume, price })
}

/// Accuracy-driven weight update: grows toward `w_max` when the forecast
/// and realized returns share a sign, shrinks toward zero otherwise.
pub fn weight_update(w: f64, r_hat: f64, r: f64, eta: f64, w_max: f64) -> f64 {
    let next = if r_hat * r > 0.0 {
        w + eta * 100.0 * r.abs() * (w_max - w)
    } else {
        w - eta * 100.0 * (r.abs() + r_hat.abs()) * w
    };
    next.clamp(0.0, w_max)
}

/// Re-weights the fundamentalist/chartist pair from their recent accuracy,
/// keeping `w_f + w_c` fixed.
///
/// `prices` and `fundamentals` are indexed by step and end at the current
/// step. Lags are shortened when the history is too short.
pub fn adfcn_update(
    weights: &mut FcnWeights,
    tau_t: usize,
    params: &BaselineParams,
    prices: &[f64],
    fundamentals: &[f64],
) {
    let t = prices.len() - 1;
    if t == 0 {
        return;
    }
    let p_t = prices[t];

    let lag_f = (params.tau_f as usize).min(t);
    let base = t - lag_f;
    let r_hat_f = (fundamentals[base] / prices[base]).ln();
    let r_f = (p_t / prices[base]).ln();
    let w_f = weight_update(weights.w_f, r_hat_f, r_f, params.eta, params.w_max);

    let lag_c = tau_t.min(t / 2);
    let w_c = if lag_c == 0 {
        weights.w_c
    } else {
        let r_hat_c = (prices[t - lag_c] / prices[t - 2 * lag_c]).ln();
        let r_c = (p_t / prices[t - lag_c]).ln();
        weight_update(weights.w_c, r_hat_c, r_c, params.eta, params.w_max)
    };

    let total = weights.w_f + weights.w_c;
    let tilde = w_f + w_c;
    if tilde > 0.0 && tilde.is_finite() {
        weights.w_f = total * w_f / tilde;
        weights.w_c = total * w_c / tilde;
    }
}

/// Scales `w_f + w_c` down to at most `w_max`, keeping their ratio.
pub fn cap_pair(weights: &mut FcnWeights, w_max: f64) {
    let total = weights.w_f + weights.w_c;
    if total > w_max && total > 0.0 {
        weights.w_f *= w_max / total;
        weights.w_c *= w_max / total;
    }
}

/// Median chartist share across agents.
pub fn chartist_ratio(weights: &[FcnWeights]) -> f64 {
    let mut shares: Vec<f64> = weights.iter().map(FcnWeights::chartist_share).collect();
    if shares.is_empty() {
        return 0.0;
    }
    shares.sort_by(f64::total_cmp);
    let n = shares.len();
    if n % 2 == 1 {
        shares[n / 2]
    } else {
        0.5 * (shares[n / 2 - 1] + shares[n / 2])
    }
}
