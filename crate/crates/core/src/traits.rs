//! Heterogeneous preference traits and their population priors.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Uniform};
use thiserror::Error;

use crate::rl::{slot, Observation};
#[allow(unused_imports)]
use num_traits::Float;

/// Offset keeping sampled discount factors strictly below the cap.
pub const GAMMA_CAP_MARGIN: f64 = 1e-6;

/// Per-agent traits and endowments.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AgentTraits {
    /// Std of the noise on the agent's view of the fundamental return.
    pub sigma: f64,
    /// Risk-aversion term; may be negative.
    pub alpha: f64,
    /// Discount factor.
    pub gamma: f64,
    /// Initial stock units.
    pub w0: i64,
    /// Initial cash.
    pub c0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AlphaDist {
    Gaussian,
    /// Uniform with the Gaussian's mean and variance (half-width `sqrt(3) * lambda`).
    Uniform,
    Fixed,
}

/// A subset of the three trait factors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TraitMask {
    pub sigma: bool,
    pub alpha: bool,
    pub gamma: bool,
}

impl TraitMask {
    pub const NONE: TraitMask = TraitMask { sigma: false, alpha: false, gamma: false };
    pub const ALL: TraitMask = TraitMask { sigma: true, alpha: true, gamma: true };

    pub fn is_empty(&self) -> bool {
        !(self.sigma || self.alpha || self.gamma)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriorError {
    #[error("{name} must be finite and non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("lambda_gamma ({lambda_gamma}) must be below gamma_max ({gamma_max})")]
    GammaBounds { lambda_gamma: f64, gamma_max: f64 },
    #[error("gamma_max must lie in (0, 1), got {0}")]
    GammaMax(f64),
    #[error("population size must be at least one")]
    EmptyPopulation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TraitPriors {
    pub mu_sigma: f64,
    pub lambda_sigma: f64,
    pub mu_alpha: f64,
    pub lambda_alpha: f64,
    pub lambda_gamma: f64,
    pub gamma_max: f64,
    /// Mean initial stock units.
    pub w_mean: f64,
    /// Mean initial cash.
    pub c_mean: f64,
    pub alpha_dist: AlphaDist,
    /// Traits pinned to their population mean (homogeneous ablations).
    pub homogeneous: TraitMask,
}

impl Default for TraitPriors {
    /// Population means from the reference settings with the calibrated spreads.
    fn default() -> Self {
        TraitPriors {
            mu_sigma: 0.02,
            lambda_sigma: 0.006,
            mu_alpha: 2.0,
            lambda_alpha: 0.8,
            lambda_gamma: 0.9,
            gamma_max: 0.999,
            w_mean: 20.0,
            c_mean: 15_000.0,
            alpha_dist: AlphaDist::Gaussian,
            homogeneous: TraitMask::NONE,
        }
    }
}

impl TraitPriors {
    pub fn validate(&self) -> Result<(), PriorError> {
        let nonneg = [
            ("mu_sigma", self.mu_sigma),
            ("lambda_sigma", self.lambda_sigma),
            ("lambda_alpha", self.lambda_alpha),
            ("lambda_gamma", self.lambda_gamma),
            ("w_mean", self.w_mean),
            ("c_mean", self.c_mean),
        ];
        for (name, value) in nonneg {
            if !(value.is_finite() && value >= 0.0) {
                return Err(PriorError::Negative { name, value });
            }
        }
        if !self.mu_alpha.is_finite() {
            return Err(PriorError::Negative { name: "mu_alpha", value: self.mu_alpha });
        }
        if !(self.gamma_max > 0.0 && self.gamma_max < 1.0) {
            return Err(PriorError::GammaMax(self.gamma_max));
        }
        if self.lambda_gamma >= self.gamma_max {
            return Err(PriorError::GammaBounds {
                lambda_gamma: self.lambda_gamma,
                gamma_max: self.gamma_max,
            });
        }
        Ok(())
    }

    /// Returns a copy whose `lambda_gamma` is capped just below `gamma_max`.
    pub fn with_clipped_gamma(mut self) -> Self {
        self.lambda_gamma = self.lambda_gamma.min(self.gamma_max - GAMMA_CAP_MARGIN);
        self
    }

    /// Mean of the discount-factor prior.
    pub fn gamma_mean(&self) -> f64 {
        0.5 * (self.lambda_gamma + self.gamma_max)
    }

    fn alpha_fixed(&self) -> bool {
        self.homogeneous.alpha || self.alpha_dist == AlphaDist::Fixed
    }
}

/// Samples `n` agents' traits and endowments.
///
/// Every draw is made even for pinned traits, so two priors that differ only
/// in their homogeneous mask produce identical endowments for the same seed.
pub fn sample_population<R: Rng + ?Sized>(
    priors: &TraitPriors,
    n: usize,
    rng: &mut R,
) -> Result<Vec<AgentTraits>, PriorError> {
    priors.validate()?;
    if n == 0 {
        return Err(PriorError::EmptyPopulation);
    }
    let sigma_dist = Normal::new(priors.mu_sigma, priors.lambda_sigma)
        .map_err(|_| PriorError::Negative { name: "lambda_sigma", value: priors.lambda_sigma })?;
    let alpha_normal = Normal::new(priors.mu_alpha, priors.lambda_alpha)
        .map_err(|_| PriorError::Negative { name: "lambda_alpha", value: priors.lambda_alpha })?;
    let half_width = 3.0f64.sqrt() * priors.lambda_alpha;
    let gamma_lo = priors.lambda_gamma;
    let gamma_hi = priors.gamma_max;

    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let sigma_draw = sigma_dist.sample(rng);
        let alpha_draw = match priors.alpha_dist {
            AlphaDist::Gaussian | AlphaDist::Fixed => alpha_normal.sample(rng),
            AlphaDist::Uniform => {
                let u: f64 = rng.random();
                priors.mu_alpha + half_width * (2.0 * u - 1.0)
            }
        };
        let gamma_draw = if gamma_hi > gamma_lo {
            Uniform::new(gamma_lo, gamma_hi).map(|d| d.sample(rng)).unwrap_or(gamma_lo)
        } else {
            gamma_lo
        };
        let w_draw = exp_draw(priors.w_mean, rng);
        let c_draw = exp_draw(priors.c_mean, rng);

        out.push(AgentTraits {
            sigma: if priors.homogeneous.sigma { priors.mu_sigma } else { sigma_draw.max(0.0) },
            alpha: if priors.alpha_fixed() { priors.mu_alpha } else { alpha_draw },
            gamma: if priors.homogeneous.gamma { priors.gamma_mean() } else { gamma_draw },
            w0: w_draw.ceil() as i64,
            c0: c_draw,
        });
    }
    Ok(out)
}

/// Zeroes the masked trait slots of a normalized observation.
pub fn mask_traits(obs: &Observation, mask: &TraitMask) -> Observation {
    let mut out = *obs;
    if mask.sigma {
        out.0[slot::SIGMA] = 0.0;
    }
    if mask.alpha {
        out.0[slot::ALPHA] = 0.0;
    }
    if mask.gamma {
        out.0[slot::GAMMA] = 0.0;
    }
    out
}

/// One exponential draw with the given mean; zero mean yields zero.
pub fn exp_draw<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        // still consume a draw so streams stay aligned
        let _: f64 = rng.random();
        return 0.0;
    }
    Exp::new(1.0 / mean).map(|d| d.sample(rng)).unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SimRng;
    use rand::SeedableRng;

    fn moments(xs: impl Iterator<Item = f64>) -> (f64, f64, usize) {
        let v: Vec<f64> = xs.collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt(), v.len())
    }

    #[test]
    fn degenerate_priors_share_means() {
        let priors = TraitPriors {
            lambda_sigma: 0.0,
            lambda_alpha: 0.0,
            lambda_gamma: 0.999 - 1e-9,
            ..TraitPriors::default()
        };
        let mut rng = SimRng::seed_from_u64(1);
        let pop = sample_population(&priors, 50, &mut rng).unwrap();
        for a in &pop {
            assert_eq!(a.sigma, 0.02);
            assert_eq!(a.alpha, 2.0);
            assert!(a.gamma < 0.999 && a.gamma >= 0.999 - 1e-9);
        }
    }

    #[test]
    fn alpha_spread_matches_prior() {
        let priors = TraitPriors::default();
        let mut rng = SimRng::seed_from_u64(2);
        let pop = sample_population(&priors, 100_000, &mut rng).unwrap();
        let (_, sd, _) = moments(pop.iter().map(|a| a.alpha));
        assert!((sd - 0.8).abs() / 0.8 < 0.02, "sd {sd}");
    }

    #[test]
    fn uniform_alpha_matches_gaussian_moments() {
        let priors = TraitPriors { alpha_dist: AlphaDist::Uniform, ..TraitPriors::default() };
        let mut rng = SimRng::seed_from_u64(3);
        let pop = sample_population(&priors, 100_000, &mut rng).unwrap();
        let (mean, sd, _) = moments(pop.iter().map(|a| a.alpha));
        assert!((mean - 2.0).abs() < 0.01);
        assert!((sd - 0.8).abs() / 0.8 < 0.02);
        let half = 3.0f64.sqrt() * 0.8;
        assert!(pop.iter().all(|a| (a.alpha - 2.0).abs() <= half));
    }

    #[test]
    fn same_seed_same_population() {
        let priors = TraitPriors::default();
        let a = sample_population(&priors, 30, &mut SimRng::seed_from_u64(9)).unwrap();
        let b = sample_population(&priors, 30, &mut SimRng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn homogeneous_mask_keeps_endowments() {
        let hetero = TraitPriors::default();
        let homo = TraitPriors {
            homogeneous: TraitMask { gamma: true, ..TraitMask::NONE },
            ..hetero
        };
        let a = sample_population(&hetero, 40, &mut SimRng::seed_from_u64(4)).unwrap();
        let b = sample_population(&homo, 40, &mut SimRng::seed_from_u64(4)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!((x.w0, x.c0, x.sigma, x.alpha), (y.w0, y.c0, y.sigma, y.alpha));
            assert_eq!(y.gamma, homo.gamma_mean());
        }
    }

    #[test]
    fn empirical_moments_within_three_standard_errors() {
        let priors = TraitPriors::default();
        let n = 1_000_000;
        let mut rng = SimRng::seed_from_u64(5);
        let pop = sample_population(&priors, n, &mut rng).unwrap();
        let se = |sd: f64| 3.0 * sd / (n as f64).sqrt();

        assert!(pop.iter().all(|a| a.sigma >= 0.0));
        let (m, _, _) = moments(pop.iter().map(|a| a.sigma));
        // clamping at zero is ~4 sd below the mean, so the shift is negligible
        assert!((m - 0.02).abs() < se(0.006));

        let (m, sd, _) = moments(pop.iter().map(|a| a.gamma));
        let (lo, hi) = (0.9, 0.999);
        assert!((m - 0.5 * (lo + hi)).abs() < se((hi - lo) / 12f64.sqrt()));
        assert!((sd - (hi - lo) / 12f64.sqrt()).abs() < 1e-3);
        assert!(pop.iter().all(|a| a.gamma >= lo && a.gamma < hi));

        let (m, _, _) = moments(pop.iter().map(|a| a.c0));
        assert!((m - 15_000.0).abs() < se(15_000.0));
        // ceil of Ex(20) has mean 1 / (1 - exp(-1/20))
        let (m, _, _) = moments(pop.iter().map(|a| a.w0 as f64));
        let expected = 1.0 / (1.0 - (-1.0f64 / 20.0).exp());
        assert!((m - expected).abs() < se(20.0), "w0 mean {m} vs {expected}");
    }

    #[test]
    fn masking() {
        let obs = Observation([0.5; crate::rl::OBS_DIM]);
        assert_eq!(mask_traits(&obs, &TraitMask::NONE), obs);
        let g = mask_traits(&obs, &TraitMask { gamma: true, ..TraitMask::NONE });
        for (i, x) in g.0.iter().enumerate() {
            assert_eq!(*x, if i == slot::GAMMA { 0.0 } else { 0.5 });
        }
        let all = mask_traits(&obs, &TraitMask::ALL);
        assert_eq!(&all.0[8..], &[0.0, 0.0, 0.0]);
        assert_eq!(&all.0[..8], &[0.5; 8]);
    }

    #[test]
    fn invalid_priors_rejected() {
        let p = TraitPriors { lambda_sigma: -0.1, ..TraitPriors::default() };
        assert!(sample_population(&p, 3, &mut SimRng::seed_from_u64(0)).is_err());
        let p = TraitPriors { lambda_gamma: 1.0, ..TraitPriors::default() };
        assert!(p.validate().is_err());
        assert!(p.with_clipped_gamma().validate().is_ok());
    }
}
