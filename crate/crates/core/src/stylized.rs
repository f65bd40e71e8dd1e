//! Stylized-fact statistics of one-minute bar panels.

use alloc::vec::Vec;

use thiserror::Error;
#[allow(unused_imports)]
use num_traits::Float;

/// Hill tail fraction.
pub const HILL_FRACTION: f64 = 0.05;
/// Lags of the absolute-return autocorrelation regression.
pub const ACORR_LAGS: core::ops::RangeInclusive<usize> = 1..=70;
/// Default bars per day.
pub const T_LEN: usize = 300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("panel has no days")]
    Empty,
    #[error("day {day} has {len} bars, expected {expected}")]
    Ragged { day: usize, len: usize, expected: usize },
    #[error("day {day} needs at least two bars")]
    TooShort { day: usize },
    #[error("non-positive or non-finite price {price} on day {day}, bar {bar}")]
    BadPrice { day: usize, bar: usize, price: f64 },
    #[error("returns have zero variance")]
    Degenerate,
}

/// One day of bars: closing mid price and executed volume per minute.
#[derive(Debug, Clone, PartialEq)]
pub struct Day {
    pub prices: Vec<f64>,
    pub volumes: Vec<f64>,
}

/// Equal-length days of bars.
#[derive(Debug, Clone, PartialEq)]
pub struct BarSeries {
    days: Vec<Day>,
}

impl BarSeries {
    pub fn new(days: Vec<Day>) -> Result<Self, MetricError> {
        let expected = days.first().ok_or(MetricError::Empty)?.prices.len();
        for (d, day) in days.iter().enumerate() {
            if day.prices.len() != expected || day.volumes.len() != expected {
                let len = if day.prices.len() != expected { day.prices.len() } else { day.volumes.len() };
                return Err(MetricError::Ragged { day: d, len, expected });
            }
            if expected < 2 {
                return Err(MetricError::TooShort { day: d });
            }
            if let Some((bar, &price)) = day.prices.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p > 0.0)) {
                return Err(MetricError::BadPrice { day: d, bar, price });
            }
        }
        Ok(BarSeries { days })
    }

    pub fn days(&self) -> &[Day] {
        &self.days
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn t_len(&self) -> usize {
        self.days[0].prices.len()
    }

    /// Concatenates two panels with the same day length.
    pub fn extend(&mut self, other: BarSeries) -> Result<(), MetricError> {
        if other.t_len() != self.t_len() {
            return Err(MetricError::Ragged { day: self.n_days(), len: other.t_len(), expected: self.t_len() });
        }
        self.days.extend(other.days);
        Ok(())
    }
}

/// Bins one episode into `t_len` bars.
///
/// `mids[k]` and `volumes[k]` belong to simulation step `k + 1`. The first
/// `len % t_len` steps are dropped so every bar spans the same number of
/// steps; each bar keeps its last mid and its summed volume.
pub fn bin_episode(mids: &[f64], volumes: &[f64], t_len: usize) -> Option<Day> {
    let n = mids.len().min(volumes.len());
    if t_len == 0 || n < t_len {
        return None;
    }
    let width = n / t_len;
    let skip = n - width * t_len;
    let mut prices = Vec::with_capacity(t_len);
    let mut vols = Vec::with_capacity(t_len);
    for b in 0..t_len {
        let lo = skip + b * width;
        let hi = lo + width;
        prices.push(mids[hi - 1]);
        vols.push(volumes[lo..hi].iter().sum());
    }
    Some(Day { prices, volumes: vols })
}

/// Standardized log returns and their bar volumes, one row per day.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    pub returns: Vec<Vec<f64>>,
    /// Volume of the bar each return ends in.
    pub volumes: Vec<Vec<f64>>,
}

impl ReturnPanel {
    pub fn flat(&self) -> Vec<f64> {
        self.returns.iter().flatten().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.returns.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Log returns per day, standardized with one mean and sample std over the
/// whole panel.
pub fn standardize_returns(bars: &BarSeries) -> Result<ReturnPanel, MetricError> {
    let mut returns: Vec<Vec<f64>> = bars
        .days()
        .iter()
        .map(|d| d.prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
        .collect();
    let volumes = bars.days().iter().map(|d| d.volumes[1..].to_vec()).collect();
    let n: usize = returns.iter().map(Vec::len).sum();
    if n < 2 {
        return Err(MetricError::Degenerate);
    }
    let mean = returns.iter().flatten().sum::<f64>() / n as f64;
    let var = returns.iter().flatten().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    if !(std > 0.0) || !std.is_finite() {
        return Err(MetricError::Degenerate);
    }
    for r in returns.iter_mut().flatten() {
        *r = (*r - mean) / std;
    }
    Ok(ReturnPanel { returns, volumes })
}

/// Excess kurtosis `m4 / m2^2 - 3` with central moments over `n`.
pub fn kurtosis(xs: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 4 {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let (mut m2, mut m4) = (0.0, 0.0);
    for x in xs {
        let d = (x - mean) * (x - mean);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n as f64;
    m4 /= n as f64;
    (m2 > 0.0).then(|| m4 / (m2 * m2) - 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillEstimate {
    pub alpha: f64,
    /// Number of top order statistics used.
    pub k: usize,
    /// Zero absolute values left out of the sample.
    pub excluded_zeros: usize,
}

/// Hill estimator over absolute values, using the top `ceil(k_frac * N)`
/// order statistics of the `N` nonzero ones.
pub fn hill_tail_exponent(xs: &[f64], k_frac: f64) -> Option<HillEstimate> {
    let mut abs: Vec<f64> = xs.iter().map(|x| x.abs()).filter(|x| *x > 0.0 && x.is_finite()).collect();
    let excluded_zeros = xs.len() - abs.len();
    let n = abs.len();
    let k = (k_frac * n as f64).ceil() as usize;
    if k < 10 || k >= n {
        return None;
    }
    abs.sort_by(|a, b| b.total_cmp(a));
    let threshold = abs[k];
    let mean_log = abs[..k].iter().map(|x| (x / threshold).ln()).sum::<f64>() / k as f64;
    (mean_log > 0.0).then(|| HillEstimate { alpha: 1.0 / mean_log, k, excluded_zeros })
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs[..n].iter().zip(&ys[..n]) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Mean over days of the lag-`tau` correlation of absolute returns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagCorrelation {
    pub lag: usize,
    pub corr: f64,
    /// Number of `(t, t + lag)` pairs across the days that contributed.
    pub pairs: usize,
}

pub fn abs_return_autocorrelations(
    panel: &ReturnPanel,
    lags: impl IntoIterator<Item = usize>,
) -> Vec<LagCorrelation> {
    let abs: Vec<Vec<f64>> = panel.returns.iter().map(|d| d.iter().map(|r| r.abs()).collect()).collect();
    let mut out = Vec::new();
    for lag in lags {
        let mut sum = 0.0;
        let mut days = 0usize;
        let mut pairs = 0usize;
        for day in &abs {
            if day.len() <= lag + 1 {
                continue;
            }
            if let Some(c) = pearson(&day[..day.len() - lag], &day[lag..]) {
                sum += c;
                days += 1;
                pairs += day.len() - lag;
            }
        }
        if days > 0 {
            out.push(LagCorrelation { lag, corr: sum / days as f64, pairs });
        }
    }
    out
}

/// Negated least-squares slope of `ln corr` on `ln lag`. Needs at least
/// three points, all with positive correlation.
pub fn decay_exponent(lags: &[f64], corrs: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = lags
        .iter()
        .zip(corrs)
        .filter(|(l, c)| **l > 0.0 && **c > 0.0)
        .map(|(l, c)| (l.ln(), c.ln()))
        .collect();
    if pts.len() < 3 || pts.len() != lags.len().min(corrs.len()) {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

/// Decay exponent of absolute-return autocorrelation. Lags whose mean
/// correlation does not clear the white-noise band `3 / sqrt(pairs)` are
/// left out; fewer than three remaining lags leave it undefined.
pub fn acorr_decay_coefficient(
    panel: &ReturnPanel,
    lags: impl IntoIterator<Item = usize>,
) -> Option<f64> {
    let (ls, cs): (Vec<f64>, Vec<f64>) = abs_return_autocorrelations(panel, lags)
        .into_iter()
        .filter(|c| c.corr > 3.0 / (c.pairs as f64).sqrt())
        .map(|c| (c.lag as f64, c.corr))
        .unzip();
    decay_exponent(&ls, &cs)
}

/// Correlation of bar volume with absolute return, pooled across days.
pub fn volume_volatility_corr(panel: &ReturnPanel) -> Option<f64> {
    let abs: Vec<f64> = panel.returns.iter().flatten().map(|r| r.abs()).collect();
    let vols: Vec<f64> = panel.volumes.iter().flatten().copied().collect();
    pearson(&vols, &abs)
}

/// The four statistics; `None` marks an undefined value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricReport {
    pub kurtosis: Option<f64>,
    pub tail: Option<f64>,
    pub acorr: Option<f64>,
    pub vv_corr: Option<f64>,
}

/// Per-statistic agreement with the empirical regularities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Conformity {
    pub kurtosis: bool,
    pub tail: bool,
    pub acorr: bool,
    pub vv_corr: bool,
}

impl MetricReport {
    pub fn conformity(&self) -> Conformity {
        Conformity {
            kurtosis: self.kurtosis.is_some_and(|k| k > 0.0),
            tail: self.tail.is_some_and(|a| (2.5..=3.5).contains(&a)),
            acorr: self.acorr.is_some_and(|z| z > 0.0 && z < 1.0),
            vv_corr: self.vv_corr.is_some_and(|c| c > 0.0),
        }
    }
}

pub fn analyze_panel(panel: &ReturnPanel) -> MetricReport {
    let flat = panel.flat();
    MetricReport {
        kurtosis: kurtosis(&flat),
        tail: hill_tail_exponent(&flat, HILL_FRACTION).map(|h| h.alpha),
        acorr: acorr_decay_coefficient(panel, ACORR_LAGS),
        vv_corr: volume_volatility_corr(panel),
    }
}

pub fn analyze(bars: &BarSeries) -> Result<MetricReport, MetricError> {
    Ok(analyze_panel(&standardize_returns(bars)?))
}
