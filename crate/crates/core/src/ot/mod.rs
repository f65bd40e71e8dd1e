//! Point-cloud features of return panels, exact optimal transport between
//! uniform clouds, and grid calibration on the weighted distance.

mod simplex;

pub use simplex::{solve_transport, FlowEntry, Solution};

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Display;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use thiserror::Error;

use crate::stylized::{ReturnPanel, HILL_FRACTION};
use crate::SimRng;
#[allow(unused_imports)]
use num_traits::Float;

/// Largest cloud solved exactly; bigger clouds are subsampled.
pub const DEFAULT_CAP: usize = 2000;
/// Lags (in bars) of the absolute-return feature vector.
pub const AS_LAGS: [usize; 9] = [0, 1, 10, 20, 30, 40, 50, 60, 70];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OtError {
    #[error("clouds differ in dimension ({0} vs {1})")]
    Dimension(usize, usize),
    #[error("point cloud is empty")]
    Empty,
    #[error("point cloud has non-finite entries")]
    NonFinite,
    #[error("{0} featurization is degenerate")]
    Degenerate(FeatureKind),
}

/// `K` points in `d` dimensions, each with mass `1/K`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    /// Row-major coordinates, `dim` per point.
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self, OtError> {
        if dim == 0 || coords.is_empty() || coords.len() % dim != 0 {
            return Err(OtError::Empty);
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(OtError::NonFinite);
        }
        Ok(PointCloud { dim, coords })
    }

    pub fn from_scalars(xs: Vec<f64>) -> Result<Self, OtError> {
        Self::new(1, xs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// Shifts every point by `v`.
    pub fn translated(&self, v: &[f64]) -> PointCloud {
        let coords = self.coords.chunks(self.dim).flat_map(|p| p.iter().zip(v).map(|(x, d)| x + d)).collect();
        PointCloud { dim: self.dim, coords }
    }

    /// Uniform subsample without replacement when larger than `cap`.
    pub fn subsample(&self, cap: usize, seed: u64) -> PointCloud {
        let k = self.len();
        if k <= cap || cap == 0 {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..k).collect();
        let mut rng = SimRng::seed_from_u64(seed);
        let (chosen, _) = idx.partial_shuffle(&mut rng, cap);
        chosen.sort_unstable();
        let coords = chosen.iter().flat_map(|&i| self.point(i).iter().copied()).collect();
        PointCloud { dim: self.dim, coords }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Optimal coupling with its cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub cost: f64,
    /// `(i, j, mass)` with mass in units of the total.
    pub entries: Vec<(usize, usize, f64)>,
}

fn check_pair(a: &PointCloud, b: &PointCloud) -> Result<(), OtError> {
    if a.dim != b.dim {
        return Err(OtError::Dimension(a.dim, b.dim));
    }
    if a.is_empty() || b.is_empty() {
        return Err(OtError::Empty);
    }
    Ok(())
}

/// Exact coupling from the network simplex.
pub fn transport_plan(a: &PointCloud, b: &PointCloud) -> Result<TransportPlan, OtError> {
    check_pair(a, b)?;
    let (k, l) = (a.len(), b.len());
    let mut cost = Vec::with_capacity(k * l);
    for i in 0..k {
        let p = a.point(i);
        cost.extend((0..l).map(|j| sq_dist(p, b.point(j))));
    }
    let sol = solve_transport(&alloc::vec![l as i64; k], &alloc::vec![k as i64; l], &cost);
    let total = (k * l) as f64;
    Ok(TransportPlan {
        cost: sol.cost / total,
        entries: sol.flows.iter().map(|e| (e.source, e.sink, e.flow as f64 / total)).collect(),
    })
}

/// Exact 1-d distance from the monotone coupling of sorted samples.
pub fn ot_distance_1d(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (k, l) = (xs.len() as i64, ys.len() as i64);
    // masses in units of 1/(k*l): each x carries l, each y carries k
    let (mut i, mut j) = (0usize, 0usize);
    let (mut left_x, mut left_y) = (l, k);
    let mut sum = 0.0;
    while i < xs.len() && j < ys.len() {
        let f = left_x.min(left_y);
        sum += f as f64 * (xs[i] - ys[j]) * (xs[i] - ys[j]);
        left_x -= f;
        left_y -= f;
        if left_x == 0 {
            i += 1;
            left_x = l;
        }
        if left_y == 0 {
            j += 1;
            left_y = k;
        }
    }
    sum / (k * l) as f64
}

/// Squared 2-Wasserstein distance between uniform clouds.
pub fn ot_distance(a: &PointCloud, b: &PointCloud) -> Result<f64, OtError> {
    check_pair(a, b)?;
    if a.dim == 1 {
        return Ok(ot_distance_1d(&a.coords, &b.coords));
    }
    Ok(transport_plan(a, b)?.cost)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum FeatureKind {
    /// Every standardized return.
    R,
    /// Log ratios of the top absolute returns to the next one.
    T,
    /// Absolute returns at a fixed set of forward lags.
    As,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [FeatureKind::R, FeatureKind::T, FeatureKind::As];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::R => "r",
            FeatureKind::T => "t",
            FeatureKind::As => "as",
        }
    }
}

impl Display for FeatureKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Number of top order statistics in the tail cloud of `n` returns.
pub fn tail_count(n: usize, k_frac: f64) -> usize {
    (k_frac * n as f64).ceil() as usize
}

pub fn featurize(panel: &ReturnPanel, kind: FeatureKind, k_frac: f64) -> Result<PointCloud, OtError> {
    match kind {
        FeatureKind::R => PointCloud::from_scalars(panel.flat()),
        FeatureKind::T => {
            let mut abs: Vec<f64> = panel.flat().iter().map(|r| r.abs()).collect();
            let n = abs.len();
            let k = tail_count(n, k_frac);
            if k == 0 || k >= n {
                return Err(OtError::Degenerate(kind));
            }
            abs.sort_by(|a, b| b.total_cmp(a));
            let threshold = abs[k];
            if !(threshold > 0.0) {
                return Err(OtError::Degenerate(kind));
            }
            PointCloud::from_scalars(abs[..k].iter().map(|x| (x / threshold).ln()).collect())
        }
        FeatureKind::As => {
            let span = AS_LAGS[AS_LAGS.len() - 1];
            let mut coords = Vec::new();
            for day in &panel.returns {
                if day.len() <= span {
                    continue;
                }
                for t in 0..day.len() - span {
                    coords.extend(AS_LAGS.iter().map(|lag| day[t + lag].abs()));
                }
            }
            if coords.is_empty() {
                return Err(OtError::Degenerate(kind));
            }
            PointCloud::new(AS_LAGS.len(), coords)
        }
    }
}

/// Weights of the three distances in the aggregate score.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct OtWeights {
    pub r: f64,
    pub t: f64,
    pub r#as: f64,
}

impl Default for OtWeights {
    fn default() -> Self {
        OtWeights { r: 1.0, t: 2.0, r#as: 4.0 }
    }
}

/// Per-feature distances and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Score {
    pub ot_r: f64,
    pub ot_t: f64,
    pub ot_as: f64,
    pub total: f64,
}

impl Score {
    pub fn weighted(ot_r: f64, ot_t: f64, ot_as: f64, w: &OtWeights) -> Self {
        Score { ot_r, ot_t, ot_as, total: w.r * ot_r + w.t * ot_t + w.r#as * ot_as }
    }
}

/// How clouds are built and sized before solving.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ScoreOptions {
    pub weights: OtWeights,
    pub k_frac: f64,
    /// Clouds larger than this are subsampled.
    pub cap: usize,
    pub subsample_seed: u64,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions { weights: OtWeights::default(), k_frac: HILL_FRACTION, cap: DEFAULT_CAP, subsample_seed: 0 }
    }
}

/// The three clouds of one panel, subsampled to the cap.
#[derive(Debug, Clone, PartialEq)]
pub struct Clouds {
    pub r: PointCloud,
    pub t: PointCloud,
    pub r#as: PointCloud,
}

impl Clouds {
    pub fn new(panel: &ReturnPanel, opts: &ScoreOptions) -> Result<Self, OtError> {
        let build = |kind: FeatureKind, salt: u64| -> Result<PointCloud, OtError> {
            let cloud = featurize(panel, kind, opts.k_frac)?;
            Ok(cloud.subsample(opts.cap, crate::derive_seed(opts.subsample_seed, salt)))
        };
        Ok(Clouds { r: build(FeatureKind::R, 0)?, t: build(FeatureKind::T, 1)?, r#as: build(FeatureKind::As, 2)? })
    }

    pub fn score(&self, other: &Clouds, weights: &OtWeights) -> Result<Score, OtError> {
        Ok(Score::weighted(
            ot_distance(&self.r, &other.r)?,
            ot_distance(&self.t, &other.t)?,
            ot_distance(&self.r#as, &other.r#as)?,
            weights,
        ))
    }
}

/// Mean over runs of the weighted distance of each run to the reference.
pub fn aggregate_score(runs: &[ReturnPanel], reference: &Clouds, opts: &ScoreOptions) -> Result<Score, OtError> {
    if runs.is_empty() {
        return Err(OtError::Empty);
    }
    let mut acc = Score::default();
    for run in runs {
        let s = Clouds::new(run, opts)?.score(reference, &opts.weights)?;
        acc.ot_r += s.ot_r;
        acc.ot_t += s.ot_t;
        acc.ot_as += s.ot_as;
    }
    let k = runs.len() as f64;
    Ok(Score::weighted(acc.ot_r / k, acc.ot_t / k, acc.ot_as / k, &opts.weights))
}

/// Trait-prior spreads searched by calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PriorCandidate {
    pub lambda_sigma: f64,
    pub lambda_alpha: f64,
    pub lambda_gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CalibrationGrid {
    pub lambda_sigma: Vec<f64>,
    pub lambda_alpha: Vec<f64>,
    pub lambda_gamma: Vec<f64>,
    pub runs: usize,
}

impl Default for CalibrationGrid {
    fn default() -> Self {
        CalibrationGrid {
            lambda_sigma: alloc::vec![0.0, 0.002, 0.004, 0.006, 0.008, 0.010],
            lambda_alpha: alloc::vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            lambda_gamma: alloc::vec![0.75, 0.80, 0.85, 0.90, 0.95, 1.00],
            runs: 20,
        }
    }
}

impl CalibrationGrid {
    /// Candidates in σ-major, then α, then γ order.
    pub fn candidates(&self) -> Vec<PriorCandidate> {
        let mut out = Vec::new();
        for &s in &self.lambda_sigma {
            for &a in &self.lambda_alpha {
                for &g in &self.lambda_gamma {
                    out.push(PriorCandidate { lambda_sigma: s, lambda_alpha: a, lambda_gamma: g });
                }
            }
        }
        out
    }
}

/// Outcome for one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranked<C> {
    pub index: usize,
    pub candidate: C,
    pub score: Result<Score, String>,
    /// 1-based rank among successful candidates.
    pub rank: Option<usize>,
}

/// Scores one candidate's runs; runner and scoring failures become `Err`.
pub fn evaluate_candidate<E: Display>(
    runs: Result<Vec<ReturnPanel>, E>,
    reference: &Clouds,
    opts: &ScoreOptions,
) -> Result<Score, String> {
    let runs = runs.map_err(|e| e.to_string())?;
    aggregate_score(&runs, reference, opts).map_err(|e| e.to_string())
}

/// Orders candidates by ascending score, ties by index; failures go last
/// without a rank.
pub fn rank<C>(mut results: Vec<Ranked<C>>) -> Vec<Ranked<C>> {
    results.sort_by(|a, b| match (&a.score, &b.score) {
        (Ok(x), Ok(y)) => x.total.total_cmp(&y.total).then(a.index.cmp(&b.index)),
        (Ok(_), Err(_)) => core::cmp::Ordering::Less,
        (Err(_), Ok(_)) => core::cmp::Ordering::Greater,
        (Err(_), Err(_)) => a.index.cmp(&b.index),
    });
    let mut r = 0;
    for item in &mut results {
        item.rank = item.score.is_ok().then(|| {
            r += 1;
            r
        });
    }
    results
}

/// Sequential grid search: runs every candidate, scores it against the
/// reference and returns the ranking.
pub fn calibrate<C: Clone, E: Display>(
    candidates: &[C],
    mut runner: impl FnMut(usize, &C) -> Result<Vec<ReturnPanel>, E>,
    reference: &ReturnPanel,
    opts: &ScoreOptions,
) -> Result<Vec<Ranked<C>>, OtError> {
    let reference = Clouds::new(reference, opts)?;
    let results = candidates
        .iter()
        .enumerate()
        .map(|(index, c)| Ranked {
            index,
            candidate: c.clone(),
            score: evaluate_candidate(runner(index, c), &reference, opts),
            rank: None,
        })
        .collect();
    Ok(rank(results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::Rng;

    fn cloud1(xs: &[f64]) -> PointCloud {
        PointCloud::from_scalars(xs.to_vec()).unwrap()
    }

    #[test]
    fn small_examples() {
        assert_eq!(ot_distance(&cloud1(&[0.0]), &cloud1(&[3.0])).unwrap(), 9.0);
        assert_eq!(ot_distance(&cloud1(&[0.0, 1.0]), &cloud1(&[0.0, 2.0])).unwrap(), 0.5);
        assert_eq!(transport_plan(&cloud1(&[0.0, 1.0]), &cloud1(&[0.0, 2.0])).unwrap().cost, 0.5);
        let a = PointCloud::new(2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let b = PointCloud::new(3, vec![0.0; 3]).unwrap();
        assert_eq!(ot_distance(&a, &b), Err(OtError::Dimension(2, 3)));
    }

    #[test]
    fn one_dimensional_path_matches_simplex() {
        let mut rng = SimRng::seed_from_u64(7);
        for _ in 0..100 {
            let k = rng.random_range(1..12);
            let l = rng.random_range(1..12);
            let a: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..l).map(|_| rng.random_range(-3.0..3.0)).collect();
            let fast = ot_distance_1d(&a, &b);
            let exact = transport_plan(&cloud1(&a), &cloud1(&b)).unwrap().cost;
            assert!((fast - exact).abs() < 1e-10, "{fast} vs {exact}");
        }
    }

    #[test]
    fn translation_of_singletons() {
        for v in [-2.0, 0.5, 4.0] {
            let b = cloud1(&[3.0]).translated(&[v]);
            assert_eq!(ot_distance(&cloud1(&[0.0]), &b).unwrap(), (3.0 + v) * (3.0 + v));
        }
    }

    #[test]
    fn plan_marginals_and_symmetry() {
        let mut rng = SimRng::seed_from_u64(8);
        for _ in 0..20 {
            let k = rng.random_range(1..15);
            let l = rng.random_range(1..15);
            let a = PointCloud::new(3, (0..3 * k).map(|_| rng.random::<f64>()).collect()).unwrap();
            let b = PointCloud::new(3, (0..3 * l).map(|_| rng.random::<f64>()).collect()).unwrap();
            let plan = transport_plan(&a, &b).unwrap();
            let mut rows = vec![0.0; k];
            let mut cols = vec![0.0; l];
            for &(i, j, m) in &plan.entries {
                rows[i] += m;
                cols[j] += m;
            }
            assert!(rows.iter().all(|r| (r - 1.0 / k as f64).abs() < 1e-10));
            assert!(cols.iter().all(|c| (c - 1.0 / l as f64).abs() < 1e-10));
            let back = transport_plan(&b, &a).unwrap();
            assert!((plan.cost - back.cost).abs() < 1e-10);
        }
    }

    fn panel(days: usize, len: usize, seed: u64) -> ReturnPanel {
        let mut rng = SimRng::seed_from_u64(seed);
        let returns: Vec<Vec<f64>> =
            (0..days).map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let volumes = returns.iter().map(|d| vec![1.0; d.len()]).collect();
        ReturnPanel { returns, volumes }
    }

    #[test]
    fn feature_counts() {
        let p = panel(2, 299, 1);
        assert_eq!(featurize(&p, FeatureKind::R, 0.05).unwrap().len(), 598);
        let a = featurize(&p, FeatureKind::As, 0.05).unwrap();
        assert_eq!((a.len(), a.dim()), (2 * 229, 9));
        let t = featurize(&p, FeatureKind::T, 0.05).unwrap();
        assert_eq!(t.len(), 30);
        // the smallest tail point is the last and is non-negative
        let mut pts: Vec<f64> = (0..t.len()).map(|i| t.point(i)[0]).collect();
        assert!(pts.iter().all(|x| *x >= 0.0));
        pts.sort_by(f64::total_cmp);
        assert_eq!(pts[0], t.point(t.len() - 1)[0]);
    }

    #[test]
    fn tail_degenerate_on_zero_threshold() {
        let mut p = panel(1, 100, 2);
        p.returns[0].iter_mut().skip(3).for_each(|r| *r = 0.0);
        assert_eq!(featurize(&p, FeatureKind::T, 0.05), Err(OtError::Degenerate(FeatureKind::T)));
    }

    #[test]
    fn self_score_is_zero_and_linear_in_weights() {
        let p = panel(2, 299, 3);
        let opts = ScoreOptions::default();
        let c = Clouds::new(&p, &opts).unwrap();
        let s = aggregate_score(&[p.clone()], &c, &opts).unwrap();
        assert!(s.total.abs() < 1e-9, "{s:?}");
        let q = panel(1, 299, 4);
        let base = aggregate_score(&[q.clone()], &c, &opts).unwrap();
        let mut w2 = opts;
        w2.weights.r#as *= 2.0;
        let doubled = aggregate_score(&[q], &c, &w2).unwrap();
        assert!((doubled.total - base.total - 4.0 * base.ot_as).abs() < 1e-9);
    }

    #[test]
    fn calibrate_ranks_reference_first_and_tolerates_failures() {
        let reference = panel(2, 299, 5);
        let cands = [0u64, 1, 2, 3];
        let ranked = calibrate(
            &cands,
            |_, &c| match c {
                0 => Ok(vec![panel(1, 299, 10)]),
                1 => Ok(vec![reference.clone()]),
                2 => Err("runner blew up"),
                _ => Ok(vec![panel(1, 299, 11)]),
            },
            &reference,
            &ScoreOptions::default(),
        )
        .unwrap();
        assert_eq!(ranked[0].candidate, 1);
        assert!(ranked[0].score.as_ref().unwrap().total < 1e-9);
        assert_eq!(ranked[0].rank, Some(1));
        let last = ranked.last().unwrap();
        assert_eq!((last.candidate, last.rank), (2, None));
        let one = calibrate(&[9u8], |_, _| Ok::<_, &str>(vec![panel(1, 299, 12)]), &reference, &ScoreOptions::default())
            .unwrap();
        assert_eq!(one[0].rank, Some(1));
    }

    #[test]
    fn grid_has_216_candidates() {
        let g = CalibrationGrid::default();
        let c = g.candidates();
        assert_eq!(c.len(), 216);
        assert_eq!(c[0], PriorCandidate { lambda_sigma: 0.0, lambda_alpha: 0.0, lambda_gamma: 0.75 });
    }
}
