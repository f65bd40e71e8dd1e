//! Run configuration: one TOML file, reference defaults for every absent
//! key, command-line overrides on top.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ecomarket_core::baselines::BaselineParams;
use ecomarket_core::env::{validate_baseline, EnvError, Population, SimConfig};
use ecomarket_core::ot::{CalibrationGrid, PriorCandidate, ScoreOptions};
use ecomarket_core::policy::{NetConfig, PolicyError, PpoConfig, PpoError};
use ecomarket_core::stylized::T_LEN;
use ecomarket_core::traits::{AlphaDist, PriorError, TraitMask, TraitPriors};
use ecomarket_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Sim,
    Train,
    Calibrate,
    Analyze,
    Ablate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum PopulationKind {
    #[default]
    Ours,
    /// Every trait pinned to its population mean.
    OursFixed,
    OursUniformAlpha,
    Zi,
    Fcn,
    Adfcn,
    AdfcnFixed,
}

impl PopulationKind {
    pub fn is_learning(self) -> bool {
        matches!(self, Self::Ours | Self::OursFixed | Self::OursUniformAlpha)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ours => "ours",
            Self::OursFixed => "ours_fixed",
            Self::OursUniformAlpha => "ours_uniform_alpha",
            Self::Zi => "zi",
            Self::Fcn => "fcn",
            Self::Adfcn => "adfcn",
            Self::AdfcnFixed => "adfcn_fixed",
        }
    }

    /// Priors as this variant samples them.
    pub fn priors(self, base: &TraitPriors) -> TraitPriors {
        let mut p = *base;
        match self {
            Self::OursFixed => p.homogeneous = TraitMask::ALL,
            Self::OursUniformAlpha => p.alpha_dist = AlphaDist::Uniform,
            _ => {}
        }
        p
    }

    pub fn build(self, priors: &TraitPriors, baseline: &BaselineParams) -> Population {
        match self {
            Self::Ours | Self::OursFixed | Self::OursUniformAlpha => {
                Population::Learning { priors: self.priors(priors), mask: TraitMask::NONE }
            }
            Self::Zi => Population::Zi(*baseline),
            Self::Fcn => Population::Fcn(*baseline),
            Self::Adfcn => Population::AdFcn(*baseline),
            Self::AdfcnFixed => Population::AdFcnFixed(*baseline),
        }
    }
}

impl fmt::Display for PopulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraitKind {
    Sigma,
    Alpha,
    Gamma,
}

impl TraitKind {
    fn mask(self) -> TraitMask {
        let mut m = TraitMask::NONE;
        match self {
            TraitKind::Sigma => m.sigma = true,
            TraitKind::Alpha => m.alpha = true,
            TraitKind::Gamma => m.gamma = true,
        }
        m
    }

    fn as_str(self) -> &'static str {
        match self {
            TraitKind::Sigma => "sigma",
            TraitKind::Alpha => "alpha",
            TraitKind::Gamma => "gamma",
        }
    }
}

/// One arm of the heterogeneity ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Variant {
    Ours,
    /// The trait is pinned to its population mean.
    Homo(TraitKind),
    /// The trait input of the shared networks is zeroed.
    Masked(TraitKind),
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Ours,
        Variant::Homo(TraitKind::Alpha),
        Variant::Masked(TraitKind::Alpha),
        Variant::Homo(TraitKind::Gamma),
        Variant::Masked(TraitKind::Gamma),
        Variant::Homo(TraitKind::Sigma),
        Variant::Masked(TraitKind::Sigma),
    ];

    pub fn population(self, base: &TraitPriors) -> Population {
        let mut priors = *base;
        let mut mask = TraitMask::NONE;
        match self {
            Variant::Ours => {}
            Variant::Homo(t) => priors.homogeneous = t.mask(),
            Variant::Masked(t) => mask = t.mask(),
        }
        Population::Learning { priors, mask }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Ours => f.write_str("ours"),
            Variant::Homo(t) => write!(f, "homo_{}", t.as_str()),
            Variant::Masked(t) => write!(f, "masked_{}", t.as_str()),
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "ours" {
            return Ok(Variant::Ours);
        }
        let (kind, t) = s.split_once('_').ok_or_else(|| format!("unknown variant `{s}`"))?;
        let t = match t {
            "sigma" => TraitKind::Sigma,
            "alpha" => TraitKind::Alpha,
            "gamma" => TraitKind::Gamma,
            _ => return Err(format!("unknown trait in variant `{s}`")),
        };
        match kind {
            "homo" => Ok(Variant::Homo(t)),
            "masked" => Ok(Variant::Masked(t)),
            _ => Err(format!("unknown variant `{s}`")),
        }
    }
}

impl TryFrom<String> for Variant {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> Self {
        v.to_string()
    }
}

/// Searched parameters of the rule-based populations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineGrid {
    pub lambda_c: Vec<f64>,
    pub alpha: Vec<f64>,
    pub tau: Vec<f64>,
    pub tau_diff: Vec<f64>,
}

impl Default for BaselineGrid {
    fn default() -> Self {
        BaselineGrid {
            lambda_c: vec![0.5, 1.0, 1.5, 2.0],
            alpha: vec![0.05, 0.10, 0.15, 0.20],
            tau: vec![100.0, 150.0, 200.0],
            tau_diff: vec![1.0, 6.0, 8.0, 10.0, 14.0, 20.0],
        }
    }
}

/// A point of [`BaselineGrid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineCandidate {
    pub lambda_c: f64,
    pub alpha: f64,
    pub tau: f64,
    pub tau_diff: f64,
}

impl BaselineCandidate {
    pub fn apply(&self, base: &BaselineParams) -> BaselineParams {
        BaselineParams { lambda_c: self.lambda_c, alpha: self.alpha, tau: self.tau, tau_diff: self.tau_diff, ..*base }
    }
}

impl BaselineGrid {
    pub fn candidates(&self) -> Vec<BaselineCandidate> {
        let mut out = Vec::new();
        for &lambda_c in &self.lambda_c {
            for &alpha in &self.alpha {
                for &tau in &self.tau {
                    for &tau_diff in &self.tau_diff {
                        out.push(BaselineCandidate { lambda_c, alpha, tau, tau_diff });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub grid: CalibrationGrid,
    pub baseline_grid: BaselineGrid,
    pub score: ScoreOptions,
    /// Days in the synthetic reference market when no reference file is given.
    pub reference_runs: usize,
    /// Training episodes per learning candidate; 0 reuses the configured policy.
    pub train_episodes: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            grid: CalibrationGrid::default(),
            baseline_grid: BaselineGrid::default(),
            score: ScoreOptions::default(),
            reference_runs: 20,
            train_episodes: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub variants: Vec<Variant>,
    /// Held-out greedy episodes per trained policy.
    pub eval_episodes: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig { variants: Variant::ALL.to_vec(), eval_episodes: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub population: PopulationKind,
    pub seed: u64,
    /// Episodes simulated (sim, analyze) or trained on (train, ablate).
    pub episodes: usize,
    pub trials: usize,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub out: PathBuf,
    /// Policy weights for learning populations; a seeded fresh network otherwise.
    pub checkpoint: Option<PathBuf>,
    /// Bar CSV to analyze instead of simulating.
    pub input: Option<PathBuf>,
    /// Reference bar CSV; the synthetic reference market otherwise.
    pub reference: Option<PathBuf>,
    /// Act with the mean action instead of sampling.
    pub deterministic: bool,
    pub max_updates: Option<usize>,
    /// Bars per simulated day.
    pub t_len: usize,
    pub sim: SimConfig,
    pub priors: TraitPriors,
    pub baseline: BaselineParams,
    pub ppo: PpoConfig,
    pub net: NetConfig,
    pub calibration: CalibrationConfig,
    pub ablation: AblationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Sim,
            population: PopulationKind::Ours,
            seed: 0,
            episodes: 1,
            trials: 5,
            jobs: 0,
            out: PathBuf::from("out"),
            checkpoint: None,
            input: None,
            reference: None,
            deterministic: false,
            max_updates: None,
            t_len: T_LEN,
            sim: SimConfig::default(),
            priors: TraitPriors::default(),
            baseline: BaselineParams::default(),
            ppo: PpoConfig::default(),
            net: NetConfig::default(),
            calibration: CalibrationConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

const REWARD_KEYS: [&str; 12] = [
    "v_max",
    "r_max",
    "xi",
    "omega_b",
    "omega_s",
    "beta_short",
    "beta_cash",
    "beta_illiquidity",
    "beta_fundamental",
    "omega_u",
    "omega_l",
    "ratio_ceiling",
];

fn env_error(section: &str, e: EnvError) -> ConfigError {
    match e {
        EnvError::Config { key, reason } if REWARD_KEYS.contains(&key) => invalid(format!("{section}.reward.{key}"), reason),
        EnvError::Config { key, reason } => invalid(format!("{section}.{key}"), reason),
        other => invalid(section, other.to_string()),
    }
}

fn prior_error(e: PriorError) -> ConfigError {
    match e {
        PriorError::Negative { name, .. } => invalid(format!("priors.{name}"), e.to_string()),
        PriorError::GammaBounds { .. } => invalid("priors.lambda_gamma", e.to_string()),
        PriorError::GammaMax(_) => invalid("priors.gamma_max", e.to_string()),
        PriorError::EmptyPopulation => invalid("sim.n_agents", e.to_string()),
    }
}

fn nonempty(key: &str, v: &[f64]) -> Result<(), ConfigError> {
    if v.is_empty() {
        return Err(invalid(key, "must list at least one value"));
    }
    Ok(())
}

impl RunConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { episodes: self.episodes, max_updates: self.max_updates, ppo: self.ppo, net: self.net }
    }

    pub fn population(&self) -> Population {
        self.population.build(&self.priors, &self.baseline)
    }

    /// Priors of a calibration candidate, with the discount floor kept
    /// below its cap.
    pub fn candidate_priors(&self, c: &PriorCandidate) -> TraitPriors {
        let p = TraitPriors {
            lambda_sigma: c.lambda_sigma,
            lambda_alpha: c.lambda_alpha,
            lambda_gamma: c.lambda_gamma,
            ..self.priors
        };
        self.population.priors(&p).with_clipped_gamma()
    }

    /// Checks every section, naming the first offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sim.validate().map_err(|e| env_error("sim", e))?;
        self.priors.validate().map_err(prior_error)?;
        validate_baseline(&self.baseline).map_err(|e| env_error("baseline", e))?;
        self.ppo.validate().map_err(|e| match e {
            PpoError::Config { key, reason } => invalid(format!("ppo.{key}"), reason),
            other => invalid("ppo", other.to_string()),
        })?;
        self.net.validate().map_err(|e| match e {
            PolicyError::Config { key, reason } => invalid(format!("net.{key}"), reason),
            other => invalid("net", other.to_string()),
        })?;
        if self.episodes == 0 {
            return Err(invalid("episodes", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if self.max_updates == Some(0) {
            return Err(invalid("max_updates", "must be at least 1"));
        }
        if self.t_len < 2 {
            return Err(invalid("t_len", "must be at least 2"));
        }

        let cal = &self.calibration;
        nonempty("calibration.grid.lambda_sigma", &cal.grid.lambda_sigma)?;
        nonempty("calibration.grid.lambda_alpha", &cal.grid.lambda_alpha)?;
        nonempty("calibration.grid.lambda_gamma", &cal.grid.lambda_gamma)?;
        for (key, v) in [
            ("calibration.grid.lambda_sigma", &cal.grid.lambda_sigma),
            ("calibration.grid.lambda_alpha", &cal.grid.lambda_alpha),
            ("calibration.grid.lambda_gamma", &cal.grid.lambda_gamma),
        ] {
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(invalid(key, "values must be finite and non-negative"));
            }
        }
        if cal.grid.lambda_gamma.iter().any(|&g| g > 1.0) {
            return Err(invalid("calibration.grid.lambda_gamma", "values must not exceed 1"));
        }
        let bg = &cal.baseline_grid;
        nonempty("calibration.baseline_grid.lambda_c", &bg.lambda_c)?;
        nonempty("calibration.baseline_grid.alpha", &bg.alpha)?;
        nonempty("calibration.baseline_grid.tau", &bg.tau)?;
        nonempty("calibration.baseline_grid.tau_diff", &bg.tau_diff)?;
        if cal.grid.runs == 0 {
            return Err(invalid("calibration.grid.runs", "must be at least 1"));
        }
        if cal.reference_runs == 0 {
            return Err(invalid("calibration.reference_runs", "must be at least 1"));
        }
        let w = &cal.score.weights;
        for (key, v) in [("r", w.r), ("t", w.t), ("as", w.r#as)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("calibration.score.weights.{key}"), "must be non-negative"));
            }
        }
        if !(cal.score.k_frac > 0.0 && cal.score.k_frac < 1.0) {
            return Err(invalid("calibration.score.k_frac", "must lie in (0, 1)"));
        }
        if cal.score.cap == 0 {
            return Err(invalid("calibration.score.cap", "must be at least 1"));
        }
        if self.ablation.variants.is_empty() {
            return Err(invalid("ablation.variants", "must list at least one variant"));
        }
        if self.ablation.eval_episodes == 0 {
            return Err(invalid("ablation.eval_episodes", "must be at least 1"));
        }

        let simulates_days = match self.mode {
            Mode::Sim | Mode::Train | Mode::Ablate => false,
            Mode::Calibrate => true,
            Mode::Analyze => self.input.is_none(),
        };
        if simulates_days && (self.sim.t_sim as usize) < self.t_len {
            return Err(invalid("t_len", "must not exceed sim.t_sim"));
        }
        match self.mode {
            Mode::Train if !self.population.is_learning() => {
                Err(invalid("population", "training needs a learning population"))
            }
            Mode::Calibrate if self.population == PopulationKind::Zi => {
                Err(invalid("population", "zero-intelligence agents have no searched parameters"))
            }
            Mode::Ablate if self.population != PopulationKind::Ours => {
                Err(invalid("population", "ablations start from the heterogeneous population"))
            }
            _ => Ok(()),
        }
    }

    /// Fully resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }
}

/// Command-line values that win over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub episodes: Option<usize>,
    pub trials: Option<usize>,
    pub population: Option<PopulationKind>,
    pub jobs: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub reference: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(e) = self.episodes {
            cfg.episodes = e;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(p) = self.population {
            cfg.population = p;
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        if let Some(p) = &self.checkpoint {
            cfg.checkpoint = Some(p.clone());
        }
        if let Some(p) = &self.input {
            cfg.input = Some(p.clone());
        }
        if let Some(p) = &self.reference {
            cfg.reference = Some(p.clone());
        }
    }
}

/// Parses configuration text without validating it.
pub fn parse_config_str(text: &str, origin: &str) -> Result<RunConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse { origin: origin.to_string(), message: e.to_string() })
}

/// Reads the file (defaults only when `None`), applies overrides and
/// validates the result.
pub fn parse_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.to_path_buf(), source })?;
            parse_config_str(&text, &p.display().to_string())?
        }
        None => RunConfig::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        let cfg = parse_config_str("", "empty").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.sim.n_agents, 200);
        assert_eq!(cfg.sim.t_sim, 2110);
        assert_eq!(cfg.ppo.clip_eps, 0.8);
        cfg.validate().unwrap();
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.max_updates = Some(7);
        cfg.checkpoint = Some(PathBuf::from("a/b.bin"));
        cfg.ablation.variants = vec![Variant::Ours, Variant::Masked(TraitKind::Gamma)];
        let back = parse_config_str(&cfg.to_toml(), "echo").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn variants_parse() {
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("homo_delta".parse::<Variant>().is_err());
        assert!("hetero_alpha".parse::<Variant>().is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse_config_str("[sim]\nn_agent = 3\n", "t").unwrap_err();
        assert!(err.to_string().contains("n_agent"), "{err}");
    }

    #[test]
    fn candidate_gamma_is_clipped() {
        let cfg = RunConfig::default();
        let c = PriorCandidate { lambda_sigma: 0.0, lambda_alpha: 0.0, lambda_gamma: 1.0 };
        let p = cfg.candidate_priors(&c);
        assert!(p.lambda_gamma < p.gamma_max);
        p.validate().unwrap();
    }

    #[test]
    fn baseline_grid_size() {
        assert_eq!(BaselineGrid::default().candidates().len(), 4 * 4 * 3 * 6);
    }
}
