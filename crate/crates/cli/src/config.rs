//! TOML experiment configuration. Every key has a default; unknown keys are rejected.

use put_core::a2c::{BeliefInit, TrainConfig};
use put_core::belief::{CostMode, KernelMode};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};

/// A problem with the configuration or command line; maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub scenario: ScenarioSection,
    pub train: TrainSection,
    pub sweep: SweepSection,
    pub eval: EvalSection,
    pub geolife: GeolifeSection,
    pub adversary: AdversarySection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            scenario: ScenarioSection::default(),
            train: TrainSection::default(),
            sweep: SweepSection::default(),
            eval: EvalSection::default(),
            geolife: GeolifeSection::default(),
            adversary: AdversarySection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Grid,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainKind {
    Q0,
    Q1,
    Q2,
}

impl ChainKind {
    pub fn name(self) -> &'static str {
        match self {
            ChainKind::Q0 => "q0",
            ChainKind::Q1 => "q1",
            ChainKind::Q2 => "q2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub source: SourceKind,
    pub width: usize,
    pub height: usize,
    pub chains: Vec<ChainKind>,
    /// `r_d` for every grid distance `d`; defaults to `r_0 = 1, r_d = 7 - d` on 4x4.
    pub q1_weights: Option<Vec<f64>>,
    pub q2_r0: f64,
    pub q2_r1: f64,
    /// Directory holding `transition.csv` and `distortion.csv` (output of `put geolife`).
    pub model_dir: Option<PathBuf>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            source: SourceKind::Grid,
            width: 4,
            height: 4,
            chains: vec![ChainKind::Q0],
            q1_weights: None,
            q2_r0: 1.0,
            q2_r1: 7.0,
            model_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Adc,
    Idc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    State,
    Pair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeliefKind {
    Uniform,
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub horizon: usize,
    pub episodes: usize,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub leaky_slope: f64,
    pub clip_norm: f64,
    pub kernel_mode: KernelKind,
    pub belief_init: BeliefKind,
    pub init_concentration: Option<f64>,
    pub constraint: ConstraintKind,
    /// `λ` for ADC, `D̂` for IDC.
    pub value: f64,
    /// `D̄`, the offset in the ADC cost.
    pub target: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            horizon: d.horizon,
            episodes: d.episodes,
            gamma: d.gamma,
            actor_lr: d.actor_lr,
            critic_lr: d.critic_lr,
            hidden: d.hidden,
            hidden_layers: d.hidden_layers,
            leaky_slope: d.leaky_slope,
            clip_norm: d.clip_norm,
            kernel_mode: KernelKind::State,
            belief_init: BeliefKind::Uniform,
            init_concentration: d.init_concentration,
            constraint: ConstraintKind::Adc,
            value: 1.0,
            target: 0.0,
        }
    }
}

impl TrainSection {
    pub fn cost(&self, value: f64) -> CostMode {
        match self.constraint {
            ConstraintKind::Adc => CostMode::Average {
                lambda: value,
                target: self.target,
            },
            ConstraintKind::Idc => CostMode::Instantaneous { max_distortion: value },
        }
    }

    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            horizon: self.horizon,
            episodes: self.episodes,
            gamma: self.gamma,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            cost: self.cost(self.value),
            kernel_mode: match self.kernel_mode {
                KernelKind::State => KernelMode::StateConditioned,
                KernelKind::Pair => KernelMode::PairConditioned,
            },
            hidden: self.hidden,
            hidden_layers: self.hidden_layers,
            leaky_slope: self.leaky_slope,
            clip_norm: self.clip_norm,
            belief_init: match self.belief_init {
                BeliefKind::Uniform => BeliefInit::Uniform,
                BeliefKind::Stationary => BeliefInit::Stationary,
            },
            seed,
            init_concentration: self.init_concentration,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// `λ` values (ADC) or `D̂` values (IDC).
    pub values: Vec<f64>,
    /// Add myopic rows at each trained point's average distortion (ADC only).
    pub myopic: bool,
    pub rollouts: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            values: Vec::new(),
            myopic: true,
            rollouts: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub checkpoint: Option<PathBuf>,
    pub rollouts: usize,
    /// Release with sampled kernels instead of the Dirichlet mean.
    pub sampled: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            checkpoint: None,
            rollouts: 100,
            sampled: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeolifeSection {
    pub input: PathBuf,
    pub eps_m: f64,
    pub min_pts: usize,
    pub stride_s: i64,
    pub collapse: bool,
    /// Laplace smoothing of the transition counts.
    pub smoothing: f64,
}

impl Default for GeolifeSection {
    fn default() -> Self {
        Self {
            input: PathBuf::from("data/geolife-sample"),
            eps_m: 50.0,
            min_pts: 20,
            stride_s: 60,
            collapse: false,
            smoothing: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Truthful,
    Pdrp,
    Myopic,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversarySection {
    /// Constraint values; the kind comes from `[train] constraint`.
    pub values: Vec<f64>,
    pub policies: Vec<PolicyKind>,
    /// Optional trained actors, one per value; missing entries are trained.
    pub checkpoints: Vec<PathBuf>,
    pub memories: Vec<usize>,
    pub smoothing: f64,
    pub rollouts: usize,
    /// Rollout length; defaults to `[train] horizon`.
    pub horizon: Option<usize>,
}

impl Default for AdversarySection {
    fn default() -> Self {
        Self {
            values: Vec::new(),
            policies: vec![PolicyKind::Truthful, PolicyKind::Pdrp, PolicyKind::Myopic],
            checkpoints: Vec::new(),
            memories: vec![1, 5],
            smoothing: put_core::adversary::DEFAULT_SMOOTHING,
            rollouts: 200,
            horizon: None,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let bytes = std::fs::read(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let text = String::from_utf8(bytes).map_err(|_| ConfigError(format!("{} is not UTF-8", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok((cfg, config_hash(text.as_bytes())))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.geolife.input);
        if let Some(p) = self.scenario.model_dir.as_mut() {
            fix(p);
        }
        if let Some(p) = self.eval.checkpoint.as_mut() {
            fix(p);
        }
        self.adversary.checkpoints.iter_mut().for_each(fix);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.scenario;
        if s.source == SourceKind::Grid {
            if s.width == 0 || s.height == 0 || s.width * s.height < 2 {
                return bad("grid must have at least two cells");
            }
            if s.chains.is_empty() {
                return bad("scenario.chains is empty");
            }
            if !(s.q2_r1 > s.q2_r0 && s.q2_r0 > 0.0) {
                return bad("need q2_r1 > q2_r0 > 0");
            }
        } else if s.model_dir.is_none() {
            return bad("scenario.source = \"model\" needs scenario.model_dir");
        }
        let t = &self.train;
        let tc = t.to_train_config(self.seed);
        tc.validate().map_err(|e| ConfigError(e.to_string()))?;
        if let Some(c) = t.init_concentration {
            if !(c > 0.0) {
                return bad("train.init_concentration must be positive");
            }
        }
        if self.sweep.rollouts == 0 || self.eval.rollouts == 0 || self.adversary.rollouts == 0 {
            return bad("rollout counts must be at least 1");
        }
        if self.sweep.values.iter().any(|v| !(*v >= 0.0)) || self.adversary.values.iter().any(|v| !(*v >= 0.0)) {
            return bad("constraint values must be >= 0");
        }
        let g = &self.geolife;
        if !(g.eps_m > 0.0) || g.min_pts == 0 || g.stride_s <= 0 || !(g.smoothing >= 0.0) {
            return bad("geolife needs eps_m > 0, min_pts >= 1, stride_s > 0, smoothing >= 0");
        }
        let a = &self.adversary;
        if a.memories.is_empty() || a.memories.contains(&0) || !(a.smoothing > 0.0) {
            return bad("adversary needs memories >= 1 and smoothing > 0");
        }
        if a.policies.is_empty() {
            return bad("adversary.policies is empty");
        }
        if a.horizon == Some(0) {
            return bad("adversary.horizon must be at least 1");
        }
        Ok(())
    }
}

pub fn config_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
