//! Run configuration, loaded from TOML with sections `[env]`, `[tasks]`,
//! `[constraint]`, `[algo]` and `[run]`. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::Mode;
use crate::environment::ContextLaw;
use crate::tasks::{TaskError, TaskSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
    #[error("cannot override {key}: {message}")]
    Override { key: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Synthetic,
    Features,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextLawKind {
    RandomSupport,
    FixedUniform,
}

fn default_lambda() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    1e-3
}
fn default_spread() -> f64 {
    0.1
}
fn default_support() -> usize {
    5
}
fn default_contexts() -> usize {
    20
}
fn default_one() -> usize {
    1
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}
fn default_law() -> ContextLawKind {
    ContextLawKind::RandomSupport
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub dim: usize,
    pub theta_star: Vec<f64>,
    pub noise_sigma: f64,
    /// Synthetic only.
    #[serde(default)]
    pub num_actions: Option<usize>,
    #[serde(default = "default_contexts")]
    pub num_contexts: usize,
    #[serde(default = "default_spread")]
    pub context_spread: f64,
    #[serde(default = "default_law")]
    pub context_law: ContextLawKind,
    #[serde(default = "default_support")]
    pub support_size: usize,
    /// Draw a separate hidden context per agent instead of one per round.
    #[serde(default)]
    pub per_agent_contexts: bool,
    /// Features only: CSV produced by `ingest` or a feature dump.
    #[serde(default)]
    pub features_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TasksConfig {
    pub agents: usize,
    /// 1-based feature index sets, one per agent. Omit to give every agent
    /// all features.
    #[serde(default)]
    pub index_sets: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    pub alpha: f64,
    pub baseline_rank: usize,
    #[serde(default)]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoConfig {
    pub mode: Mode,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Overrides `T·ln(M·T)/(d·M)`.
    #[serde(default)]
    pub sync_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon: usize,
    #[serde(default = "default_one")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub dump_features: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub tasks: TasksConfig,
    pub constraint: ConstraintConfig,
    pub algo: AlgoConfig,
    pub run: RunSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config; a relative `features_path` resolves against the
    /// config file's directory.
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: RunConfig = toml::from_str(&text)?;
        if let (Some(fp), Some(dir)) = (&cfg.env.features_path, path.parent()) {
            if fp.is_relative() {
                cfg.env.features_path = Some(dir.join(fp));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn context_law(&self) -> ContextLaw {
        match self.env.context_law {
            ContextLawKind::FixedUniform => ContextLaw::FixedUniform,
            ContextLawKind::RandomSupport => ContextLaw::RandomSupport {
                size: self.env.support_size,
            },
        }
    }

    pub fn task_spec(&self) -> Result<TaskSpec, TaskError> {
        match &self.tasks.index_sets {
            None => Ok(TaskSpec::shared(self.env.dim, self.tasks.agents)),
            Some(sets) => TaskSpec::from_one_based(self.env.dim, sets),
        }
    }

    /// Collects every problem instead of stopping at the first.
    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        let env = &self.env;
        if env.dim == 0 {
            out.push("env.dim must be positive".into());
        }
        if env.theta_star.len() != env.dim {
            out.push(format!(
                "env.theta_star has {} entries but env.dim = {}",
                env.theta_star.len(),
                env.dim
            ));
        }
        let theta_norm = env.theta_star.iter().map(|x| x * x).sum::<f64>().sqrt();
        if theta_norm > 1.0 + 1e-9 {
            out.push(format!("‖env.theta_star‖ = {theta_norm:.6} exceeds 1"));
        }
        if !(env.noise_sigma >= 0.0) {
            out.push("env.noise_sigma must be nonnegative".into());
        }
        if env.num_contexts == 0 {
            out.push("env.num_contexts must be positive".into());
        }
        if env.support_size == 0 {
            out.push("env.support_size must be positive".into());
        }
        match env.kind {
            EnvKind::Synthetic => {
                match env.num_actions {
                    None => {
                        out.push("env.num_actions is required for synthetic environments".into())
                    }
                    Some(0) => out.push("env.num_actions must be positive".into()),
                    Some(k) if self.constraint.baseline_rank > k => out.push(format!(
                        "constraint.baseline_rank {} exceeds env.num_actions {k}",
                        self.constraint.baseline_rank
                    )),
                    _ => {}
                }
                if !(env.context_spread >= 0.0) {
                    out.push("env.context_spread must be nonnegative".into());
                }
                if env.features_path.is_some() {
                    out.push("env.features_path is only valid with kind = \"features\"".into());
                }
            }
            EnvKind::Features => {
                if env.features_path.is_none() {
                    out.push("env.features_path is required for kind = \"features\"".into());
                }
            }
        }
        if self.tasks.agents == 0 {
            out.push("tasks.agents must be positive".into());
        }
        if let Some(sets) = &self.tasks.index_sets {
            if sets.len() != self.tasks.agents {
                out.push(format!(
                    "tasks.index_sets has {} entries but tasks.agents = {}",
                    sets.len(),
                    self.tasks.agents
                ));
            } else if let Err(e) = self.task_spec() {
                out.push(format!("tasks.index_sets: {e}"));
            }
        }
        let alpha = self.constraint.alpha;
        if self.algo.mode.is_constrained() {
            if !(alpha > 0.0 && alpha <= 1.0) {
                out.push(format!("constraint.alpha = {alpha} must lie in (0, 1]"));
            }
        } else if !(0.0..=1.0).contains(&alpha) {
            out.push(format!("constraint.alpha = {alpha} must lie in [0, 1]"));
        }
        if self.constraint.baseline_rank == 0 {
            out.push("constraint.baseline_rank must be at least 1".into());
        }
        if let Some(rho) = self.constraint.rho {
            if !(rho > 0.0 && rho < 1.0) {
                out.push(format!("constraint.rho = {rho} must lie in (0, 1)"));
            }
        }
        if !(self.algo.lambda > 0.0) {
            out.push("algo.lambda must be positive".into());
        }
        if !(self.algo.delta > 0.0 && self.algo.delta < 1.0) {
            out.push("algo.delta must lie in (0, 1)".into());
        }
        if let Some(b) = self.algo.sync_threshold {
            if !(b > 0.0) {
                out.push("algo.sync_threshold must be positive".into());
            }
        }
        if self.run.horizon == 0 {
            out.push("run.horizon must be at least 1".into());
        }
        if self.run.trials == 0 {
            out.push("run.trials must be at least 1".into());
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(issues))
        }
    }

    /// Applies one sweep assignment. Supported keys: `alpha`, `agents`
    /// (alias `m`), `mode`.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self, ConfigError> {
        let fail = |message: String| ConfigError::Override {
            key: key.to_string(),
            message,
        };
        let mut cfg = self.clone();
        match key {
            "alpha" => {
                cfg.constraint.alpha = value
                    .parse()
                    .map_err(|_| fail(format!("{value:?} is not a number")))?;
            }
            "agents" | "m" | "M" => {
                let m: usize = value
                    .parse()
                    .map_err(|_| fail(format!("{value:?} is not a positive integer")))?;
                if cfg.tasks.index_sets.is_some() {
                    return Err(fail(
                        "sweeping agents requires tasks.index_sets to be omitted".into(),
                    ));
                }
                cfg.tasks.agents = m;
            }
            "mode" => cfg.algo.mode = value.parse().map_err(fail)?,
            other => {
                return Err(fail(format!(
                    "unsupported sweep key {other:?} (use alpha, agents or mode)"
                )))
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
