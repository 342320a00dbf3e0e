//! Experiment configuration files.
//!
//! One TOML or JSON file (chosen by extension) describes an environment, its safe state
//! set, one or more safeguard variants, the training settings and the seeds to run.
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use safeshield_core::envsim::{EnvConfig, Environment, PendulumConfig, QuadrotorConfig};
use safeshield_core::safeguard::{CenterSource, JacobianKind, MapKind, RayMaskConfig, SafeguardKind};
use safeshield_core::shac::TrainConfig;
use safeshield_core::Zonotope;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::sets::{read_zonotope, ZonotopeJson};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    Pendulum,
    Quadrotor,
}

impl EnvId {
    /// Final reward at or below which a run counts as non-convergent.
    pub fn stuck_floor(self) -> f64 {
        match self {
            EnvId::Pendulum => -300.0,
            EnvId::Quadrotor => -1200.0,
        }
    }
}

/// Environment choice with optional overrides of the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub id: EnvId,
    pub dt: Option<f64>,
    pub episode_length: Option<usize>,
    pub noise: Option<f64>,
    /// Quadrotor only: half-widths of the feasible state box.
    pub state_bounds: Option<[f64; 8]>,
}

impl EnvSection {
    pub fn env_config(&self) -> Result<EnvConfig> {
        match self.id {
            EnvId::Pendulum => {
                if self.state_bounds.is_some() {
                    return Err(BenchError::Config("state_bounds applies to the quadrotor only".into()));
                }
                let mut c = PendulumConfig::default();
                if let Some(v) = self.dt {
                    c.dt = v;
                }
                if let Some(v) = self.episode_length {
                    c.episode_length = v;
                }
                if let Some(v) = self.noise {
                    c.noise = v;
                }
                Ok(EnvConfig::Pendulum(c))
            }
            EnvId::Quadrotor => {
                let mut c = QuadrotorConfig::default();
                if let Some(v) = self.dt {
                    c.dt = v;
                }
                if let Some(v) = self.episode_length {
                    c.episode_length = v;
                }
                if let Some(v) = self.noise {
                    c.noise = v;
                }
                if let Some(v) = self.state_bounds {
                    c.state_bounds = v;
                }
                Ok(EnvConfig::Quadrotor(c))
            }
        }
    }
}

/// A safe set given inline or by reference to a zonotope JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SetSource {
    File { file: PathBuf },
    Inline(ZonotopeJson),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafeguardName {
    None,
    BoundaryProjection,
    RayMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterName {
    Explicit,
    Zonotopic,
    Orthogonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapName {
    Linear,
    Hyperbolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianName {
    Exact,
    Passthrough,
}

/// One row of a results table: a safeguard with its modification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSection {
    pub name: String,
    pub safeguard: SafeguardName,
    /// Mapping-distance penalty weight.
    #[serde(default)]
    pub c_d: f64,
    #[serde(default = "default_center")]
    pub center_source: CenterName,
    /// Directions of the zonotopic centre program; defaults to twice the action dimension.
    pub n_dirs: Option<usize>,
    #[serde(default = "default_map")]
    pub map_kind: MapName,
    #[serde(default = "default_jacobian")]
    pub jacobian_kind: JacobianName,
    /// Reference reward printed next to the measured one; never compared.
    pub reference_reward: Option<f64>,
}

fn default_center() -> CenterName {
    CenterName::Zonotopic
}

fn default_map() -> MapName {
    MapName::Linear
}

fn default_jacobian() -> JacobianName {
    JacobianName::Exact
}

impl VariantSection {
    pub fn kind(&self, action_dim: usize) -> Result<SafeguardKind> {
        let kind = match self.safeguard {
            SafeguardName::None => {
                if self.c_d != 0.0 {
                    return Err(BenchError::Config(format!("{}: c_d needs a safeguard", self.name)));
                }
                SafeguardKind::None
            }
            SafeguardName::BoundaryProjection => SafeguardKind::BoundaryProjection {
                regularization: self.c_d,
            },
            SafeguardName::RayMask => {
                let cfg = RayMaskConfig {
                    center_source: match self.center_source {
                        CenterName::Explicit => CenterSource::Explicit,
                        CenterName::Zonotopic => CenterSource::Zonotopic {
                            n_dirs: self.n_dirs.unwrap_or(2 * action_dim),
                        },
                        CenterName::Orthogonal => CenterSource::Orthogonal,
                    },
                    map_kind: match self.map_kind {
                        MapName::Linear => MapKind::Linear,
                        MapName::Hyperbolic => MapKind::Hyperbolic,
                    },
                    jacobian_kind: match self.jacobian_kind {
                        JacobianName::Exact => JacobianKind::Exact,
                        JacobianName::Passthrough => JacobianKind::Passthrough,
                    },
                    regularization: self.c_d,
                };
                cfg.validate(action_dim)?;
                SafeguardKind::RayMask(cfg)
            }
        };
        Ok(kind)
    }
}

/// Optional overrides of [`TrainConfig`]; the seed comes from the seed list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub horizon: Option<usize>,
    pub discount: Option<f64>,
    pub td_lambda: Option<f64>,
    pub actor_lr: Option<f64>,
    pub critic_lr: Option<f64>,
    pub batch: Option<usize>,
    pub total_steps: Option<u64>,
    pub critic_epochs: Option<usize>,
    pub critic_minibatches: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub init_log_std: Option<f64>,
    pub max_grad_norm: Option<f64>,
    pub eval_every: Option<u64>,
    pub eval_episodes: Option<usize>,
}

impl TrainSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            horizon: self.horizon.unwrap_or(d.horizon),
            discount: self.discount.unwrap_or(d.discount),
            td_lambda: self.td_lambda.unwrap_or(d.td_lambda),
            actor_lr: self.actor_lr.unwrap_or(d.actor_lr),
            critic_lr: self.critic_lr.unwrap_or(d.critic_lr),
            batch: self.batch.unwrap_or(d.batch),
            total_steps: self.total_steps.unwrap_or(d.total_steps),
            critic_epochs: self.critic_epochs.unwrap_or(d.critic_epochs),
            critic_minibatches: self.critic_minibatches.unwrap_or(d.critic_minibatches),
            hidden: self.hidden.clone().unwrap_or(d.hidden),
            init_log_std: self.init_log_std.unwrap_or(d.init_log_std),
            max_grad_norm: self.max_grad_norm.unwrap_or(d.max_grad_norm),
            eval_every: self.eval_every.unwrap_or(d.eval_every),
            eval_episodes: self.eval_episodes.unwrap_or(d.eval_episodes),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples() -> usize {
    10_000
}

impl Default for ValidationSection {
    fn default() -> Self {
        ValidationSection {
            samples: default_samples(),
            seed: 0,
        }
    }
}

/// The file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSection,
    pub safe_set: SetSource,
    pub variants: Vec<VariantSection>,
    #[serde(default)]
    pub train: TrainSection,
    pub seeds: Vec<u64>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub validation: ValidationSection,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    pub fn parse(text: &str, json: bool) -> Result<Self> {
        if json {
            serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
        }
    }

    pub fn load(path: &Path) -> Result<Experiment> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg = Self::parse(&text, json).map_err(|e| match e {
            BenchError::Config(m) => BenchError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.resolve(path.parent().unwrap_or(Path::new(".")))
    }

    /// Checks the configuration and loads referenced files relative to `base`.
    pub fn resolve(&self, base: &Path) -> Result<Experiment> {
        if self.seeds.is_empty() {
            return Err(BenchError::Config("the seed list is empty".into()));
        }
        if self.variants.is_empty() {
            return Err(BenchError::Config("no safeguard variants".into()));
        }
        let mut names: Vec<&str> = self.variants.iter().map(|v| v.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(BenchError::Config("variant names must be unique".into()));
        }
        if let Some(bad) = self.variants.iter().find(|v| !valid_name(&v.name)) {
            return Err(BenchError::Config(format!(
                "variant name {:?} may only use letters, digits, '-', '_' and '+'",
                bad.name
            )));
        }
        let env_config = self.env.env_config()?;
        let env = env_config.build().map_err(|e| BenchError::Config(e.to_string()))?;
        let safe_states = match &self.safe_set {
            SetSource::File { file } => {
                let p = base.join(file);
                read_zonotope(&p).map_err(|e| BenchError::Config(e.to_string()))?
            }
            SetSource::Inline(z) => z.to_zonotope()?,
        };
        if safe_states.dim() != env.state_dim() {
            return Err(BenchError::Config(format!(
                "safe set has dimension {}, the {} state has {}",
                safe_states.dim(),
                env.name(),
                env.state_dim()
            )));
        }
        let variants = self
            .variants
            .iter()
            .map(|v| {
                let kind = v
                    .kind(env.action_dim())
                    .map_err(|e| BenchError::Config(e.to_string()))?;
                Ok(Variant {
                    name: v.name.clone(),
                    kind,
                    reference_reward: v.reference_reward,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let train = self.train.train_config(self.seeds[0]);
        train.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        Ok(Experiment {
            env_id: self.env.id,
            env: env_config,
            safe_states,
            variants,
            train: self.train.clone(),
            seeds: self.seeds.clone(),
            out_dir: base.join(&self.out_dir),
            validation: self.validation.clone(),
        })
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '+'))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub kind: SafeguardKind,
    pub reference_reward: Option<f64>,
}

/// A checked configuration with its files loaded.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub env_id: EnvId,
    pub env: EnvConfig,
    pub safe_states: Zonotope,
    pub variants: Vec<Variant>,
    pub train: TrainSection,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub validation: ValidationSection,
}

impl Experiment {
    pub fn build_env(&self) -> Result<Box<dyn Environment>> {
        Ok(self.env.build()?)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        self.train.train_config(seed)
    }

    pub fn variant(&self, name: &str) -> Option<&Variant> {
        self.variants.iter().find(|v| v.name == name)
    }
}
