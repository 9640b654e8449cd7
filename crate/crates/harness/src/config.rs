//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use acer_core::curriculum::CurriculumConfig;
use acer_core::env::toy::{ToyConfig, ToyEnv};
use acer_core::env::uav::{Scenario, UavEnv};
use acer_core::env::Environment;
use acer_core::refresh::RefreshConfig;
use acer_core::replay::{BufferConfig, EvictionPolicy, ReplayMode};
use acer_core::td3::{Td3Config, TdErrorCritic};
use acer_core::{AcerError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Uav,
    Toy,
}

/// Learner hyperparameters; action bounds come from the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub tau_actor: f64,
    pub tau_critic: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub actor_delay: u64,
    pub exploration_sigma: f64,
    pub smoothing_sigma: f64,
    pub smoothing_clip: f64,
    pub hidden_dims: Vec<usize>,
    pub td_error_critic: TdErrorCritic,
}

impl Default for AgentConfig {
    fn default() -> Self {
        let p = Td3Config::standard(1);
        AgentConfig {
            gamma: p.gamma,
            tau_actor: p.tau_actor,
            tau_critic: p.tau_critic,
            actor_lr: p.actor_lr,
            critic_lr: p.critic_lr,
            actor_delay: p.actor_delay,
            exploration_sigma: p.exploration_sigma,
            smoothing_sigma: p.smoothing_sigma,
            smoothing_clip: p.smoothing_clip,
            hidden_dims: p.hidden_dims,
            td_error_critic: p.td_error_critic,
        }
    }
}

impl AgentConfig {
    pub fn td3(&self, action_dim: usize) -> Td3Config {
        Td3Config {
            gamma: self.gamma,
            tau_actor: self.tau_actor,
            tau_critic: self.tau_critic,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            actor_delay: self.actor_delay,
            exploration_sigma: self.exploration_sigma,
            smoothing_sigma: self.smoothing_sigma,
            smoothing_clip: self.smoothing_clip,
            action_low: vec![-1.0; action_dim],
            action_high: vec![1.0; action_dim],
            hidden_dims: self.hidden_dims.clone(),
            td_error_critic: self.td_error_critic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: ReplayMode,
    pub env: EnvKind,
    /// Total episodes `M`.
    pub episodes: u64,
    /// Step cap per episode `T`; overrides the environment's own cap.
    pub max_steps: usize,
    pub warmup_episodes: u64,
    /// Learn every `K` steps of an episode.
    pub replay_period: usize,
    pub batch_size: usize,
    pub temp_pool: usize,
    pub buffer_capacity: usize,
    pub alpha: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub eviction: EvictionPolicy,
    /// Trailing window of the logged hit rate.
    pub hit_window: usize,
    /// Trailing episodes used for the stability and result statistics.
    pub stats_tail: usize,
    /// Run the refresher on its own thread instead of inline.
    pub async_refresh: bool,
    /// Write a checkpoint every this many episodes; 0 keeps only the final one.
    pub checkpoint_every: u64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub refresh: RefreshConfig,
    pub curriculum: CurriculumConfig,
    pub agent: AgentConfig,
    pub toy: ToyConfig,
    pub uav: Scenario,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::full_uav()
    }
}

impl RunConfig {
    /// Full-scale battlefield settings.
    pub fn full_uav() -> Self {
        RunConfig {
            mode: ReplayMode::Acer,
            env: EnvKind::Uav,
            episodes: 5000,
            max_steps: 3000,
            warmup_episodes: 200,
            replay_period: 20,
            batch_size: 256,
            temp_pool: 5,
            buffer_capacity: 50_000,
            alpha: 0.6,
            beta_start: 0.4,
            beta_end: 1.0,
            eviction: EvictionPolicy::Stochastic,
            hit_window: 500,
            stats_tail: 1500,
            async_refresh: true,
            checkpoint_every: 500,
            seed: 0,
            output_dir: PathBuf::from("runs/uav"),
            refresh: RefreshConfig::default(),
            curriculum: CurriculumConfig::default(),
            agent: AgentConfig::default(),
            toy: ToyConfig::default(),
            uav: Scenario::default(),
        }
    }

    /// The reduced battlefield for short smoke runs.
    pub fn uav_smoke() -> Self {
        RunConfig {
            episodes: 500,
            max_steps: 300,
            warmup_episodes: 100,
            replay_period: 1,
            batch_size: 64,
            buffer_capacity: 20_000,
            hit_window: 100,
            stats_tail: 100,
            async_refresh: false,
            checkpoint_every: 0,
            output_dir: PathBuf::from("runs/uav_smoke"),
            refresh: RefreshConfig {
                per_tick: 32,
                enabled: true,
            },
            agent: AgentConfig {
                actor_lr: 1e-3,
                critic_lr: 3e-3,
                hidden_dims: vec![64, 64],
                ..AgentConfig::default()
            },
            uav: Scenario::reduced(),
            ..RunConfig::full_uav()
        }
    }

    /// The 2D point-mass task.
    pub fn toy() -> Self {
        RunConfig {
            env: EnvKind::Toy,
            episodes: 300,
            max_steps: 100,
            warmup_episodes: 10,
            replay_period: 1,
            batch_size: 64,
            temp_pool: 5,
            buffer_capacity: 20_000,
            hit_window: 100,
            stats_tail: 100,
            async_refresh: false,
            checkpoint_every: 0,
            output_dir: PathBuf::from("runs/toy"),
            refresh: RefreshConfig {
                per_tick: 32,
                enabled: true,
            },
            curriculum: CurriculumConfig {
                c_init: 1.0,
                c_incr: 0.1,
                update_period: 20,
                k1: 0.5,
                k2: 0.25,
            },
            agent: AgentConfig {
                gamma: 0.95,
                actor_lr: 1e-3,
                critic_lr: 1e-3,
                tau_actor: 0.05,
                tau_critic: 0.05,
                exploration_sigma: 0.2,
                smoothing_sigma: 0.2,
                smoothing_clip: 0.5,
                hidden_dims: vec![64, 64],
                ..AgentConfig::default()
            },
            ..RunConfig::full_uav()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "uav" | "full_uav" => Ok(RunConfig::full_uav()),
            "uav_smoke" => Ok(RunConfig::uav_smoke()),
            "toy" => Ok(RunConfig::toy()),
            other => Err(AcerError::Usage(format!(
                "unknown preset {other:?} (expected uav, uav_smoke or toy)"
            ))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| AcerError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_toml(&text).map_err(|e| match e {
            AcerError::Config(m) => AcerError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AcerError::Config(m));
        if !(self.temp_pool < self.batch_size && self.batch_size <= self.buffer_capacity) {
            return bad(format!(
                "need temp_pool < batch_size <= buffer_capacity (got {} / {} / {})",
                self.temp_pool, self.batch_size, self.buffer_capacity
            ));
        }
        if self.replay_period < 1 {
            return bad("replay_period must be >= 1".into());
        }
        if self.warmup_episodes >= self.episodes {
            return bad("warmup_episodes must be below episodes".into());
        }
        if self.max_steps < 1 || self.hit_window < 1 || self.stats_tail < 1 {
            return bad("max_steps, hit_window and stats_tail must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.beta_start) || !(0.0..=1.0).contains(&self.beta_end) {
            return bad("beta_start and beta_end must lie in [0, 1]".into());
        }
        self.buffer_config().validate()?;
        self.curriculum.validate()?;
        self.agent.td3(1).validate()?;
        match self.env {
            EnvKind::Toy => self.toy.validate(),
            EnvKind::Uav => self.uav.validate(),
        }
    }

    pub fn buffer_config(&self) -> BufferConfig {
        BufferConfig {
            capacity: self.buffer_capacity,
            mode: self.mode,
            alpha: self.alpha,
            temp_pool: self.temp_pool,
            eviction: self.eviction,
        }
    }

    pub fn build_env(&self) -> Result<Box<dyn Environment + Send>> {
        build_env(self.env, &self.toy, &self.uav, Some(self.max_steps))
    }

    /// `beta` for a 1-based episode: `beta_start` until learning begins, then
    /// linear up to `beta_end` at the last episode.
    pub fn beta(&self, episode: u64) -> f64 {
        let first = self.warmup_episodes + 1;
        if episode <= first {
            return self.beta_start;
        }
        if self.episodes <= first {
            return self.beta_end;
        }
        let frac = ((episode - first) as f64 / (self.episodes - first) as f64).min(1.0);
        self.beta_start + (self.beta_end - self.beta_start) * frac
    }
}

pub fn build_env(
    kind: EnvKind,
    toy: &ToyConfig,
    uav: &Scenario,
    max_steps: Option<usize>,
) -> Result<Box<dyn Environment + Send>> {
    Ok(match kind {
        EnvKind::Toy => {
            let mut cfg = toy.clone();
            if let Some(t) = max_steps {
                cfg.max_steps = t;
            }
            Box::new(ToyEnv::new(cfg)?)
        }
        EnvKind::Uav => {
            let mut s = uav.clone();
            if let Some(t) = max_steps {
                s.arena.max_steps = t;
            }
            Box::new(UavEnv::new(s)?)
        }
    })
}

/// Environment description used by `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub env: EnvKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub toy: ToyConfig,
    #[serde(default)]
    pub uav: Scenario,
}

impl ScenarioFile {
    pub fn from_run(cfg: &RunConfig) -> Self {
        ScenarioFile {
            env: cfg.env,
            seed: cfg.seed,
            max_steps: Some(cfg.max_steps),
            toy: cfg.toy.clone(),
            uav: cfg.uav.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| AcerError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn build_env(&self) -> Result<Box<dyn Environment + Send>> {
        build_env(self.env, &self.toy, &self.uav, self.max_steps)
    }
}
