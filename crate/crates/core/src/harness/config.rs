//! Run configuration and its flat `key = value` text form.
//!
//! ```text
//! # comment
//! env = pendulum
//! agent = acc_tqc
//! critic_hidden = 64, 64
//! calib_interval = auto
//! ```
//!
//! Keys are listed in [`CONFIG_KEYS`]; unknown keys are rejected. Every key
//! has a default, so an empty file is a valid configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::agents::AgentVariant;
use crate::envs::EnvId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvId,
    pub agent: AgentVariant,
    pub seed: u64,
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub critic_updates: usize,
    pub actor_updates: usize,
    pub gamma: f64,
    pub lr: f64,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub n_critics: usize,
    pub n_atoms: usize,
    pub huber_kappa: f64,
    pub critic_hidden: Vec<usize>,
    pub policy_hidden: Vec<usize>,
    pub tau: f64,
    pub init_alpha: f64,
    pub d: f64,
    pub d_max: f64,
    pub calib_lr: f64,
    /// `None` means one episode length.
    pub calib_interval: Option<usize>,
    pub calib_warmup: usize,
    pub calib_batch: usize,
    pub calib_ma_rate: f64,
    pub calib_include_entropy: bool,
    pub calib_timeout_exclusion: usize,
    pub td3_beta_init: f64,
    pub td3_policy_delay: usize,
    pub td3_explore_noise: f64,
    pub td3_target_noise: f64,
    pub td3_noise_clip: f64,
    /// `None` keeps the task's own limit.
    pub max_episode_steps: Option<usize>,
    pub bias_window: usize,
    pub bias_tail: usize,
    pub output_dir: Option<PathBuf>,
    pub checkpoint: bool,
    /// `None` derives the run name from env, agent, updates, d and seed.
    pub name: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvId::Pendulum,
            agent: AgentVariant::AccTqc,
            seed: 0,
            total_steps: 50_000,
            warmup_steps: 5000,
            eval_interval: 1000,
            eval_episodes: 10,
            critic_updates: 1,
            actor_updates: 1,
            gamma: 0.99,
            lr: 3e-4,
            buffer_size: 1_000_000,
            batch_size: 256,
            n_critics: 5,
            n_atoms: 25,
            huber_kappa: 1.0,
            critic_hidden: vec![512, 512, 512],
            policy_hidden: vec![256, 256],
            tau: 0.005,
            init_alpha: 1.0,
            d: 2.5,
            d_max: 5.0,
            calib_lr: 0.1,
            calib_interval: None,
            calib_warmup: 25_000,
            calib_batch: 5000,
            calib_ma_rate: 0.05,
            calib_include_entropy: false,
            calib_timeout_exclusion: 0,
            td3_beta_init: 0.5,
            td3_policy_delay: 2,
            td3_explore_noise: 0.1,
            td3_target_noise: 0.2,
            td3_noise_clip: 0.5,
            max_episode_steps: None,
            bias_window: 1000,
            bias_tail: 100,
            output_dir: None,
            checkpoint: false,
            name: None,
        }
    }
}

/// Every accepted key with a one-line description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("env", "task: pendulum | pointmass"),
    ("agent", "sac | tqc_fixed | acc_tqc | td3 | acc_td3"),
    ("seed", "root random seed"),
    ("total_steps", "environment steps"),
    ("warmup_steps", "initial steps with uniform random actions and no updates"),
    ("eval_interval", "steps between evaluations"),
    ("eval_episodes", "episodes per evaluation"),
    ("critic_updates", "critic gradient steps per environment step"),
    ("actor_updates", "actor gradient steps per environment step"),
    ("gamma", "discount factor"),
    ("lr", "Adam learning rate for all networks"),
    ("buffer_size", "replay capacity"),
    ("batch_size", "minibatch size"),
    ("n_critics", "quantile critic networks"),
    ("n_atoms", "atoms per quantile critic"),
    ("huber_kappa", "Huber threshold of the quantile loss"),
    ("critic_hidden", "comma-separated hidden widths of each critic"),
    ("policy_hidden", "comma-separated hidden widths of the actor"),
    ("tau", "target network averaging rate"),
    ("init_alpha", "initial entropy weight"),
    ("d", "dropped atoms per network (fixed, or initial when calibrated)"),
    ("d_max", "upper bound on calibrated d"),
    ("calib_lr", "calibration step size"),
    ("calib_interval", "minimum steps between calibration updates, or auto for one episode length"),
    ("calib_warmup", "no calibration at or before this many steps"),
    ("calib_batch", "maximum stored returns"),
    ("calib_ma_rate", "moving-average rate of the residual normalizer"),
    ("calib_include_entropy", "add entropy bonuses to observed returns (true | false)"),
    ("calib_timeout_exclusion", "steps dropped from the end of timeout episodes before calibration"),
    ("td3_beta_init", "initial blend weight of calibrated twin critics"),
    ("td3_policy_delay", "critic steps per actor step for twin critics"),
    ("td3_explore_noise", "exploration noise std (normalized actions)"),
    ("td3_target_noise", "target smoothing noise std"),
    ("td3_noise_clip", "target smoothing noise clip"),
    ("max_episode_steps", "episode length limit, or default"),
    ("bias_window", "steps per value-error window"),
    ("bias_tail", "final steps of timeout episodes left out of value errors"),
    ("output_dir", "directory for logs, or none"),
    ("checkpoint", "write final network parameters (true | false)"),
    ("name", "run name, or auto"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse `{value}` for `{key}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_opt<T: FromStr>(key: &str, value: &str, none: &str) -> Result<Option<T>> {
    if value == none {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn show<T: ToString>(v: &Option<T>, none: &str) -> String {
    v.as_ref().map_or_else(|| none.to_string(), T::to_string)
}

impl RunConfig {
    /// Reduced networks and schedules sized for a single desktop core.
    pub fn desk(env: EnvId, agent: AgentVariant, seed: u64) -> Self {
        let (total, calib_warmup) = match env {
            EnvId::Pendulum => (15_000, 6000),
            EnvId::PointMass => (12_000, 5000),
        };
        Self {
            env,
            agent,
            seed,
            total_steps: total,
            warmup_steps: 2000,
            batch_size: 64,
            critic_hidden: vec![64, 64],
            policy_hidden: vec![64, 64],
            lr: 1e-3,
            calib_warmup,
            max_episode_steps: match env {
                EnvId::Pendulum => None,
                EnvId::PointMass => Some(200),
            },
            ..Self::default()
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "env" => self.env = v.parse()?,
            "agent" => self.agent = v.parse()?,
            "seed" => self.seed = parse(key, v)?,
            "total_steps" => self.total_steps = parse(key, v)?,
            "warmup_steps" => self.warmup_steps = parse(key, v)?,
            "eval_interval" => self.eval_interval = parse(key, v)?,
            "eval_episodes" => self.eval_episodes = parse(key, v)?,
            "critic_updates" => self.critic_updates = parse(key, v)?,
            "actor_updates" => self.actor_updates = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "buffer_size" => self.buffer_size = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "n_critics" => self.n_critics = parse(key, v)?,
            "n_atoms" => self.n_atoms = parse(key, v)?,
            "huber_kappa" => self.huber_kappa = parse(key, v)?,
            "critic_hidden" => self.critic_hidden = parse_list(key, v)?,
            "policy_hidden" => self.policy_hidden = parse_list(key, v)?,
            "tau" => self.tau = parse(key, v)?,
            "init_alpha" => self.init_alpha = parse(key, v)?,
            "d" => self.d = parse(key, v)?,
            "d_max" => self.d_max = parse(key, v)?,
            "calib_lr" => self.calib_lr = parse(key, v)?,
            "calib_interval" => self.calib_interval = parse_opt(key, v, "auto")?,
            "calib_warmup" => self.calib_warmup = parse(key, v)?,
            "calib_batch" => self.calib_batch = parse(key, v)?,
            "calib_ma_rate" => self.calib_ma_rate = parse(key, v)?,
            "calib_include_entropy" => self.calib_include_entropy = parse(key, v)?,
            "calib_timeout_exclusion" => self.calib_timeout_exclusion = parse(key, v)?,
            "td3_beta_init" => self.td3_beta_init = parse(key, v)?,
            "td3_policy_delay" => self.td3_policy_delay = parse(key, v)?,
            "td3_explore_noise" => self.td3_explore_noise = parse(key, v)?,
            "td3_target_noise" => self.td3_target_noise = parse(key, v)?,
            "td3_noise_clip" => self.td3_noise_clip = parse(key, v)?,
            "max_episode_steps" => self.max_episode_steps = parse_opt(key, v, "default")?,
            "bias_window" => self.bias_window = parse(key, v)?,
            "bias_tail" => self.bias_tail = parse(key, v)?,
            "output_dir" => self.output_dir = parse_opt(key, v, "none")?,
            "checkpoint" => self.checkpoint = parse(key, v)?,
            "name" => self.name = parse_opt(key, v, "auto")?,
            other => return Err(Error::Config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key {
            "env" => self.env.to_string(),
            "agent" => self.agent.to_string(),
            "seed" => self.seed.to_string(),
            "total_steps" => self.total_steps.to_string(),
            "warmup_steps" => self.warmup_steps.to_string(),
            "eval_interval" => self.eval_interval.to_string(),
            "eval_episodes" => self.eval_episodes.to_string(),
            "critic_updates" => self.critic_updates.to_string(),
            "actor_updates" => self.actor_updates.to_string(),
            "gamma" => self.gamma.to_string(),
            "lr" => self.lr.to_string(),
            "buffer_size" => self.buffer_size.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "n_critics" => self.n_critics.to_string(),
            "n_atoms" => self.n_atoms.to_string(),
            "huber_kappa" => self.huber_kappa.to_string(),
            "critic_hidden" => join(&self.critic_hidden),
            "policy_hidden" => join(&self.policy_hidden),
            "tau" => self.tau.to_string(),
            "init_alpha" => self.init_alpha.to_string(),
            "d" => self.d.to_string(),
            "d_max" => self.d_max.to_string(),
            "calib_lr" => self.calib_lr.to_string(),
            "calib_interval" => show(&self.calib_interval, "auto"),
            "calib_warmup" => self.calib_warmup.to_string(),
            "calib_batch" => self.calib_batch.to_string(),
            "calib_ma_rate" => self.calib_ma_rate.to_string(),
            "calib_include_entropy" => self.calib_include_entropy.to_string(),
            "calib_timeout_exclusion" => self.calib_timeout_exclusion.to_string(),
            "td3_beta_init" => self.td3_beta_init.to_string(),
            "td3_policy_delay" => self.td3_policy_delay.to_string(),
            "td3_explore_noise" => self.td3_explore_noise.to_string(),
            "td3_target_noise" => self.td3_target_noise.to_string(),
            "td3_noise_clip" => self.td3_noise_clip.to_string(),
            "max_episode_steps" => show(&self.max_episode_steps, "default"),
            "bias_window" => self.bias_window.to_string(),
            "bias_tail" => self.bias_tail.to_string(),
            "output_dir" => show(&self.output_dir.as_ref().map(|p| p.display().to_string()), "none"),
            "checkpoint" => self.checkpoint.to_string(),
            "name" => show(&self.name, "auto"),
            other => return Err(Error::Config(format!("unknown configuration key `{other}`"))),
        })
    }

    /// Applies a `key = value` document on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, _) in CONFIG_KEYS {
            writeln!(out, "{k} = {}", self.get(k).expect("listed key")).unwrap();
        }
        out
    }

    /// Run name used for output files.
    pub fn run_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        let d = match self.agent {
            AgentVariant::TqcFixed => format!("-d{}", self.d),
            _ => String::new(),
        };
        format!("{}-{}-q{}{d}-s{}", self.env, self.agent, self.critic_updates, self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.eval_interval == 0 || self.eval_episodes == 0 {
            return bad("evaluation interval and episodes must be positive");
        }
        if self.critic_updates == 0 || self.batch_size == 0 || self.buffer_size == 0 {
            return bad("critic updates, batch size and buffer size must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.lr > 0.0) || !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("lr must be positive and tau in (0, 1]");
        }
        if !(0.0..=self.d_max).contains(&self.d) {
            return bad("d must lie in [0, d_max]");
        }
        if self.agent != AgentVariant::Sac && !self.agent.is_twin() {
            let drop = crate::critic::dropped_count(self.d_max, self.n_critics);
            if drop >= self.n_critics * self.n_atoms {
                return bad("d_max would drop every pooled atom");
            }
        }
        if !(0.0..=1.0).contains(&self.td3_beta_init) {
            return bad("td3_beta_init must lie in [0, 1]");
        }
        if self.bias_window == 0 {
            return bad("bias_window must be positive");
        }
        if self.calib_interval == Some(0) {
            return bad("calib_interval must be positive");
        }
        if self.name.as_deref().is_some_and(|n| n.is_empty() || n.contains(['/', '\\'])) {
            return bad("name must be a plain file stem");
        }
        Ok(())
    }
}
