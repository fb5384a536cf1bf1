use serde::{Deserialize, Serialize};

use crate::nn::AdamConfig;
use crate::{Error, Result};

/// Instance noise added to discriminator inputs. The standard deviation
/// decays linearly from `sigma0` to zero over the first `anneal_fraction`
/// of training; every sample is clamped to `[-clamp, clamp]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceNoiseConfig {
    pub sigma0: f32,
    pub clamp: f32,
    pub anneal_fraction: f32,
}

impl Default for InstanceNoiseConfig {
    fn default() -> Self {
        Self {
            sigma0: 0.3,
            clamp: 0.3,
            anneal_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ablations {
    pub use_aux_generator: bool,
    pub use_q_weight: bool,
}

impl Default for Ablations {
    fn default() -> Self {
        Self {
            use_aux_generator: true,
            use_q_weight: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub gamma: f32,
    pub tau: f32,
    /// Divides the value term in the policy loss.
    pub w: f32,
    pub learning_rate: f32,
    pub q_hidden: Vec<usize>,
    pub policy_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub aux_hidden: Vec<usize>,
    pub aux_noise_dim: usize,
    pub disc_steps_per_gen_step: usize,
    pub instance_noise: InstanceNoiseConfig,
    pub batch_size: usize,
    pub total_steps: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub log_std_min: f32,
    pub log_std_max: f32,
    /// L2 penalty on the policy's pre-tanh mean and log-std. Keeps the mean
    /// out of the flat tails of tanh, where gradients vanish; 0 disables it.
    pub policy_reg: f32,
    pub ablations: Ablations,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self::maze()
    }
}

impl AgentConfig {
    /// Full-size networks with the sparse-reward value weight.
    pub fn maze() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            w: 0.025,
            learning_rate: 3e-4,
            q_hidden: vec![256, 256, 256],
            policy_hidden: vec![256, 256, 256, 256],
            disc_hidden: vec![750],
            aux_hidden: vec![750],
            aux_noise_dim: 8,
            disc_steps_per_gen_step: 5,
            instance_noise: InstanceNoiseConfig::default(),
            batch_size: 256,
            total_steps: 100_000,
            eval_interval: 5_000,
            eval_episodes: 20,
            log_std_min: -5.0,
            log_std_max: 2.0,
            policy_reg: 1e-3,
            ablations: Ablations::default(),
        }
    }

    /// Same as [`maze`](Self::maze) with the dense-reward value weight.
    pub fn dense() -> Self {
        Self { w: 1.0, ..Self::maze() }
    }

    /// Small networks for single-core runs on the toy mazes. The
    /// discriminator keeps a wide layer: narrower ones cannot separate
    /// actions finely enough once the instance noise is gone.
    pub fn toy() -> Self {
        Self {
            w: 1.0,
            q_hidden: vec![64, 64],
            policy_hidden: vec![64, 64],
            disc_hidden: vec![256],
            aux_hidden: vec![256],
            batch_size: 128,
            total_steps: 30_000,
            eval_interval: 3_000,
            ..Self::maze()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "maze" => Ok(Self::maze()),
            "dense" => Ok(Self::dense()),
            "toy" => Ok(Self::toy()),
            other => Err(Error::Contract(format!("unknown preset `{other}`"))),
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Contract(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail("gamma must be in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail("tau must be in (0, 1]");
        }
        if !(self.w > 0.0) || !self.w.is_finite() {
            return fail("w must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        for (name, layers) in [
            ("q_hidden", &self.q_hidden),
            ("policy_hidden", &self.policy_hidden),
            ("disc_hidden", &self.disc_hidden),
            ("aux_hidden", &self.aux_hidden),
        ] {
            if layers.is_empty() || layers.contains(&0) {
                return fail(&format!("{name} must be a non-empty list of positive sizes"));
            }
        }
        if self.aux_noise_dim == 0 || self.batch_size == 0 || self.disc_steps_per_gen_step == 0 {
            return fail("aux_noise_dim, batch_size and disc_steps_per_gen_step must be positive");
        }
        if self.eval_interval == 0 || self.eval_episodes == 0 {
            return fail("eval_interval and eval_episodes must be positive");
        }
        if !(self.policy_reg >= 0.0) || !self.policy_reg.is_finite() {
            return fail("policy_reg must be non-negative");
        }
        if self.log_std_min >= self.log_std_max {
            return fail("log_std_min must be below log_std_max");
        }
        let n = &self.instance_noise;
        if !(n.sigma0 >= 0.0 && n.clamp >= 0.0 && n.anneal_fraction > 0.0) {
            return fail("instance noise parameters must be non-negative");
        }
        Ok(())
    }
}

/// Linear decay of the instance-noise scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceNoiseSchedule {
    pub sigma0: f32,
    pub clamp: f32,
    pub anneal_steps: usize,
}

impl InstanceNoiseSchedule {
    pub fn new(cfg: &InstanceNoiseConfig, total_steps: usize) -> Self {
        Self {
            sigma0: cfg.sigma0,
            clamp: cfg.clamp,
            anneal_steps: ((total_steps as f32 * cfg.anneal_fraction) as usize).max(1),
        }
    }

    pub fn sigma(&self, step: usize) -> f32 {
        self.sigma0 * (1.0 - step as f32 / self.anneal_steps as f32).max(0.0)
    }
}
