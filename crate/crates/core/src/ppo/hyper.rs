use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoHyperparams {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_epsilon: f64,
    pub kl_target: f64,
    pub kl_band: f64,
    pub beta_factor: f64,
    pub beta_init: f64,
    pub epochs: usize,
    pub minibatch: usize,
    /// Transitions gathered per iteration (episodes are never split, so a
    /// buffer may run slightly over).
    pub timesteps: usize,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub max_grad_norm: f64,
}

impl Default for PpoHyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip_epsilon: 0.2,
            kl_target: 0.01,
            kl_band: 1.5,
            beta_factor: 2.0,
            beta_init: 1.0,
            epochs: 10,
            minibatch: 256,
            timesteps: 4096,
            policy_lr: 3e-4,
            value_lr: 1e-3,
            max_grad_norm: 0.5,
        }
    }
}

impl PpoHyperparams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, reason: &str| if ok { Ok(()) } else { Err(Error::config(key, reason)) };
        check(self.gamma > 0.0 && self.gamma <= 1.0, "ppo.gamma", "must lie in (0, 1]")?;
        check((0.0..=1.0).contains(&self.lambda), "ppo.lambda", "must lie in [0, 1]")?;
        check(self.clip_epsilon > 0.0 && self.clip_epsilon.is_finite(), "ppo.clip_epsilon", "must be positive")?;
        check(self.kl_target > 0.0 && self.kl_target.is_finite(), "ppo.kl_target", "must be positive")?;
        check(self.kl_band > 1.0 && self.kl_band.is_finite(), "ppo.kl_band", "must exceed 1")?;
        check(self.beta_factor > 1.0 && self.beta_factor.is_finite(), "ppo.beta_factor", "must exceed 1")?;
        check(self.beta_init > 0.0 && self.beta_init.is_finite(), "ppo.beta_init", "must be positive")?;
        check(self.epochs > 0, "ppo.epochs", "must be at least 1")?;
        check(self.minibatch > 0, "ppo.minibatch", "must be at least 1")?;
        check(self.timesteps > 0, "ppo.timesteps", "must be at least 1")?;
        check(self.policy_lr >= 0.0 && self.policy_lr.is_finite(), "ppo.policy_lr", "must be non-negative")?;
        check(self.value_lr >= 0.0 && self.value_lr.is_finite(), "ppo.value_lr", "must be non-negative")?;
        check(self.max_grad_norm > 0.0, "ppo.max_grad_norm", "must be positive")?;
        Ok(())
    }
}
