use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Hyperparameters of the EM loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmConfig {
    /// Reward penalty per think latent.
    pub penalty_c: f64,
    /// Latent rollouts per expert record.
    pub group_size: usize,
    pub temperature: f64,
    /// Steps of reward credited to each latent.
    pub truncation_window: usize,
    /// Initial E-step updates run without the penalty.
    pub warmup_updates: usize,
    pub entropy_coef: f64,
    /// Gradient updates per E-step.
    pub e_step_updates: usize,
    /// Latent chains sampled per record in the M-step.
    pub m_step_updates: usize,
    /// Records per E-step update.
    pub batch_size: usize,
    /// `[e, m]`: the E-step ascent rate and the M-step interpolation weight
    /// toward the refitted decoder (1 replaces it outright).
    pub learning_rates: [f64; 2],
    pub max_latent_len: usize,
    /// Additive smoothing for the M-step fit.
    pub smoothing: f64,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            penalty_c: 0.05,
            group_size: 3,
            temperature: 1.0,
            truncation_window: 5,
            warmup_updates: 10,
            entropy_coef: 0.001,
            e_step_updates: 40,
            m_step_updates: 360,
            batch_size: 16,
            learning_rates: [1.0, 1.0],
            max_latent_len: 16,
            smoothing: 0.1,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return invalid("group_size must be at least 2");
        }
        if self.truncation_window == 0 {
            return invalid("truncation_window must be at least 1");
        }
        if !(self.penalty_c >= 0.0) || !(self.entropy_coef >= 0.0) || !(self.smoothing >= 0.0) {
            return invalid("penalty_c, entropy_coef and smoothing must be nonnegative");
        }
        if !(self.temperature > 0.0) {
            return invalid("temperature must be positive");
        }
        if self.learning_rates.iter().any(|r| !(*r > 0.0)) || self.learning_rates[1] > 1.0 {
            return invalid("learning rates must be positive and the M rate at most 1");
        }
        if self.m_step_updates == 0 || self.batch_size == 0 || self.max_latent_len == 0 {
            return invalid("m_step_updates, batch_size and max_latent_len must be positive");
        }
        Ok(())
    }
}
