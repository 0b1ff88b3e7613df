//! Reasoning-as-action-abstraction EM: a policy-gradient E-step that learns
//! where to place think latents, and an imitation M-step on the bootstrapped
//! latents.

pub mod advantage;
pub mod config;
pub mod estep;
pub mod mstep;
pub mod rollout;
pub mod run;

pub use advantage::{group_advantages, group_baseline, truncated_advantage, truncated_returns};
pub use config::EmConfig;
pub use estep::{e_step, exact_gradient, exact_objective, group_gradient, UpdateStat};
pub use mstep::{exact_em, expected_counts, m_step, refit_decoder, ExactEmStep};
pub use rollout::{rollout_latents, step_reward, BootstrappedRecord};
pub use run::{run_ra3, IterationMetrics, Ra3Run, RunReport};
