//! Online settings that embed cloning as a subroutine: mixture-policy
//! DAgger over a rate-limited replay buffer, and kickstarting (actor–critic
//! RL plus a λ-weighted distillation term).

pub mod dagger;
pub mod kickstart;

pub use dagger::{dagger_run, dagger_update, mixture_act, DaggerConfig, DaggerObjective, DaggerRunReport};
pub use kickstart::{kickstart_run, KickstartConfig, KickstartRunReport, LAMBDA_GRID};

use serde::{Deserialize, Serialize};

/// Split a batched head into per-row heads (reference heads for
/// distillation objectives).
pub(crate) fn heads_of(batch: crate::policy::HeadBatch) -> Vec<crate::policy::GaussianHead> {
    (0..batch.mu.rows()).map(|r| batch.head(r)).collect()
}

/// One evaluation on an online learning curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlinePoint {
    pub env_steps: u64,
    pub learner_steps: u64,
    pub eval_mean: f64,
    pub eval_ci95: f64,
}
