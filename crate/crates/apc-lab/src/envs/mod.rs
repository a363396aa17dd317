//! Desk-scale continuous-control environments.
//!
//! Both tasks are deterministic given the reset seed: all stochasticity
//! lives in the initial state draw. Actions are clipped to a symmetric box
//! (clip events are reported per step), rewards are bounded by documented
//! constants, and episodes end at the horizon or, for the point-mass, when
//! the mass leaves the arena.

pub mod lqr;
pub mod obs;
pub mod pointmass;

pub use lqr::{LqrDynamics, LqrEnv};
pub use obs::{Channel, Grid, GridShape, Observation, ObsLayout, Span};
pub use pointmass::PointMassEnv;

use crate::seeding::derive_seed;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Static description of an environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub id: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    /// Symmetric per-dimension action bound: actions clip to [-bound, bound].
    pub action_bound: f64,
    pub layout: ObsLayout,
    /// Documented per-step reward magnitude bound.
    pub reward_bound: f64,
}

/// Result of one environment step.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    /// True if any action coordinate was clipped to the bound.
    pub clipped: bool,
}

pub trait Env {
    fn spec(&self) -> &EnvSpec;

    /// Start a new episode; the initial state is a pure function of `seed`.
    fn reset(&mut self, seed: u64) -> Observation;

    /// Advance one step. Panics if called before `reset` or after `done`
    /// (programmer error).
    fn step(&mut self, action: &[f64]) -> StepResult;

    /// Render the observation grid for an arbitrary state vector, if this
    /// environment has a grid channel. Used to keep grids consistent with
    /// perturbed states.
    fn render_grid_from_state(&self, state: &[f64]) -> Option<Grid>;
}

/// Clip `action` into the box, returning (clipped action, clip flag).
pub(crate) fn clip_action(action: &[f64], bound: f64) -> (Vec<f64>, bool) {
    let mut clipped = false;
    let out = action
        .iter()
        .map(|&a| {
            if a > bound {
                clipped = true;
                bound
            } else if a < -bound {
                clipped = true;
                -bound
            } else {
                a
            }
        })
        .collect();
    (out, clipped)
}

/// Environment constructor by id. Accepts `"lqr2d"` and `"pointmass"`.
pub fn make_env(id: &str) -> Result<Box<dyn Env>> {
    match id {
        "lqr2d" => Ok(Box::new(LqrEnv::default_2d())),
        "pointmass" => Ok(Box::new(PointMassEnv::default_nav())),
        other => Err(Error::Config(format!("unknown environment id {other:?}"))),
    }
}

/// Which evaluation split an instance set belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Validation,
    Test,
}

/// A fixed roster of episode seeds used for evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSet {
    pub split: Split,
    pub seeds: Vec<u64>,
}

/// Validation counters occupy [0, 2^20), test counters [2^20, 2^21), so the
/// two splits can never collide for any master seed.
const TEST_COUNTER_BASE: u64 = 1 << 20;

pub fn make_instance_set(master_seed: u64, split: Split, size: usize) -> InstanceSet {
    assert!(
        (size as u64) < TEST_COUNTER_BASE,
        "instance set too large: {size}"
    );
    let base = match split {
        Split::Validation => 0,
        Split::Test => TEST_COUNTER_BASE,
    };
    let seeds = (0..size as u64)
        .map(|k| derive_seed(master_seed, "instance", base + k))
        .collect();
    InstanceSet { split, seeds }
}
