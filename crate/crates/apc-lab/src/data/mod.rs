//! Rollout recording, 10-step chunking, offline dataset construction,
//! bounded FIFO replay, and the acting/learning rate limiter.
//!
//! Chunks store raw state vectors rather than rendered observations: grids
//! are a pure function of state (`Env::render_grid_from_state`), so training
//! code re-renders them on demand and datasets stay compact.

pub mod file;
pub mod replay;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::envs::Env;
use crate::experts::Expert;
use crate::numcore::Matrix;
use crate::policy::GaussianActor;
use crate::seeding::{derive_seed, rng_from};
use crate::{Error, Result};

pub use file::{dataset_from_bytes, dataset_to_bytes};
pub use replay::{GateDecision, RateLimiter, RateLimiterConfig, ReplayBuffer};

/// Chunk length T: every chunk covers exactly this many timesteps.
pub const CHUNK_LEN: usize = 10;

/// Trajectory counts the offline protocol sweeps over.
pub const ALLOWED_TRAJECTORY_COUNTS: [usize; 11] =
    [1, 2, 3, 5, 10, 20, 50, 100, 200, 500, 1000];

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// One recorded timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajStep {
    pub state: Vec<f64>,
    /// Executed (possibly noisy, pre-clip) action.
    pub action: Vec<f64>,
    /// The acting policy's mean at this state; for expert rollouts this is
    /// the regression target μ_E(s).
    pub mean: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// An ordered episode record.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajStep>,
    /// Episode seed passed to `Env::reset`.
    pub seed: u64,
    /// Free-form tag describing the acting policy.
    pub source: String,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn ret(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Roll one episode with `a = mu(s) + sigma * z` (`sigma = 0` gives mean
/// actions), stopping at done/horizon or after `max_steps` when given.
///
/// Action noise comes from a stream derived from the episode seed, so the
/// same `(actor, seed, sigma)` always reproduces the identical trajectory.
pub fn rollout(
    actor: &dyn GaussianActor,
    env: &mut dyn Env,
    seed: u64,
    sigma: f64,
    max_steps: Option<usize>,
    source: &str,
) -> Trajectory {
    assert!(sigma >= 0.0, "rollout: sigma must be >= 0");
    let cap = max_steps.unwrap_or(usize::MAX);
    let mut rng = rng_from(seed, "rollout-act", 0);
    let mut obs = env.reset(seed);
    let mut steps = Vec::new();
    while steps.len() < cap {
        let head = actor.head(&obs);
        let mean = head.mu.clone();
        let action: Vec<f64> = if sigma == 0.0 {
            mean.clone()
        } else {
            mean.iter()
                .map(|&m| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + sigma * z
                })
                .collect()
        };
        let result = env.step(&action);
        steps.push(TrajStep {
            state: obs.state.clone(),
            action,
            mean,
            reward: result.reward,
            done: result.done,
        });
        if result.done {
            break;
        }
        obs = result.obs;
    }
    Trajectory {
        steps,
        seed,
        source: source.to_string(),
    }
}

// ---------------------------------------------------------------------------
// Chunks
// ---------------------------------------------------------------------------

/// Exactly [`CHUNK_LEN`] timesteps of (state, action, expert mean) with a
/// contiguous-prefix validity mask. Rows past `valid_len` are zero padding
/// and must never contribute to losses or augmentation counts.
#[derive(Clone, Debug, PartialEq)]
pub struct Chunk {
    pub states: Matrix,
    pub actions: Matrix,
    pub means: Matrix,
    pub valid_len: usize,
}

impl Chunk {
    pub fn state_dim(&self) -> usize {
        self.states.cols()
    }

    pub fn action_dim(&self) -> usize {
        self.actions.cols()
    }

    /// Panics if the chunk violates its shape/mask invariants.
    pub fn assert_valid(&self) {
        assert_eq!(self.states.rows(), CHUNK_LEN, "chunk states rows");
        assert_eq!(self.actions.rows(), CHUNK_LEN, "chunk actions rows");
        assert_eq!(self.means.rows(), CHUNK_LEN, "chunk means rows");
        assert_eq!(self.actions.cols(), self.means.cols(), "chunk action width");
        assert!(
            self.valid_len >= 1 && self.valid_len <= CHUNK_LEN,
            "chunk valid_len {}",
            self.valid_len
        );
    }
}

/// Split trajectories into non-overlapping 10-step chunks; a final partial
/// window becomes a masked chunk. Chunks never span trajectories.
pub fn chunk_trajectories(trajs: &[Trajectory]) -> Vec<Chunk> {
    let mut chunks = Vec::new();
    for traj in trajs {
        if traj.is_empty() {
            continue;
        }
        let state_dim = traj.steps[0].state.len();
        let action_dim = traj.steps[0].action.len();
        for window in traj.steps.chunks(CHUNK_LEN) {
            let mut states = Matrix::zeros(CHUNK_LEN, state_dim);
            let mut actions = Matrix::zeros(CHUNK_LEN, action_dim);
            let mut means = Matrix::zeros(CHUNK_LEN, action_dim);
            for (t, step) in window.iter().enumerate() {
                states.row_mut(t).copy_from_slice(&step.state);
                actions.row_mut(t).copy_from_slice(&step.action);
                means.row_mut(t).copy_from_slice(&step.mean);
            }
            chunks.push(Chunk {
                states,
                actions,
                means,
                valid_len: window.len(),
            });
        }
    }
    chunks
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Expert rollout noise tiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseTier {
    Deterministic,
    Low,
    Medium,
    High,
}

impl NoiseTier {
    pub const ALL: [NoiseTier; 4] = [
        NoiseTier::Deterministic,
        NoiseTier::Low,
        NoiseTier::Medium,
        NoiseTier::High,
    ];

    pub fn sigma(self) -> f64 {
        match self {
            NoiseTier::Deterministic => 0.0,
            NoiseTier::Low => 0.2,
            NoiseTier::Medium => 0.5,
            NoiseTier::High => 1.0,
        }
    }
}

/// Full trajectories or the short-trajectory study layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetMode {
    Full,
    Short,
}

/// What to record in an offline dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub n_trajectories: usize,
    pub expert_noise: NoiseTier,
    pub mode: DatasetMode,
    /// Timestep cap for the truncated trajectories in short mode;
    /// `None` means 20% of the environment horizon.
    #[serde(default)]
    pub short_length: Option<usize>,
}

impl DatasetSpec {
    pub fn full(n_trajectories: usize, expert_noise: NoiseTier) -> Self {
        DatasetSpec {
            n_trajectories,
            expert_noise,
            mode: DatasetMode::Full,
            short_length: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !ALLOWED_TRAJECTORY_COUNTS.contains(&self.n_trajectories) {
            return Err(Error::Config(format!(
                "DatasetSpec: n_trajectories must be one of {ALLOWED_TRAJECTORY_COUNTS:?}, got {}",
                self.n_trajectories
            )));
        }
        if let Some(len) = self.short_length {
            if len == 0 {
                return Err(Error::Config(
                    "DatasetSpec: short_length must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Frozen chunked expert demonstrations plus per-trajectory diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpertDataset {
    pub spec: DatasetSpec,
    pub env_id: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub chunks: Vec<Chunk>,
    /// Undiscounted return of each source trajectory, in rollout order.
    pub trajectory_returns: Vec<f64>,
}

impl ExpertDataset {
    /// Total valid (unmasked) timesteps across all chunks.
    pub fn valid_steps(&self) -> usize {
        self.chunks.iter().map(|c| c.valid_len).sum()
    }

    /// Hex SHA-256 of the serialized byte stream; identical (spec, seed)
    /// builds hash identically.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(file::dataset_to_bytes(self));
        let out = h.finalize();
        let mut s = String::with_capacity(64);
        for b in out {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::numcore::checkpoint::save_file(path, &file::dataset_to_bytes(self))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        file::dataset_from_bytes(&crate::numcore::checkpoint::load_file(path)?)
    }
}

/// Roll `spec.n_trajectories` expert episodes at the spec's noise tier and
/// chunk them. Short mode keeps trajectory 0 full and truncates the rest to
/// `short_length` (default 20% of the horizon). Never mutates the expert.
///
/// Trajectory seeds derive from `(seed, "dataset-traj", k)`, so datasets are
/// a pure function of `(expert, env, spec, seed)`.
pub fn build_dataset(
    expert: &dyn Expert,
    env: &mut dyn Env,
    spec: &DatasetSpec,
    seed: u64,
) -> Result<ExpertDataset> {
    spec.validate()?;
    let sigma = spec.expert_noise.sigma();
    let short_len = match spec.mode {
        DatasetMode::Full => None,
        DatasetMode::Short => Some(
            spec.short_length
                .unwrap_or_else(|| (env.spec().horizon / 5).max(1)),
        ),
    };
    let mut trajs = Vec::with_capacity(spec.n_trajectories);
    for k in 0..spec.n_trajectories {
        let traj_seed = derive_seed(seed, "dataset-traj", k as u64);
        let cap = if k == 0 { None } else { short_len };
        trajs.push(rollout(expert, env, traj_seed, sigma, cap, "expert"));
    }
    let trajectory_returns = trajs.iter().map(|t| t.ret()).collect();
    let chunks = chunk_trajectories(&trajs);
    Ok(ExpertDataset {
        spec: spec.clone(),
        env_id: env.spec().id.clone(),
        state_dim: env.spec().state_dim,
        action_dim: env.spec().action_dim,
        chunks,
        trajectory_returns,
    })
}
