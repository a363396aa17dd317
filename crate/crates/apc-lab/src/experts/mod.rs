//! Expert policies that can be queried at arbitrary states, including
//! synthetic perturbed states never visited in rollouts.
//!
//! Two kinds exist: the analytic LQR expert (optimal gain from the Riccati
//! solver, constant native sigma) and trained actor–critic experts for
//! PointMass-Nav, checkpointed at quality tiers (Low/Medium/High fractions of
//! converged performance) for the kickstarting study. Experts are immutable
//! after construction and safe to query concurrently.

pub mod actor_critic;
pub mod riccati;
pub mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envs::lqr::LqrDynamics;
use crate::envs::obs::feature_matrix;
use crate::envs::Observation;
use crate::numcore::{checkpoint, Matrix};
use crate::policy::{
    softplus_inv, GaussianActor, GaussianHead, HeadBatch, PolicyNet, SIGMA_MIN,
};
use crate::{Error, Result};

pub use actor_critic::{A2cConfig, A2cLearner, A2cStepStats, CriticNet};
pub use riccati::{closed_loop_radius, riccati_solve, value_iteration_oracle};
pub use train::{train_expert, ExpertTier, TierTrainConfig, TrainedTiers};

/// A Gaussian policy that additionally supports batched queries at raw
/// environment states (one state per row). Batch queries are what the
/// augmentation relabeling step uses, so they must be cheap.
pub trait Expert: GaussianActor + Sync {
    /// Gaussian heads at a batch of raw states.
    fn head_batch(&self, states: &Matrix) -> HeadBatch;

    /// Mean actions at a batch of raw states (one row per state).
    fn mean_batch(&self, states: &Matrix) -> Matrix {
        self.head_batch(states).mu
    }
}

// ---------------------------------------------------------------------------
// Analytic LQR expert
// ---------------------------------------------------------------------------

/// Optimal linear-feedback expert `μ_E(s) = −K·s` with a constant native
/// sigma, plus the value matrix `P` predicting episode cost `sᵀPs`.
#[derive(Clone, Debug)]
pub struct LqrExpert {
    k_gain: Matrix,
    p: Matrix,
    sigma: f64,
    raw_sigma: f64,
}

impl LqrExpert {
    /// Native standard deviation when none is configured.
    pub const DEFAULT_SIGMA: f64 = 0.2;

    pub fn new(dynamics: &LqrDynamics, sigma: f64) -> Result<Self> {
        dynamics.validate()?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "LqrExpert: native sigma must be positive and finite, got {sigma}"
            )));
        }
        let (p, k_gain) = riccati::riccati_solve(
            &dynamics.a,
            &dynamics.b,
            &dynamics.q,
            &dynamics.r,
        )?;
        let radius = riccati::closed_loop_radius(&dynamics.a, &dynamics.b, &k_gain);
        if radius >= 1.0 {
            return Err(Error::NoConvergence(format!(
                "LqrExpert: closed loop is not stable (spectral radius {radius})"
            )));
        }
        Ok(LqrExpert {
            k_gain,
            p,
            sigma,
            raw_sigma: softplus_inv(sigma - SIGMA_MIN),
        })
    }

    /// The expert for the pinned desk LQR instance at the default sigma.
    pub fn default_2d() -> Self {
        let env = crate::envs::lqr::LqrEnv::default_2d();
        LqrExpert::new(env.dynamics(), Self::DEFAULT_SIGMA)
            .expect("default LQR instance is stabilizable")
    }

    pub fn k_gain(&self) -> &Matrix {
        &self.k_gain
    }

    /// Solution of the discrete algebraic Riccati equation.
    pub fn value_matrix(&self) -> &Matrix {
        &self.p
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Infinite-horizon return of the optimal controller from `s0`
    /// (reward = negative quadratic cost, so this is `−s0ᵀPs0`).
    pub fn predicted_return(&self, s0: &[f64]) -> f64 {
        -self.p.quad_form(s0)
    }

    /// `μ_E(s) = −K·s`.
    pub fn mean(&self, state: &[f64]) -> Vec<f64> {
        self.k_gain.matvec(state).iter().map(|v| -v).collect()
    }
}

impl GaussianActor for LqrExpert {
    fn action_dim(&self) -> usize {
        self.k_gain.rows()
    }

    fn head(&self, obs: &Observation) -> GaussianHead {
        let m = self.action_dim();
        GaussianHead {
            mu: self.mean(&obs.state),
            raw_sigma: vec![self.raw_sigma; m],
            sigma: vec![self.sigma; m],
        }
    }
}

impl Expert for LqrExpert {
    fn head_batch(&self, states: &Matrix) -> HeadBatch {
        let batch = states.rows();
        let m = self.action_dim();
        // μ = −S Kᵀ, one row per state.
        let mu = states.matmul_tb(&self.k_gain).scale(-1.0);
        let mut raw = Matrix::zeros(batch, m);
        raw.data_mut().fill(self.raw_sigma);
        let mut sigma = Matrix::zeros(batch, m);
        sigma.data_mut().fill(self.sigma);
        HeadBatch { mu, raw, sigma }
    }
}

// ---------------------------------------------------------------------------
// Trained experts and tier checkpoints
// ---------------------------------------------------------------------------

/// Quality tier of a trained expert checkpoint, as a fraction of the
/// converged expert's performance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Low,
    Medium,
    High,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Low, Tier::Medium, Tier::High];

    /// Target fraction of converged performance on the normalized scale.
    pub fn target_fraction(self) -> f64 {
        match self {
            Tier::Low => 0.25,
            Tier::Medium => 0.50,
            Tier::High => 1.00,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tier::Low => "low",
            Tier::Medium => "medium",
            Tier::High => "high",
        }
    }
}

/// Provenance metadata stored alongside a trained expert's parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertMeta {
    pub env_id: String,
    /// Hash of the environment spec this expert was trained on.
    pub env_hash: String,
    pub tier: Tier,
    /// Mean deterministic validation return at snapshot time.
    pub measured_return: f64,
    /// Expert-normalized score (0 = null policy, 1 = converged expert).
    pub measured_score: f64,
    /// Learner steps completed when the snapshot was taken.
    pub learner_steps: u64,
    /// Environment steps consumed when the snapshot was taken.
    pub env_steps: u64,
}

/// A trained Gaussian policy acting as an expert: queryable at arbitrary raw
/// states through its observation channels (never the grid).
#[derive(Clone, Debug)]
pub struct TrainedExpert {
    net: PolicyNet,
    meta: ExpertMeta,
}

impl TrainedExpert {
    pub fn new(net: PolicyNet, meta: ExpertMeta) -> Result<Self> {
        if net.obs_spec().uses_grid() {
            return Err(Error::InvalidArgument(
                "TrainedExpert: experts consume state channels only, never grids".into(),
            ));
        }
        Ok(TrainedExpert { net, meta })
    }

    pub fn net(&self) -> &PolicyNet {
        &self.net
    }

    pub fn meta(&self) -> &ExpertMeta {
        &self.meta
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::json!({
            "policy": self.net.structural_meta(),
            "expert": self.meta,
        });
        checkpoint::encode("expert", &meta, &self.net.flat_params())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let d = checkpoint::decode(bytes)?;
        if d.kind != "expert" {
            return Err(Error::Format(format!(
                "expected kind \"expert\", got {:?}",
                d.kind
            )));
        }
        let policy_meta = d
            .meta
            .get("policy")
            .ok_or_else(|| Error::Format("expert checkpoint missing \"policy\" meta".into()))?;
        let expert_meta = d
            .meta
            .get("expert")
            .ok_or_else(|| Error::Format("expert checkpoint missing \"expert\" meta".into()))?;
        let net = PolicyNet::from_decoded(policy_meta, &d.params)?;
        let meta: ExpertMeta = serde_json::from_value(expert_meta.clone())
            .map_err(|e| Error::Format(format!("expert meta: {e}")))?;
        TrainedExpert::new(net, meta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&checkpoint::load_file(path)?)
    }
}

impl GaussianActor for TrainedExpert {
    fn action_dim(&self) -> usize {
        self.net.action_dim()
    }

    fn head(&self, obs: &Observation) -> GaussianHead {
        self.net.head(obs)
    }
}

impl Expert for TrainedExpert {
    fn head_batch(&self, states: &Matrix) -> HeadBatch {
        let spec = self.net.obs_spec();
        let feats = feature_matrix(states, &spec.layout, &spec.feature_channels());
        let (heads, _) = self.net.forward_features(&feats, None);
        heads
    }
}
