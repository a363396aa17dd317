//! Offline policy cloning: behavior cloning, naive augmentation, and
//! augmented cloning with expert relabeling, plus optional grid-shift image
//! augmentation and an early-stopping training loop.
//!
//! All three methods share one loss path. The minibatch objective is
//!
//! ```text
//! L = -mean_i [ log pi(a_i | s_i) + (1/M) sum_j log pi(a'_ij | s'_ij) ]
//! ```
//!
//! with `s'_ij = s_i + ds_ij`, `ds_ij ~ N(0, sigma_s^2 I)` drawn
//! independently per (i, j) on the designated state channels, and targets
//! `a'_ij = mu_E(s'_ij)` when relabeling (augmented cloning) or `a'_ij =
//! a_i` when not (naive augmentation). Plain behavior cloning keeps only the
//! first term. With `sigma_s = 0` and relabeling, every augmented term
//! equals its clean term, so the full loss and gradient are exactly twice
//! behavior cloning's (the degenerate-perturbation identity the tests pin).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bench::eval::{evaluate, EvalMode, EvalReport};
use crate::data::{Chunk, ExpertDataset};
use crate::envs::{Channel, Env, Grid, InstanceSet, ObsLayout, Observation};
use crate::experts::Expert;
use crate::numcore::{AdamConfig, AdamState, Matrix};
use crate::policy::{dlog_prob, log_prob, GaussianActor, PolicyNet};
use crate::seeding::rng_from;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// The three offline cloning methods. Image variants are expressed through
/// the student's observation spec (grid channel present) plus
/// [`AugmentationSpec::grid_shift`], not through extra enum cases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloneMethod {
    Bc,
    NaiveAbc,
    Apc,
}

impl CloneMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            CloneMethod::Bc => "bc",
            CloneMethod::NaiveAbc => "naive_abc",
            CloneMethod::Apc => "apc",
        }
    }

    /// Whether augmented targets are relabeled by the expert.
    pub fn relabels(&self) -> bool {
        matches!(self, CloneMethod::Apc)
    }
}

/// State-perturbation and image-augmentation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationSpec {
    /// Std of the Gaussian state perturbation, applied i.i.d. per designated
    /// coordinate.
    pub sigma_s: f64,
    /// Augmented samples per state.
    pub m: usize,
    /// Relabel augmented targets with the expert mean (false keeps the
    /// original action: naive augmentation).
    pub relabel: bool,
    /// Max grid shift in cells for the student's image input; `None`
    /// disables image augmentation.
    pub grid_shift: Option<usize>,
    /// Which state-derived channels receive Gaussian noise. The grid channel
    /// is never perturbed directly; it is re-rendered from the perturbed
    /// state when the environment supports that.
    pub perturb_channels: Vec<Channel>,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec {
            sigma_s: 0.1,
            m: 10,
            relabel: true,
            grid_shift: None,
            perturb_channels: vec![Channel::State],
        }
    }
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.sigma_s.is_finite() || self.sigma_s < 0.0 {
            return Err(Error::Config(format!(
                "sigma_s must be finite and >= 0, got {}",
                self.sigma_s
            )));
        }
        if self.m == 0 {
            return Err(Error::Config("augmented sample count m must be >= 1".into()));
        }
        if self.perturb_channels.is_empty() {
            return Err(Error::Config("perturb_channels must not be empty".into()));
        }
        if self.perturb_channels.contains(&Channel::Grid) {
            return Err(Error::Config(
                "the grid channel cannot receive Gaussian state noise".into(),
            ));
        }
        Ok(())
    }
}

/// Offline training-loop settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Adam learning rate alpha.
    pub learning_rate: f64,
    /// Minibatch size in chunks (L).
    pub batch_chunks: usize,
    /// Max gradient iterations (K).
    pub max_iters: usize,
    /// Evaluate on the validation set every this many iterations.
    pub eval_period: usize,
    /// Stop after this many consecutive non-improving evaluations.
    pub patience: usize,
    /// Student action noise used for validation and test evaluation.
    pub validation_noise: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_chunks: 64,
            max_iters: 50_000,
            eval_period: 500,
            patience: 10,
            validation_noise: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_chunks == 0 || self.max_iters == 0 || self.eval_period == 0 || self.patience == 0
        {
            return Err(Error::Config(
                "batch_chunks, max_iters, eval_period, patience must be positive".into(),
            ));
        }
        if !(self.validation_noise >= 0.0) || !self.validation_noise.is_finite() {
            return Err(Error::Config("validation_noise must be >= 0".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Perturbation
// ---------------------------------------------------------------------------

/// Sorted, deduplicated state indices covered by the designated channels.
pub(crate) fn perturb_indices(layout: &ObsLayout, channels: &[Channel]) -> Result<Vec<usize>> {
    let mut mask = vec![false; layout.state_dim];
    for c in channels {
        match c {
            Channel::State => mask.iter_mut().for_each(|m| *m = true),
            Channel::Common => mask[layout.common.start..layout.common.end]
                .iter_mut()
                .for_each(|m| *m = true),
            Channel::Privileged => mask[layout.privileged.start..layout.privileged.end]
                .iter_mut()
                .for_each(|m| *m = true),
            Channel::Grid => {
                return Err(Error::InvalidArgument(
                    "grid channel cannot be perturbed".into(),
                ))
            }
        }
    }
    let idx: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect();
    if idx.is_empty() {
        return Err(Error::InvalidArgument(
            "designated perturbation channels cover no coordinates".into(),
        ));
    }
    Ok(idx)
}

/// Perturb one observation: `s' = s + ds` on the designated channels, grid
/// re-rendered from the perturbed state when the environment supports it
/// (else carried over unchanged). `sigma_s = 0` returns a bit-exact copy.
pub fn perturb_state(
    obs: &Observation,
    layout: &ObsLayout,
    channels: &[Channel],
    sigma_s: f64,
    env: &dyn Env,
    rng: &mut impl Rng,
) -> Result<Observation> {
    if !sigma_s.is_finite() || sigma_s < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "sigma_s must be finite and >= 0, got {sigma_s}"
        )));
    }
    if sigma_s == 0.0 {
        return Ok(obs.clone());
    }
    let idx = perturb_indices(layout, channels)?;
    let mut state = obs.state.clone();
    for &i in &idx {
        let z: f64 = rng.sample(StandardNormal);
        state[i] += sigma_s * z;
    }
    let grid = if obs.grid.is_some() {
        env.render_grid_from_state(&state).or_else(|| obs.grid.clone())
    } else {
        None
    };
    Ok(Observation { state, grid })
}

/// Perturb every row of a state batch on the given coordinate indices,
/// drawing noise in row-major (row, index) order.
pub(crate) fn perturb_states_batch(
    states: &Matrix,
    idx: &[usize],
    sigma_s: f64,
    rng: &mut impl Rng,
) -> Matrix {
    let mut out = states.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for &i in idx {
            let z: f64 = rng.sample(StandardNormal);
            row[i] += sigma_s * z;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Grid shift augmentation
// ---------------------------------------------------------------------------

/// Translate grid content by (dr, dc), zero-filling vacated cells.
fn shift_grid(g: &Grid, dr: i64, dc: i64) -> Grid {
    let h = g.shape.h as i64;
    let w = g.shape.w as i64;
    let mut out = Grid::zeros(g.shape);
    for r in 0..h {
        for c in 0..w {
            let sr = r - dr;
            let sc = c - dc;
            if (0..h).contains(&sr) && (0..w).contains(&sc) {
                out.set(r as usize, c as usize, g.get(sr as usize, sc as usize));
            }
        }
    }
    out
}

/// Shift the grid by a uniform lattice offset in [-max_shift, max_shift]^2
/// (row offset drawn first), zero-filling vacated cells. `max_shift = 0` is
/// the identity.
pub fn grid_random_shift(g: &Grid, max_shift: usize, rng: &mut impl Rng) -> Grid {
    assert!(
        2 * max_shift < g.shape.h.min(g.shape.w),
        "max_shift {} too large for {}x{} grid",
        max_shift,
        g.shape.h,
        g.shape.w
    );
    if max_shift == 0 {
        return g.clone();
    }
    let k = max_shift as i64;
    let dr = rng.gen_range(-k..=k);
    let dc = rng.gen_range(-k..=k);
    shift_grid(g, dr, dc)
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Weighted negative log-likelihood of per-row targets under the policy:
/// `loss = sum_r w_r * (-log pi(target_r | obs_r))`, gradient over all
/// policy parameters.
pub(crate) fn weighted_nll(
    policy: &PolicyNet,
    obs: &[&Observation],
    targets: &Matrix,
    weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let n = obs.len();
    assert_eq!(targets.rows(), n, "weighted_nll: target rows");
    assert_eq!(weights.len(), n, "weighted_nll: weight count");
    let (heads, tape) = policy.forward_obs(obs);
    let action_dim = targets.cols();
    let mut loss = 0.0;
    let mut dmu = Matrix::zeros(n, action_dim);
    let mut dsigma = Matrix::zeros(n, action_dim);
    for r in 0..n {
        let head = heads.head(r);
        let target = targets.row(r);
        loss -= weights[r] * log_prob(&head, target);
        let (dl_mu, dl_sigma) = dlog_prob(&head, target);
        let dmu_r = dmu.row_mut(r);
        for k in 0..action_dim {
            dmu_r[k] = -weights[r] * dl_mu[k];
        }
        let dsigma_r = dsigma.row_mut(r);
        for k in 0..action_dim {
            dsigma_r[k] = -weights[r] * dl_sigma[k];
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("cloning loss".into()));
    }
    let grad = policy.backward(&tape, &dmu, &dsigma);
    Ok((loss, grad))
}

/// Weighted sum of analytic cross-entropies `H[p_r || q_r]` between fixed
/// reference heads and the policy's heads at the paired observations, with
/// the gradient flowing only into the policy. Each term is checked against
/// the Gibbs lower bound `H(p, q) >= H(p)`; a violation is a numerics bug.
pub(crate) fn weighted_ce(
    policy: &PolicyNet,
    obs: &[&Observation],
    refs: &[crate::policy::GaussianHead],
    weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    use crate::policy::{cross_entropy, dcross_entropy_dq, entropy};
    let n = obs.len();
    assert_eq!(refs.len(), n, "weighted_ce: reference head count");
    assert_eq!(weights.len(), n, "weighted_ce: weight count");
    let (heads, tape) = policy.forward_obs(obs);
    let action_dim = policy.action_dim();
    let mut loss = 0.0;
    let mut dmu = Matrix::zeros(n, action_dim);
    let mut dsigma = Matrix::zeros(n, action_dim);
    for r in 0..n {
        let q = heads.head(r);
        let p = &refs[r];
        let ce = cross_entropy(p, &q);
        assert!(
            ce >= entropy(p) - 1e-9,
            "Gibbs bound violated at row {r}: H(p,q)={ce} < H(p)={}",
            entropy(p)
        );
        loss += weights[r] * ce;
        let (dce_mu, dce_sigma) = dcross_entropy_dq(p, &q);
        let dmu_r = dmu.row_mut(r);
        let dsigma_r = dsigma.row_mut(r);
        for k in 0..action_dim {
            dmu_r[k] = weights[r] * dce_mu[k];
            dsigma_r[k] = weights[r] * dce_sigma[k];
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("cross-entropy loss".into()));
    }
    let grad = policy.backward(&tape, &dmu, &dsigma);
    Ok((loss, grad))
}

/// Behavior-cloning loss: mean negative log-likelihood of the targets.
pub fn bc_loss(
    policy: &PolicyNet,
    obs: &[&Observation],
    targets: &Matrix,
) -> Result<(f64, Vec<f64>)> {
    if obs.is_empty() {
        return Err(Error::InvalidArgument("bc_loss: empty batch".into()));
    }
    let w = vec![1.0 / obs.len() as f64; obs.len()];
    weighted_nll(policy, obs, targets, &w)
}

/// Gather the valid rows of a chunk batch into (states, targets) matrices.
/// Masked padding rows are dropped here, so they contribute exactly zero.
pub(crate) fn flatten_valid(batch: &[&Chunk]) -> (Matrix, Matrix) {
    let total: usize = batch.iter().map(|c| c.valid_len).sum();
    let (sd, ad) = (batch[0].state_dim(), batch[0].action_dim());
    let mut states = Matrix::zeros(total, sd);
    let mut targets = Matrix::zeros(total, ad);
    let mut r = 0;
    for chunk in batch {
        for t in 0..chunk.valid_len {
            states.row_mut(r).copy_from_slice(chunk.states.row(t));
            targets.row_mut(r).copy_from_slice(chunk.means.row(t));
            r += 1;
        }
    }
    (states, targets)
}

/// Build the student observation for one raw state, rendering (and
/// optionally shifting) the grid only when the student consumes one.
pub(crate) fn student_obs(
    uses_grid: bool,
    env: &dyn Env,
    state: Vec<f64>,
    grid_shift: Option<usize>,
    rng: &mut impl Rng,
) -> Result<Observation> {
    let grid = if uses_grid {
        let g = env.render_grid_from_state(&state).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "student consumes a grid but environment {:?} cannot render one",
                env.spec().id
            ))
        })?;
        Some(match grid_shift {
            Some(k) if k > 0 => grid_random_shift(&g, k, rng),
            _ => g,
        })
    } else {
        None
    };
    Ok(Observation { state, grid })
}

/// The shared minibatch objective for augmented and naive cloning.
///
/// Row layout is the clean block followed by M augmented blocks; noise is
/// drawn per (state, j) pair, independently across the batch. Augmentation
/// happens here, per minibatch — the stored dataset is never touched.
pub fn apc_minibatch_loss(
    policy: &PolicyNet,
    expert: &dyn Expert,
    batch: &[&Chunk],
    aug: &AugmentationSpec,
    env: &dyn Env,
    rng: &mut impl Rng,
) -> Result<(f64, Vec<f64>)> {
    aug.validate()?;
    if batch.is_empty() {
        return Err(Error::InvalidArgument("apc_minibatch_loss: empty batch".into()));
    }
    let (states, clean_targets) = flatten_valid(batch);
    let n = states.rows();
    let m = aug.m;
    let action_dim = clean_targets.cols();
    let uses_grid = policy.obs_spec().uses_grid();
    let idx = if aug.sigma_s > 0.0 {
        Some(perturb_indices(&env.spec().layout, &aug.perturb_channels)?)
    } else {
        None
    };

    let mut all_obs: Vec<Observation> = Vec::with_capacity(n * (1 + m));
    let mut targets = Matrix::zeros(n * (1 + m), action_dim);
    for r in 0..n {
        all_obs.push(student_obs(uses_grid, env, states.row(r).to_vec(), aug.grid_shift, rng)?);
        targets.row_mut(r).copy_from_slice(clean_targets.row(r));
    }
    for j in 0..m {
        let s_aug = match &idx {
            Some(idx) => perturb_states_batch(&states, idx, aug.sigma_s, rng),
            None => states.clone(),
        };
        let t_aug = if aug.relabel {
            expert.mean_batch(&s_aug)
        } else {
            clean_targets.clone()
        };
        for r in 0..n {
            all_obs.push(student_obs(uses_grid, env, s_aug.row(r).to_vec(), aug.grid_shift, rng)?);
            targets
                .row_mut((1 + j) * n + r)
                .copy_from_slice(t_aug.row(r));
        }
    }

    let mut weights = vec![1.0 / n as f64; n];
    weights.extend(std::iter::repeat(1.0 / (n * m) as f64).take(n * m));
    let refs: Vec<&Observation> = all_obs.iter().collect();
    weighted_nll(policy, &refs, &targets, &weights)
}

/// Behavior-cloning loss assembled from a chunk batch (clean term only).
fn bc_chunk_loss(
    policy: &PolicyNet,
    batch: &[&Chunk],
    env: &dyn Env,
    rng: &mut impl Rng,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("bc_chunk_loss: empty batch".into()));
    }
    let (states, targets) = flatten_valid(batch);
    let uses_grid = policy.obs_spec().uses_grid();
    let mut obs = Vec::with_capacity(states.rows());
    for r in 0..states.rows() {
        obs.push(student_obs(uses_grid, env, states.row(r).to_vec(), None, rng)?);
    }
    let refs: Vec<&Observation> = obs.iter().collect();
    bc_loss(policy, &refs, &targets)
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// One validation measurement on the learning curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub iter: usize,
    pub val_mean: f64,
    pub val_ci95: f64,
}

/// Outcome of an offline training run.
#[derive(Clone, Debug)]
pub struct TrainReport {
    /// The student with the best-validation parameters loaded.
    pub policy: PolicyNet,
    pub best_iter: usize,
    pub best_val_mean: f64,
    pub curve: Vec<EvalPoint>,
    /// Test-set statistics of the best checkpoint.
    pub test: EvalReport,
    /// Gradient iterations actually run (early stopping may cut this short).
    pub iters_run: usize,
}

/// Clone the expert offline. Chunks are sampled uniformly with replacement;
/// every `eval_period` iterations the student is evaluated on the validation
/// set with `validation_noise` action noise, and the checkpoint with the
/// best validation mean (earliest on ties) is kept and finally scored on the
/// test set. Deterministic given (policy init, seed).
#[allow(clippy::too_many_arguments)]
pub fn train_offline(
    mut policy: PolicyNet,
    method: CloneMethod,
    dataset: &ExpertDataset,
    expert: &dyn Expert,
    env: &mut dyn Env,
    cfg: &TrainConfig,
    aug: &AugmentationSpec,
    val_set: &InstanceSet,
    test_set: &InstanceSet,
    seed: u64,
) -> Result<TrainReport> {
    cfg.validate()?;
    aug.validate()?;
    if dataset.chunks.is_empty() {
        return Err(Error::InvalidArgument("train_offline: empty dataset".into()));
    }
    if dataset.env_id != env.spec().id {
        return Err(Error::InvalidArgument(format!(
            "dataset was built on {:?}, training on {:?}",
            dataset.env_id,
            env.spec().id
        )));
    }
    if method != CloneMethod::Bc && aug.relabel != method.relabels() {
        return Err(Error::Config(format!(
            "method {} requires relabel={}, got {}",
            method.as_str(),
            method.relabels(),
            aug.relabel
        )));
    }
    if aug.grid_shift.is_some() && !policy.obs_spec().uses_grid() {
        return Err(Error::Config(
            "grid_shift set but the student has no grid channel".into(),
        ));
    }
    if policy.obs_spec().uses_grid()
        && env
            .render_grid_from_state(&vec![0.0; env.spec().state_dim])
            .is_none()
    {
        return Err(Error::Config(format!(
            "student consumes a grid but environment {:?} cannot render one",
            env.spec().id
        )));
    }

    let mut flat = policy.flat_params();
    let mut adam = AdamState::new(flat.len(), AdamConfig::with_lr(cfg.learning_rate));
    let mut rng_batch = rng_from(seed, "offline-batch", 0);
    let mut rng_aug = rng_from(seed, "offline-aug", 0);

    let mut curve: Vec<EvalPoint> = Vec::new();
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut stale = 0usize;
    let mut iters_run = 0usize;

    let mut k = 0usize;
    loop {
        if k % cfg.eval_period == 0 || k == cfg.max_iters {
            policy.set_flat_params(&flat)?;
            let rep = evaluate(&policy, env, val_set, cfg.validation_noise, EvalMode::Stochastic);
            curve.push(EvalPoint {
                iter: k,
                val_mean: rep.mean,
                val_ci95: rep.ci95,
            });
            let improved = best.as_ref().map_or(true, |(_, b, _)| rep.mean > *b);
            if improved {
                best = Some((k, rep.mean, flat.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
        if k >= cfg.max_iters {
            break;
        }
        let batch: Vec<&Chunk> = (0..cfg.batch_chunks)
            .map(|_| &dataset.chunks[rng_batch.gen_range(0..dataset.chunks.len())])
            .collect();
        let (_, grad) = match method {
            CloneMethod::Bc => bc_chunk_loss(&policy, &batch, &*env, &mut rng_aug)?,
            CloneMethod::NaiveAbc | CloneMethod::Apc => {
                apc_minibatch_loss(&policy, expert, &batch, aug, &*env, &mut rng_aug)?
            }
        };
        adam.step(&mut flat, &grad)?;
        policy.set_flat_params(&flat)?;
        iters_run += 1;
        k += 1;
    }

    let (best_iter, best_val_mean, best_params) =
        best.expect("at least one evaluation always runs");
    policy.set_flat_params(&best_params)?;
    let test = evaluate(&policy, env, test_set, cfg.validation_noise, EvalMode::Stochastic);
    Ok(TrainReport {
        policy,
        best_iter,
        best_val_mean,
        curve,
        test,
        iters_run,
    })
}
