//! Evaluation protocol and curve statistics.
//!
//! Evaluation runs one episode per instance seed with either stochastic
//! actions (`a ~ N(mu(s), sigma^2 I)` at a fixed override sigma) or pure mean
//! actions, and reports undiscounted return statistics with a normal-
//! approximation 95% confidence interval. Because raw returns on these tasks
//! are negative, cross-method comparisons use the expert-normalized score
//! where 0 is the zero-action null policy and 1 is the expert reference.

use serde::{Deserialize, Serialize};

use crate::envs::{Env, InstanceSet};
use crate::policy::{FixedNoise, GaussianActor, GaussianHead};
use crate::seeding::rng_from;
use crate::{Error, Result};

/// How actions are drawn during evaluation episodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// `a = mu(s) + sigma * z`, `z ~ N(0, I)`, at the override sigma.
    Stochastic,
    /// `a = mu(s)` (deterministic).
    MeanAction,
}

/// Per-policy evaluation statistics over one instance set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// One undiscounted episodic return per instance seed, in seed order.
    pub returns: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator; 0 when n < 2).
    pub std: f64,
    /// 95% CI half-width: `1.96 * std / sqrt(n)`.
    pub ci95: f64,
    pub episodes: usize,
    /// Episodes in which at least one action coordinate hit the bound.
    pub clip_episodes: usize,
    /// Mean episode length (differs from the horizon under early termination).
    pub mean_length: f64,
}

/// Mean and normal-approximation 95% CI half-width of `xs`.
pub fn mean_ci95(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len();
    assert!(n > 0, "mean_ci95: empty slice");
    let mean = xs.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
        var.sqrt()
    };
    let ci95 = 1.96 * std / (n as f64).sqrt();
    (mean, std, ci95)
}

/// Run one episode per instance seed and summarize returns.
///
/// Stochastic-mode action noise is drawn from a stream derived from the
/// episode seed, so the same (actor, set, sigma, mode) always reproduces the
/// identical report, and different policies see common random numbers.
pub fn evaluate(
    actor: &dyn GaussianActor,
    env: &mut dyn Env,
    set: &InstanceSet,
    sigma: f64,
    mode: EvalMode,
) -> EvalReport {
    assert!(!set.seeds.is_empty(), "evaluate: empty instance set");
    let mut returns = Vec::with_capacity(set.seeds.len());
    let mut clip_episodes = 0usize;
    let mut total_len = 0usize;
    for &seed in &set.seeds {
        let mut obs = env.reset(seed);
        let mut rng = rng_from(seed, "eval-act", 0);
        let mut ret = 0.0;
        let mut clipped = false;
        let mut len = 0usize;
        loop {
            let action = match mode {
                EvalMode::MeanAction => actor.head(&obs).mu,
                EvalMode::Stochastic => FixedNoise::new(actor, sigma).act(&obs, &mut rng),
            };
            let step = env.step(&action);
            ret += step.reward;
            clipped |= step.clipped;
            len += 1;
            if step.done {
                break;
            }
            obs = step.obs;
        }
        returns.push(ret);
        clip_episodes += clipped as usize;
        total_len += len;
    }
    let (mean, std, ci95) = mean_ci95(&returns);
    EvalReport {
        episodes: returns.len(),
        mean,
        std,
        ci95,
        clip_episodes,
        mean_length: total_len as f64 / set.seeds.len() as f64,
        returns,
    }
}

/// The zero-action policy: the scoring floor for expert-normalized returns.
pub struct NullActor {
    pub action_dim: usize,
}

impl GaussianActor for NullActor {
    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn head(&self, _obs: &crate::envs::Observation) -> GaussianHead {
        GaussianHead::from_mu_sigma(vec![0.0; self.action_dim], vec![1.0; self.action_dim])
    }
}

/// Reference returns that anchor the normalized score on one instance set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRefs {
    /// Mean return of the zero-action policy (score 0).
    pub null_mean: f64,
    /// Mean deterministic return of the reference expert (score 1).
    pub expert_mean: f64,
}

impl ScoreRefs {
    /// Measure both anchors on `set` (expert unrolled with mean actions).
    pub fn measure(expert: &dyn GaussianActor, env: &mut dyn Env, set: &InstanceSet) -> Self {
        let null = NullActor {
            action_dim: expert.action_dim(),
        };
        let null_mean = evaluate(&null, env, set, 0.0, EvalMode::MeanAction).mean;
        let expert_mean = evaluate(expert, env, set, 0.0, EvalMode::MeanAction).mean;
        ScoreRefs {
            null_mean,
            expert_mean,
        }
    }

    /// Expert-normalized score of a mean return: 0 = null policy, 1 = expert.
    pub fn score(&self, mean_return: f64) -> f64 {
        let gap = self.expert_mean - self.null_mean;
        assert!(
            gap > 0.0,
            "ScoreRefs: expert ({}) must beat the null policy ({})",
            self.expert_mean,
            self.null_mean
        );
        (mean_return - self.null_mean) / gap
    }
}

/// One bin of an equal-count learning-curve summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveBin {
    pub index: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub mean: f64,
    pub ci95: f64,
    pub count: usize,
}

/// Number of equal-count bins used by learning-curve summaries.
pub const CURVE_BINS: usize = 10;

/// Split `points` into 10 equal-count bins by x-order and summarize y per bin.
///
/// With `n = 10q + r` points, the first `r` bins hold `q + 1` points and the
/// rest hold `q` (each bin holds 10% of the data ±1 point). Ties in x keep
/// their input order.
pub fn bin_curve(points: &[(f64, f64)]) -> Result<Vec<CurveBin>> {
    if points.len() < CURVE_BINS {
        return Err(Error::InvalidArgument(format!(
            "bin_curve needs at least {CURVE_BINS} points, got {}",
            points.len()
        )));
    }
    for (x, y) in points {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::NonFinite(format!("bin_curve point ({x}, {y})")));
        }
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite x"));
    let n = sorted.len();
    let q = n / CURVE_BINS;
    let r = n % CURVE_BINS;
    let mut bins = Vec::with_capacity(CURVE_BINS);
    let mut start = 0usize;
    for index in 0..CURVE_BINS {
        let count = q + usize::from(index < r);
        let slice = &sorted[start..start + count];
        let ys: Vec<f64> = slice.iter().map(|p| p.1).collect();
        let (mean, _, ci95) = mean_ci95(&ys);
        bins.push(CurveBin {
            index,
            x_min: slice.first().expect("non-empty bin").0,
            x_max: slice.last().expect("non-empty bin").0,
            mean,
            ci95,
            count,
        });
        start += count;
    }
    Ok(bins)
}
