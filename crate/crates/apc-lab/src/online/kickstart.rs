//! Kickstarting: actor–critic RL plus a λ-weighted teacher-distillation
//! term on the actor objective.
//!
//! The learner is the plain n-step advantage actor–critic; kickstarting
//! injects `λ * mean H[π_T(·|s) ‖ π(·|s)]` over the freshly visited states
//! (optionally extended with perturbed states) through the extra-actor-loss
//! hook. The critic never sees augmented inputs — the hook can only add an
//! actor gradient. λ = 0 takes the identical code path with a `None` hook,
//! so a from-scratch arm is the same program with one knob turned off.

use serde::{Deserialize, Serialize};

use super::{heads_of, OnlinePoint};
use crate::bench::eval::{evaluate, EvalMode};
use crate::cloning::{perturb_indices, perturb_states_batch, student_obs, weighted_ce, AugmentationSpec};
use crate::envs::{make_env, make_instance_set, Env, Observation, Split};
use crate::experts::actor_critic::ExtraActorLoss;
use crate::experts::train::expert_obs_spec;
use crate::experts::{A2cConfig, A2cLearner, Expert};
use crate::numcore::Matrix;
use crate::policy::{GaussianHead, PolicyNet};
use crate::seeding::rng_from;
use crate::{Error, Result};

/// Distillation-weight grid swept by the benchmark configs.
pub const LAMBDA_GRID: [f64; 6] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0];

/// Settings for one kickstarting run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KickstartConfig {
    /// Distillation weight; 0 is plain RL from scratch.
    pub lambda: f64,
    /// Weight on the reward-driven part of the actor objective: 1 keeps the
    /// full RL term, 0 leaves pure online distillation. Binary by design.
    pub task_weight: f64,
    /// `None` distills on visited states only; `Some` adds perturbed states
    /// to the distillation term (never to the critic).
    pub aug: Option<AugmentationSpec>,
    pub a2c: A2cConfig,
    pub learner_steps: u64,
    /// Learner steps between evaluations.
    pub eval_period: u64,
    /// Episodes per evaluation (deterministic mean actions).
    pub eval_size: usize,
}

impl Default for KickstartConfig {
    fn default() -> Self {
        KickstartConfig {
            lambda: 0.0,
            task_weight: 1.0,
            aug: None,
            a2c: A2cConfig::default(),
            learner_steps: 20_000,
            eval_period: 1_000,
            eval_size: 20,
        }
    }
}

impl KickstartConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Config(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if self.task_weight != 0.0 && self.task_weight != 1.0 {
            return Err(Error::Config(format!(
                "task_weight must be 0 or 1, got {}",
                self.task_weight
            )));
        }
        if let Some(aug) = &self.aug {
            aug.validate()?;
        }
        self.a2c.validate()?;
        if self.learner_steps == 0 || self.eval_period == 0 || self.eval_size == 0 {
            return Err(Error::Config(
                "learner_steps, eval_period, eval_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Result of a kickstarting (or from-scratch, λ = 0) run.
#[derive(Clone, Debug)]
pub struct KickstartRunReport {
    pub curve: Vec<OnlinePoint>,
    /// Final actor parameters.
    pub actor: PolicyNet,
    pub env_steps: u64,
    pub learner_steps: u64,
}

/// Distillation loss and actor gradient over the visited observations
/// (plus augmented rows), weighted by λ. Factored out of the hook so the
/// tests can probe it directly.
fn distill_term(
    policy: &PolicyNet,
    teacher: &dyn Expert,
    visited: &[Observation],
    lambda: f64,
    aug: Option<&AugmentationSpec>,
    render_env: &dyn Env,
    rng: &mut impl rand::Rng,
) -> Result<ExtraActorLoss> {
    let n = visited.len();
    if n == 0 {
        return Err(Error::InvalidArgument("distill_term: no visited states".into()));
    }
    let state_rows: Vec<Vec<f64>> = visited.iter().map(|o| o.state.clone()).collect();
    let states = Matrix::from_rows(&state_rows);
    let m = aug.map_or(0, |a| a.m);
    let uses_grid = policy.obs_spec().uses_grid();

    let mut all_obs: Vec<Observation> = visited.to_vec();
    let mut refs: Vec<GaussianHead> = heads_of(teacher.head_batch(&states));
    if let Some(aug) = aug {
        let idx = if aug.sigma_s > 0.0 {
            Some(perturb_indices(&render_env.spec().layout, &aug.perturb_channels)?)
        } else {
            None
        };
        let clean_refs = refs.clone();
        for _ in 0..aug.m {
            let s_aug = match &idx {
                Some(idx) => perturb_states_batch(&states, idx, aug.sigma_s, rng),
                None => states.clone(),
            };
            if aug.relabel {
                refs.extend(heads_of(teacher.head_batch(&s_aug)));
            } else {
                refs.extend_from_slice(&clean_refs);
            }
            for r in 0..n {
                all_obs.push(student_obs(
                    uses_grid,
                    render_env,
                    s_aug.row(r).to_vec(),
                    aug.grid_shift,
                    rng,
                )?);
            }
        }
    }
    let mut weights = vec![lambda / n as f64; n];
    if m > 0 {
        weights.extend(std::iter::repeat(lambda / (n * m) as f64).take(n * m));
    }
    let obs_refs: Vec<&Observation> = all_obs.iter().collect();
    let (loss, grad) = weighted_ce(policy, &obs_refs, &refs, &weights)?;
    Ok(ExtraActorLoss { loss, grad })
}

/// Run kickstarted RL: `teacher` is required when λ > 0 and ignored when
/// λ = 0 (the from-scratch arm). Deterministic given the seed.
pub fn kickstart_run(
    env_id: &str,
    teacher: Option<&dyn Expert>,
    cfg: &KickstartConfig,
    seed: u64,
) -> Result<KickstartRunReport> {
    cfg.validate()?;
    if cfg.lambda > 0.0 && teacher.is_none() {
        return Err(Error::Config(
            "kickstart_run: lambda > 0 requires a teacher expert".into(),
        ));
    }
    let env = make_env(env_id)?;
    let obs_spec = expert_obs_spec(env.as_ref());
    let mut learner = A2cLearner::new(env, obs_spec.clone(), obs_spec, cfg.a2c.clone(), seed)?;
    let mut eval_env = make_env(env_id)?;
    let render_env = make_env(env_id)?;
    let eval_set = make_instance_set(seed, Split::Validation, cfg.eval_size);
    let mut rng_aug = rng_from(seed, "kickstart-aug", 0);

    let mut curve = Vec::new();
    let eval_point = |learner: &A2cLearner, eval_env: &mut Box<dyn Env>| {
        let rep = evaluate(
            learner.actor(),
            eval_env.as_mut(),
            &eval_set,
            0.0,
            EvalMode::MeanAction,
        );
        OnlinePoint {
            env_steps: learner.env_steps(),
            learner_steps: learner.learner_steps(),
            eval_mean: rep.mean,
            eval_ci95: rep.ci95,
        }
    };
    curve.push(eval_point(&learner, &mut eval_env));

    for k in 0..cfg.learner_steps {
        if cfg.lambda == 0.0 {
            learner.step_weighted(cfg.task_weight, |_, _| Ok(None))?;
        } else {
            let teacher = teacher.expect("validated above");
            let lambda = cfg.lambda;
            let aug = cfg.aug.as_ref();
            let render = render_env.as_ref();
            let rng = &mut rng_aug;
            learner.step_weighted(cfg.task_weight, move |policy, visited| {
                distill_term(policy, teacher, visited, lambda, aug, render, rng).map(Some)
            })?;
        }
        if (k + 1) % cfg.eval_period == 0 || k + 1 == cfg.learner_steps {
            curve.push(eval_point(&learner, &mut eval_env));
        }
    }

    Ok(KickstartRunReport {
        curve,
        actor: learner.actor().clone(),
        env_steps: learner.env_steps(),
        learner_steps: learner.learner_steps(),
    })
}
