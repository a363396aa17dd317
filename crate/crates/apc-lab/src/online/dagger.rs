//! DAgger with a fixed-β mixture acting policy, replay-buffered chunks, a
//! 10-updates-per-timestep rate limiter, and a choice of distillation
//! objective (analytic cross-entropy or log-likelihood of the expert mean).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{heads_of, OnlinePoint};
use crate::bench::eval::{evaluate, EvalMode};
use crate::cloning::{
    flatten_valid, perturb_indices, perturb_states_batch, student_obs, weighted_ce, weighted_nll,
    AugmentationSpec,
};
use crate::data::{Chunk, GateDecision, RateLimiter, RateLimiterConfig, ReplayBuffer, CHUNK_LEN};
use crate::envs::{make_env, make_instance_set, Channel, Env, Observation, Split};
use crate::experts::Expert;
use crate::numcore::{AdamConfig, AdamState, Matrix};
use crate::policy::{sample, GaussianActor, GaussianHead, ObsSpec, PolicyNet};
use crate::seeding::{derive_seed, rng_from};
use crate::{Error, Result};

/// Which distillation objective the learner minimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DaggerObjective {
    /// Mean analytic cross-entropy H[pi_E(.|s) || pi(.|s)].
    AnalyticCe,
    /// Mean negative log-likelihood of the expert mean action.
    LogprobOnMean,
}

/// Settings for one DAgger run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DaggerConfig {
    /// Probability of acting with the (frozen) student; 1-beta acts with the
    /// expert. Fixed over the run.
    pub beta: f64,
    pub objective: DaggerObjective,
    /// `None` trains on visited states only; `Some` adds perturbed states to
    /// the distillation objective (relabel=true: expert queried at the
    /// perturbed state; false: expert kept at the original state).
    pub aug: Option<AugmentationSpec>,
    pub replay_capacity: usize,
    /// Rate-limiter settings; `batch_size` is chunks per learner update.
    pub rate: RateLimiterConfig,
    pub env_step_budget: usize,
    pub learning_rate: f64,
    pub student_hidden: Vec<usize>,
    /// Evaluate the student every this many environment steps.
    pub eval_period_env_steps: usize,
    /// Episodes per evaluation (deterministic mean actions).
    pub eval_size: usize,
}

impl Default for DaggerConfig {
    fn default() -> Self {
        DaggerConfig {
            beta: 0.0,
            objective: DaggerObjective::AnalyticCe,
            aug: None,
            replay_capacity: ReplayBuffer::DEFAULT_CAPACITY,
            rate: RateLimiterConfig {
                batch_size: 16,
                ..Default::default()
            },
            env_step_budget: 3000,
            learning_rate: 1e-4,
            student_hidden: vec![32, 32],
            eval_period_env_steps: 200,
            eval_size: 20,
        }
    }
}

impl DaggerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta must be in [0, 1], got {}", self.beta)));
        }
        if let Some(aug) = &self.aug {
            aug.validate()?;
        }
        self.rate.validate()?;
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.env_step_budget == 0 || self.eval_period_env_steps == 0 || self.eval_size == 0 {
            return Err(Error::Config(
                "env_step_budget, eval_period_env_steps, eval_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Draw one action from the per-state mixture `beta * student + (1 - beta) *
/// expert`: pick the component, then sample from it. Returns the action and
/// whether the student branch was taken.
pub fn mixture_act(
    student_frozen: &dyn GaussianActor,
    expert: &dyn GaussianActor,
    beta: f64,
    obs: &Observation,
    rng: &mut impl Rng,
) -> (Vec<f64>, bool) {
    assert!((0.0..=1.0).contains(&beta), "beta must be in [0, 1]");
    let use_student = rng.gen_range(0.0..1.0) < beta;
    let head = if use_student {
        student_frozen.head(obs)
    } else {
        expert.head(obs)
    };
    (sample(&head, rng), use_student)
}

/// Distillation loss and student gradient on a replayed chunk batch, with
/// the expert queried live at the batch states (and at perturbed states when
/// augmenting with relabel).
pub fn dagger_update(
    policy: &PolicyNet,
    expert: &dyn Expert,
    batch: &[&Chunk],
    objective: DaggerObjective,
    aug: Option<&AugmentationSpec>,
    env: &dyn Env,
    rng: &mut impl Rng,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("dagger_update: empty batch".into()));
    }
    let (states, _) = flatten_valid(batch);
    let n = states.rows();
    let uses_grid = policy.obs_spec().uses_grid();
    let m = aug.map_or(0, |a| a.m);
    let grid_shift = aug.and_then(|a| a.grid_shift);

    // Reference heads: expert at the state the objective pairs with each row.
    let clean_refs = heads_of(expert.head_batch(&states));
    let mut all_obs: Vec<Observation> = Vec::with_capacity(n * (1 + m));
    let mut refs: Vec<GaussianHead> = Vec::with_capacity(n * (1 + m));
    for r in 0..n {
        all_obs.push(student_obs(uses_grid, env, states.row(r).to_vec(), grid_shift, rng)?);
    }
    refs.extend_from_slice(&clean_refs);
    if let Some(aug) = aug {
        let idx = if aug.sigma_s > 0.0 {
            Some(perturb_indices(&env.spec().layout, &aug.perturb_channels)?)
        } else {
            None
        };
        for _ in 0..aug.m {
            let s_aug = match &idx {
                Some(idx) => perturb_states_batch(&states, idx, aug.sigma_s, rng),
                None => states.clone(),
            };
            if aug.relabel {
                refs.extend(heads_of(expert.head_batch(&s_aug)));
            } else {
                refs.extend_from_slice(&clean_refs);
            }
            for r in 0..n {
                all_obs.push(student_obs(uses_grid, env, s_aug.row(r).to_vec(), grid_shift, rng)?);
            }
        }
    }

    let mut weights = vec![1.0 / n as f64; n];
    if m > 0 {
        weights.extend(std::iter::repeat(1.0 / (n * m) as f64).take(n * m));
    }
    let obs_refs: Vec<&Observation> = all_obs.iter().collect();
    match objective {
        DaggerObjective::AnalyticCe => weighted_ce(policy, &obs_refs, &refs, &weights),
        DaggerObjective::LogprobOnMean => {
            let action_dim = expert.action_dim();
            let mut targets = Matrix::zeros(refs.len(), action_dim);
            for (r, head) in refs.iter().enumerate() {
                targets.row_mut(r).copy_from_slice(&head.mu);
            }
            weighted_nll(policy, &obs_refs, &targets, &weights)
        }
    }
}

/// Result of a DAgger run.
#[derive(Clone, Debug)]
pub struct DaggerRunReport {
    pub curve: Vec<OnlinePoint>,
    /// Final student parameters.
    pub student: PolicyNet,
    pub env_steps: u64,
    pub learner_steps: u64,
    /// Whole-run audit of gradient updates per environment timestep.
    pub updates_per_timestep: f64,
    /// Fraction of environment steps acted by the expert branch.
    pub expert_action_fraction: f64,
}

/// Run DAgger: a deterministic interleaved actor/learner loop gated by the
/// rate limiter, with the acting mixture using a frozen student snapshot
/// refreshed after every learner update (gradients never flow through
/// acting). Evaluation unrolls deterministic mean actions.
pub fn dagger_run(
    env_id: &str,
    expert: &dyn Expert,
    cfg: &DaggerConfig,
    seed: u64,
) -> Result<DaggerRunReport> {
    cfg.validate()?;
    let mut env = make_env(env_id)?;
    let mut eval_env = make_env(env_id)?;
    let eval_set = make_instance_set(seed, Split::Validation, cfg.eval_size);
    let spec = env.spec().clone();

    let student_spec = ObsSpec::new(vec![Channel::State], spec.layout.clone(), 0);
    let mut student = PolicyNet::new(
        student_spec,
        cfg.student_hidden.clone(),
        spec.action_dim,
        &mut rng_from(seed, "dagger-student-init", 0),
    )?;
    let mut acting = student.clone();
    let mut adam = AdamState::new(student.param_count(), AdamConfig::with_lr(cfg.learning_rate));
    let mut replay = ReplayBuffer::new(cfg.replay_capacity)?;
    let mut limiter = RateLimiter::new(cfg.rate)?;
    let mut rng_act = rng_from(seed, "dagger-act", 0);
    let mut rng_sample = rng_from(seed, "dagger-sample", 0);
    let mut rng_aug = rng_from(seed, "dagger-aug", 0);

    let mut episode = 0u64;
    let mut obs = env.reset(derive_seed(seed, "dagger-episode", episode));
    let mut pending: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::with_capacity(CHUNK_LEN);
    let mut env_steps = 0u64;
    let mut learner_steps = 0u64;
    let mut expert_steps = 0u64;
    let mut curve = Vec::new();

    let flush_pending =
        |pending: &mut Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
         replay: &mut ReplayBuffer,
         limiter: &mut RateLimiter| {
            if pending.is_empty() {
                return;
            }
            let (sd, ad) = (pending[0].0.len(), pending[0].1.len());
            let mut states = Matrix::zeros(CHUNK_LEN, sd);
            let mut actions = Matrix::zeros(CHUNK_LEN, ad);
            let mut means = Matrix::zeros(CHUNK_LEN, ad);
            for (t, (s, a, m)) in pending.iter().enumerate() {
                states.row_mut(t).copy_from_slice(s);
                actions.row_mut(t).copy_from_slice(a);
                means.row_mut(t).copy_from_slice(m);
            }
            let chunk = Chunk {
                states,
                actions,
                means,
                valid_len: pending.len(),
            };
            let steps = replay.insert(chunk);
            limiter.record_insert(steps);
            pending.clear();
        };

    // Evaluation at env step 0, then every eval_period_env_steps.
    let eval_point = |student: &PolicyNet,
                      eval_env: &mut Box<dyn Env>,
                      env_steps: u64,
                      learner_steps: u64| {
        let rep = evaluate(student, eval_env.as_mut(), &eval_set, 0.0, EvalMode::MeanAction);
        OnlinePoint {
            env_steps,
            learner_steps,
            eval_mean: rep.mean,
            eval_ci95: rep.ci95,
        }
    };
    curve.push(eval_point(&student, &mut eval_env, 0, 0));

    while env_steps < cfg.env_step_budget as u64 {
        match limiter.gate() {
            GateDecision::ActorOnly => {
                let (action, used_student) =
                    mixture_act(&acting, expert, cfg.beta, &obs, &mut rng_act);
                expert_steps += !used_student as u64;
                let expert_mean = expert.head(&obs).mu;
                let step = env.step(&action);
                pending.push((obs.state.clone(), action, expert_mean));
                env_steps += 1;
                if pending.len() == CHUNK_LEN || step.done {
                    flush_pending(&mut pending, &mut replay, &mut limiter);
                }
                if step.done {
                    episode += 1;
                    obs = env.reset(derive_seed(seed, "dagger-episode", episode));
                } else {
                    obs = step.obs;
                }
                if env_steps % cfg.eval_period_env_steps as u64 == 0 {
                    curve.push(eval_point(&student, &mut eval_env, env_steps, learner_steps));
                }
            }
            GateDecision::LearnerOnly | GateDecision::Both => {
                let batch_owned = replay.sample(cfg.rate.batch_size, &mut rng_sample)?;
                let batch: Vec<&Chunk> = batch_owned.iter().collect();
                let (_, grad) = dagger_update(
                    &student,
                    expert,
                    &batch,
                    cfg.objective,
                    cfg.aug.as_ref(),
                    &*env,
                    &mut rng_aug,
                )?;
                let mut flat = student.flat_params();
                adam.step(&mut flat, &grad)?;
                student.set_flat_params(&flat)?;
                limiter.record_update();
                learner_steps += 1;
                // Refresh the frozen acting snapshot after the update.
                acting = student.clone();
            }
        }
    }
    if curve.last().map_or(true, |p| p.env_steps != env_steps) {
        curve.push(eval_point(&student, &mut eval_env, env_steps, learner_steps));
    }

    Ok(DaggerRunReport {
        curve,
        student,
        env_steps,
        learner_steps,
        updates_per_timestep: limiter.updates_per_inserted_timestep(),
        expert_action_fraction: expert_steps as f64 / env_steps as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experts::{ExpertMeta, LqrExpert, Tier, TrainedExpert};

    fn lqr_policy(seed: u64, hidden: Vec<usize>) -> PolicyNet {
        let env = make_env("lqr2d").unwrap();
        let spec = ObsSpec::new(vec![Channel::State], env.spec().layout.clone(), 0);
        PolicyNet::new(
            spec,
            hidden,
            env.spec().action_dim,
            &mut rng_from(seed, "test-policy", 0),
        )
        .unwrap()
    }

    fn wrap_as_expert(net: PolicyNet) -> TrainedExpert {
        let env = make_env("lqr2d").unwrap();
        let meta = ExpertMeta {
            env_id: "lqr2d".into(),
            env_hash: crate::bench::json_hash(&serde_json::to_value(env.spec()).unwrap()),
            tier: Tier::High,
            measured_return: 0.0,
            measured_score: 1.0,
            learner_steps: 0,
            env_steps: 0,
        };
        TrainedExpert::new(net, meta).unwrap()
    }

    fn demo_batch(seed: u64) -> Vec<Chunk> {
        let mut env = make_env("lqr2d").unwrap();
        let ds = crate::data::build_dataset(
            &LqrExpert::default_2d(),
            env.as_mut(),
            &crate::data::DatasetSpec::full(1, crate::data::NoiseTier::Low),
            seed,
        )
        .unwrap();
        ds.chunks
    }

    #[test]
    fn mixture_extremes_and_frequency() {
        let expert = LqrExpert::default_2d();
        let student = lqr_policy(0, vec![8]);
        let mut env = make_env("lqr2d").unwrap();
        let obs = env.reset(0);
        let mut rng = rng_from(0, "mix", 0);
        for _ in 0..200 {
            let (_, s) = mixture_act(&student, &expert, 0.0, &obs, &mut rng);
            assert!(!s);
            let (_, s) = mixture_act(&student, &expert, 1.0, &obs, &mut rng);
            assert!(s);
        }
        let mut student_draws = 0u64;
        let draws = 100_000;
        for _ in 0..draws {
            let (_, s) = mixture_act(&student, &expert, 0.3, &obs, &mut rng);
            student_draws += s as u64;
        }
        let freq = student_draws as f64 / draws as f64;
        assert!((freq - 0.3).abs() < 0.01, "student frequency {freq}");
    }

    #[test]
    fn ce_of_identical_policies_is_expert_entropy_with_zero_gradient() {
        use crate::policy::entropy;
        let net = lqr_policy(3, vec![6]);
        let expert = wrap_as_expert(net.clone());
        let chunks = demo_batch(1);
        let batch: Vec<&Chunk> = chunks[..2].iter().collect();
        let env = make_env("lqr2d").unwrap();
        let mut rng = rng_from(0, "ce", 0);
        let (loss, grad) = dagger_update(
            &net,
            &expert,
            &batch,
            DaggerObjective::AnalyticCe,
            None,
            &*env,
            &mut rng,
        )
        .unwrap();
        // Expected: mean entropy of the expert across the batch rows.
        let (states, _) = flatten_valid(&batch);
        let refs = heads_of(crate::experts::Expert::head_batch(&expert, &states));
        let mean_h: f64 = refs.iter().map(entropy).sum::<f64>() / refs.len() as f64;
        assert!((loss - mean_h).abs() < 1e-12, "{loss} vs {mean_h}");
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(gnorm < 1e-9, "gradient norm {gnorm}");
    }

    #[test]
    fn dagger_objective_gradients_match_finite_differences() {
        let policy = lqr_policy(5, vec![4]);
        let expert = LqrExpert::default_2d();
        let chunks = demo_batch(2);
        let batch: Vec<&Chunk> = chunks[..1].iter().collect();
        let env = make_env("lqr2d").unwrap();
        let aug = AugmentationSpec {
            sigma_s: 0.2,
            m: 2,
            relabel: true,
            ..Default::default()
        };
        for objective in [DaggerObjective::AnalyticCe, DaggerObjective::LogprobOnMean] {
            let loss_at = |p: &PolicyNet| {
                let mut rng = rng_from(11, "fd", 0);
                dagger_update(p, &expert, &batch, objective, Some(&aug), &*env, &mut rng)
                    .unwrap()
                    .0
            };
            let mut rng = rng_from(11, "fd", 0);
            let (_, grad) =
                dagger_update(&policy, &expert, &batch, objective, Some(&aug), &*env, &mut rng)
                    .unwrap();
            let flat = policy.flat_params();
            let eps = 1e-6;
            let mut worst = 0.0f64;
            for i in 0..flat.len() {
                let mut p = policy.clone();
                let mut up = flat.clone();
                up[i] += eps;
                p.set_flat_params(&up).unwrap();
                let lu = loss_at(&p);
                let mut down = flat.clone();
                down[i] -= eps;
                p.set_flat_params(&down).unwrap();
                let ld = loss_at(&p);
                let fd = (lu - ld) / (2.0 * eps);
                let denom = fd.abs().max(grad[i].abs()).max(1e-8);
                worst = worst.max((fd - grad[i]).abs() / denom);
            }
            assert!(worst < 1e-4, "{objective:?}: worst rel grad err {worst}");
        }
    }

    #[test]
    fn naive_augmentation_keeps_expert_at_original_state() {
        // With relabel=false the reference heads of augmented rows equal the
        // clean rows' heads; with relabel=true they differ.
        let policy = lqr_policy(7, vec![6]);
        let expert = LqrExpert::default_2d();
        let chunks = demo_batch(3);
        let batch: Vec<&Chunk> = chunks[..1].iter().collect();
        let env = make_env("lqr2d").unwrap();
        let base = AugmentationSpec {
            sigma_s: 0.4,
            m: 3,
            relabel: true,
            ..Default::default()
        };
        let naive = AugmentationSpec {
            relabel: false,
            ..base.clone()
        };
        let run = |aug: &AugmentationSpec| {
            let mut rng = rng_from(2, "naive", 0);
            dagger_update(
                &policy,
                &expert,
                &batch,
                DaggerObjective::AnalyticCe,
                Some(aug),
                &*env,
                &mut rng,
            )
            .unwrap()
            .0
        };
        assert!((run(&base) - run(&naive)).abs() > 1e-9);
    }

    #[test]
    fn sigma_zero_augmentation_duplicates_clean_objective() {
        // With sigma_s = 0 and relabeling, every augmented term equals its
        // clean term: the loss is exactly twice the unaugmented loss.
        let policy = lqr_policy(9, vec![6]);
        let expert = LqrExpert::default_2d();
        let chunks = demo_batch(4);
        let batch: Vec<&Chunk> = chunks[..2].iter().collect();
        let env = make_env("lqr2d").unwrap();
        let aug = AugmentationSpec {
            sigma_s: 0.0,
            m: 5,
            relabel: true,
            ..Default::default()
        };
        let mut rng = rng_from(0, "dup", 0);
        let (with_aug, g_aug) = dagger_update(
            &policy,
            &expert,
            &batch,
            DaggerObjective::AnalyticCe,
            Some(&aug),
            &*env,
            &mut rng,
        )
        .unwrap();
        let mut rng = rng_from(0, "dup", 0);
        let (plain, g_plain) = dagger_update(
            &policy,
            &expert,
            &batch,
            DaggerObjective::AnalyticCe,
            None,
            &*env,
            &mut rng,
        )
        .unwrap();
        assert!((with_aug - 2.0 * plain).abs() < 1e-12 * plain.abs().max(1.0));
        for (a, b) in g_aug.iter().zip(&g_plain) {
            assert!((a - 2.0 * b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn dagger_run_audits_and_reproduces() {
        let cfg = DaggerConfig {
            beta: 0.3,
            env_step_budget: 400,
            eval_period_env_steps: 200,
            eval_size: 4,
            rate: RateLimiterConfig {
                batch_size: 4,
                ..Default::default()
            },
            ..Default::default()
        };
        let expert = LqrExpert::default_2d();
        let a = dagger_run("lqr2d", &expert, &cfg, 5).unwrap();
        let b = dagger_run("lqr2d", &expert, &cfg, 5).unwrap();
        assert_eq!(a.student.flat_params(), b.student.flat_params());
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.env_steps, 400);
        assert!(
            (a.updates_per_timestep - 10.0).abs() <= 1.0,
            "updates per timestep {}",
            a.updates_per_timestep
        );
        // beta = 0.3: about 70% of actions come from the expert branch.
        assert!(
            (a.expert_action_fraction - 0.7).abs() < 0.08,
            "expert fraction {}",
            a.expert_action_fraction
        );
        // Curve covers steps 0, 200, 400.
        assert_eq!(
            a.curve.iter().map(|p| p.env_steps).collect::<Vec<_>>(),
            vec![0, 200, 400]
        );
    }
}
