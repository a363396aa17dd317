//! Experiment runner: executes every arm of a configured experiment and
//! writes a self-describing artifact directory.
//!
//! Layout under `<out_root>/<name>/`:
//!
//! ```text
//! manifest.json        config echo + hash, code version, score anchors,
//!                      per-arm status and summary numbers, selection
//! summary.csv          one row per successful arm (kind-specific schema)
//! refs_returns.csv     per-episode returns behind the test score anchors
//! arms/<arm_id>/       per-arm files (curve.csv, test_returns.csv, ...)
//! ```
//!
//! Everything an arm writes is a pure function of (config, master seed), so
//! rerunning a config reproduces every file byte for byte; worker threads
//! change wall-clock time only. Summary statistics stay recomputable: each
//! terminal evaluation stores its per-episode returns next to the summary
//! row, and curve files store the per-point mean and CI.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{torso_tag, Arm, ArmSpec, ExperimentConfig, ExperimentKind};
use super::eval::{evaluate, EvalMode, EvalReport, NullActor, ScoreRefs};
use crate::cloning::{train_offline, CloneMethod};
use crate::data::build_dataset;
use crate::envs::{make_env, make_instance_set, InstanceSet, Split};
use crate::experts::{train_expert, Expert, LqrExpert};
use crate::online::{dagger_run, kickstart_run, DaggerConfig, DaggerObjective, KickstartConfig, OnlinePoint};
use crate::policy::{GaussianActor, ObsSpec, PolicyNet};
use crate::seeding::rng_from;
use crate::{Error, Result};

/// Normalized-score threshold used for the time-to-threshold summary column.
pub const CROSSING_SCORE: f64 = 0.9;

/// Where and how to run.
#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Root directory that receives the `<name>` experiment directory.
    pub out_root: PathBuf,
    /// Substring filter on arm ids; `None` runs everything.
    pub arm_filter: Option<String>,
    /// Worker threads (1 = run arms in config order on this thread).
    pub threads: usize,
}

impl RunOptions {
    pub fn new(out_root: impl Into<PathBuf>) -> Self {
        RunOptions {
            out_root: out_root.into(),
            arm_filter: None,
            threads: 1,
        }
    }
}

/// Per-arm record in the manifest.
#[derive(Clone, Debug, Serialize)]
pub struct ArmRecord {
    pub id: String,
    pub seed: u64,
    /// `"ok"` or `"failed"`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<Value>,
}

/// Validation-selected grid point (noise-scale and distillation sweeps).
#[derive(Clone, Debug, Serialize)]
pub struct Selection {
    /// How the winner was picked.
    pub rule: String,
    /// Arm-id prefix of the winning group.
    pub group: String,
    /// The chosen grid value.
    pub parameter: f64,
    /// Seed-averaged validation mean of the winner.
    pub validation_mean: f64,
    /// Seed-averaged test score of the winner.
    pub test_score_mean: f64,
}

/// Experiment-level metadata written to `manifest.json`.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub name: String,
    pub kind: String,
    pub env: String,
    pub code_version: String,
    pub config_hash: String,
    /// Test-set score anchors (per-arm anchors live in the arm summaries).
    pub score_refs: ScoreRefs,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teacher: Option<Value>,
    pub config: ExperimentConfig,
    pub arms: Vec<ArmRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<Selection>,
}

/// Expensive inputs shared by every arm.
struct SharedPrep {
    expert: Arc<dyn Expert + Send>,
    val_set: InstanceSet,
    test_set: InstanceSet,
    test_refs: ScoreRefs,
    null_returns: Vec<f64>,
    expert_returns: Vec<f64>,
    teacher_info: Option<Value>,
}

fn expert_actor(expert: &(dyn Expert + Send)) -> &dyn GaussianActor {
    expert
}

/// Build the reference expert, shared instance sets, and score anchors.
fn prepare(cfg: &ExperimentConfig) -> Result<SharedPrep> {
    let mut env = make_env(&cfg.env)?;
    let tier = match cfg.kind {
        ExperimentKind::Kickstart => cfg.teacher_tier,
        _ => cfg.expert_tier,
    };
    let (expert, teacher_info): (Arc<dyn Expert + Send>, Option<Value>) = if env.spec().id
        == "lqr2d"
    {
        (Arc::new(LqrExpert::default_2d()), None)
    } else {
        let tiers = train_expert(&cfg.env, &cfg.teacher)?;
        let chosen = tiers
            .tiers
            .iter()
            .find(|t| t.tier == tier)
            .ok_or_else(|| Error::Config(format!("no {tier:?} tier checkpoint")))?
            .expert
            .clone();
        let meta = chosen.meta().clone();
        (
            Arc::new(chosen),
            Some(json!({
                "tier": tier,
                "measured_return": meta.measured_return,
                "measured_score": meta.measured_score,
                "learner_steps": meta.learner_steps,
                "env_steps": meta.env_steps,
            })),
        )
    };
    let val_set = make_instance_set(cfg.master_seed, Split::Validation, cfg.validation_size);
    let test_set = make_instance_set(cfg.master_seed, Split::Test, cfg.test_size);
    let action_dim = env.spec().action_dim;
    let null_rep = evaluate(
        &NullActor { action_dim },
        env.as_mut(),
        &test_set,
        0.0,
        EvalMode::MeanAction,
    );
    let expert_rep = evaluate(
        expert_actor(&*expert),
        env.as_mut(),
        &test_set,
        0.0,
        EvalMode::MeanAction,
    );
    Ok(SharedPrep {
        expert,
        val_set,
        test_set,
        test_refs: ScoreRefs {
            null_mean: null_rep.mean,
            expert_mean: expert_rep.mean,
        },
        null_returns: null_rep.returns,
        expert_returns: expert_rep.returns,
        teacher_info,
    })
}

// ---------------------------------------------------------------------------
// CSV helpers
// ---------------------------------------------------------------------------

/// Shortest-roundtrip decimal text; the byte-stable float encoding used in
/// every CSV this crate writes.
pub fn fstr(x: f64) -> String {
    format!("{x}")
}

pub(crate) fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Format(format!("csv buffer: {e}")))?;
    std::fs::write(path, bytes)?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

fn returns_rows(returns: &[f64]) -> Vec<Vec<String>> {
    returns
        .iter()
        .enumerate()
        .map(|(i, r)| vec![i.to_string(), fstr(*r)])
        .collect()
}

/// Columns of `summary.csv` for each experiment kind.
pub fn summary_header(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::OfflineSweep
        | ExperimentKind::NoiseGrid
        | ExperimentKind::SigmaSAblation
        | ExperimentKind::Compression
        | ExperimentKind::Privileged => &[
            "arm",
            "method",
            "n_trajectories",
            "torso",
            "sigma_s",
            "seed_index",
            "best_iter",
            "iters_run",
            "best_val_mean",
            "test_mean",
            "test_ci95",
            "test_score",
        ],
        ExperimentKind::Dagger => &[
            "arm",
            "tag",
            "objective",
            "seed_index",
            "env_steps",
            "learner_steps",
            "updates_per_timestep",
            "expert_action_fraction",
            "final_val_mean",
            "final_val_score",
            "steps_to_90",
        ],
        ExperimentKind::Kickstart => &[
            "arm",
            "lambda",
            "seed_index",
            "env_steps",
            "learner_steps",
            "final_val_mean",
            "final_val_score",
            "test_mean",
            "test_ci95",
            "test_score",
        ],
    }
}

/// Pinned schema of online learning-curve files.
pub const ONLINE_CURVE_HEADER: [&str; 6] = [
    "env_step",
    "seed",
    "eval_mean",
    "eval_ci_low",
    "eval_ci_high",
    "arm_tag",
];

fn online_curve_rows(curve: &[OnlinePoint], seed: u64, tag: &str) -> Vec<Vec<String>> {
    curve
        .iter()
        .map(|p| {
            vec![
                p.env_steps.to_string(),
                seed.to_string(),
                fstr(p.eval_mean),
                fstr(p.eval_mean - p.eval_ci95),
                fstr(p.eval_mean + p.eval_ci95),
                tag.to_string(),
            ]
        })
        .collect()
}

fn objective_str(objective: DaggerObjective) -> &'static str {
    match objective {
        DaggerObjective::AnalyticCe => "analytic_ce",
        DaggerObjective::LogprobOnMean => "logprob_on_mean",
    }
}

/// Score anchors measured on one arm's own evaluation instance set, with the
/// per-episode returns that justify them.
fn arm_refs(
    expert: &(dyn Expert + Send),
    env_id: &str,
    set: &InstanceSet,
    dir: &Path,
) -> Result<ScoreRefs> {
    let mut env = make_env(env_id)?;
    let null_rep = evaluate(
        &NullActor {
            action_dim: expert.action_dim(),
        },
        env.as_mut(),
        set,
        0.0,
        EvalMode::MeanAction,
    );
    let expert_rep = evaluate(expert_actor(expert), env.as_mut(), set, 0.0, EvalMode::MeanAction);
    let rows: Vec<Vec<String>> = null_rep
        .returns
        .iter()
        .zip(&expert_rep.returns)
        .enumerate()
        .map(|(i, (n, e))| vec![i.to_string(), fstr(*n), fstr(*e)])
        .collect();
    write_csv(
        &dir.join("refs_returns.csv"),
        &["episode", "null_return", "expert_return"],
        &rows,
    )?;
    Ok(ScoreRefs {
        null_mean: null_rep.mean,
        expert_mean: expert_rep.mean,
    })
}

// ---------------------------------------------------------------------------
// Arm execution
// ---------------------------------------------------------------------------

fn run_offline_arm(
    cfg: &ExperimentConfig,
    prep: &SharedPrep,
    arm: &Arm,
    dir: &Path,
    method: CloneMethod,
    n_trajectories: usize,
    torso: &[usize],
    sigma_override: Option<f64>,
) -> Result<(Value, Vec<String>)> {
    let mut env = make_env(&cfg.env)?;
    let spec = env.spec().clone();
    let dataset_seed = cfg.dataset_seed(n_trajectories, arm.seed_index);
    let dataset = build_dataset(
        &*prep.expert,
        env.as_mut(),
        &cfg.dataset.spec(n_trajectories),
        dataset_seed,
    )?;
    let mut aug = cfg.aug.clone();
    aug.relabel = method.relabels();
    if let Some(sigma) = sigma_override {
        aug.sigma_s = sigma;
    }
    let obs = ObsSpec::new(
        cfg.student_channels.clone(),
        spec.layout.clone(),
        cfg.grid_embed,
    );
    let policy = PolicyNet::new(
        obs,
        torso.to_vec(),
        spec.action_dim,
        &mut rng_from(arm.seed, "student-init", 0),
    )?;
    let report = train_offline(
        policy,
        method,
        &dataset,
        &*prep.expert,
        env.as_mut(),
        &cfg.train,
        &aug,
        &prep.val_set,
        &prep.test_set,
        arm.seed,
    )?;

    let curve_rows: Vec<Vec<String>> = report
        .curve
        .iter()
        .map(|p| vec![p.iter.to_string(), fstr(p.val_mean), fstr(p.val_ci95)])
        .collect();
    write_csv(
        &dir.join("curve.csv"),
        &["iter", "val_mean", "val_ci95"],
        &curve_rows,
    )?;
    write_csv(
        &dir.join("test_returns.csv"),
        &["episode", "return"],
        &returns_rows(&report.test.returns),
    )?;

    if cfg.kind == ExperimentKind::NoiseGrid {
        let mut noise_rows = Vec::new();
        let mut return_rows = Vec::new();
        for &sigma in &cfg.eval_noise_grid {
            let rep: EvalReport = evaluate(
                &report.policy,
                env.as_mut(),
                &prep.test_set,
                sigma,
                EvalMode::Stochastic,
            );
            noise_rows.push(vec![
                fstr(sigma),
                fstr(rep.mean),
                fstr(rep.ci95),
                fstr(prep.test_refs.score(rep.mean)),
            ]);
            for (i, r) in rep.returns.iter().enumerate() {
                return_rows.push(vec![fstr(sigma), i.to_string(), fstr(*r)]);
            }
        }
        write_csv(
            &dir.join("noise.csv"),
            &["eval_sigma", "test_mean", "test_ci95", "test_score"],
            &noise_rows,
        )?;
        write_csv(
            &dir.join("noise_returns.csv"),
            &["eval_sigma", "episode", "return"],
            &return_rows,
        )?;
    }

    let test_score = prep.test_refs.score(report.test.mean);
    let effective_sigma = match method {
        CloneMethod::Bc => None,
        _ => Some(aug.sigma_s),
    };
    let summary = json!({
        "method": method.as_str(),
        "n_trajectories": n_trajectories,
        "torso": torso_tag(torso),
        "sigma_s": effective_sigma,
        "seed_index": arm.seed_index,
        "best_iter": report.best_iter,
        "iters_run": report.iters_run,
        "best_val_mean": report.best_val_mean,
        "test_mean": report.test.mean,
        "test_ci95": report.test.ci95,
        "test_score": test_score,
    });
    let row = vec![
        arm.id.clone(),
        method.as_str().to_string(),
        n_trajectories.to_string(),
        torso_tag(torso),
        effective_sigma.map(fstr).unwrap_or_default(),
        arm.seed_index.to_string(),
        report.best_iter.to_string(),
        report.iters_run.to_string(),
        fstr(report.best_val_mean),
        fstr(report.test.mean),
        fstr(report.test.ci95),
        fstr(test_score),
    ];
    Ok((summary, row))
}

fn run_dagger_arm(
    cfg: &ExperimentConfig,
    prep: &SharedPrep,
    arm: &Arm,
    dir: &Path,
    variant: &super::config::DaggerVariant,
) -> Result<(Value, Vec<String>)> {
    let base = cfg.dagger.clone().expect("validated dagger section");
    let dcfg = DaggerConfig {
        objective: variant.objective,
        aug: variant.aug.clone(),
        ..base
    };
    let report = dagger_run(&cfg.env, &*prep.expert, &dcfg, arm.seed)?;
    let eval_set = make_instance_set(arm.seed, Split::Validation, dcfg.eval_size);
    let refs = arm_refs(&*prep.expert, &cfg.env, &eval_set, dir)?;

    write_csv(
        &dir.join("curve.csv"),
        &ONLINE_CURVE_HEADER,
        &online_curve_rows(&report.curve, arm.seed, &variant.tag),
    )?;
    let mut env = make_env(&cfg.env)?;
    let final_rep = evaluate(
        &report.student,
        env.as_mut(),
        &eval_set,
        0.0,
        EvalMode::MeanAction,
    );
    write_csv(
        &dir.join("final_returns.csv"),
        &["episode", "return"],
        &returns_rows(&final_rep.returns),
    )?;

    let last = report.curve.last().expect("curve has at least one point");
    let steps_to_cross = report
        .curve
        .iter()
        .find(|p| refs.score(p.eval_mean) >= CROSSING_SCORE)
        .map(|p| p.env_steps);
    let summary = json!({
        "tag": variant.tag,
        "objective": objective_str(variant.objective),
        "seed_index": arm.seed_index,
        "env_steps": report.env_steps,
        "learner_steps": report.learner_steps,
        "updates_per_timestep": report.updates_per_timestep,
        "expert_action_fraction": report.expert_action_fraction,
        "final_val_mean": last.eval_mean,
        "final_val_score": refs.score(last.eval_mean),
        "steps_to_90": steps_to_cross,
        "refs": refs,
    });
    let row = vec![
        arm.id.clone(),
        variant.tag.clone(),
        objective_str(variant.objective).to_string(),
        arm.seed_index.to_string(),
        report.env_steps.to_string(),
        report.learner_steps.to_string(),
        fstr(report.updates_per_timestep),
        fstr(report.expert_action_fraction),
        fstr(last.eval_mean),
        fstr(refs.score(last.eval_mean)),
        steps_to_cross.map(|s| s.to_string()).unwrap_or_default(),
    ];
    Ok((summary, row))
}

fn run_kickstart_arm(
    cfg: &ExperimentConfig,
    prep: &SharedPrep,
    arm: &Arm,
    dir: &Path,
    lambda: f64,
) -> Result<(Value, Vec<String>)> {
    let base = cfg.kickstart.clone().expect("validated kickstart section");
    let kcfg = KickstartConfig { lambda, ..base };
    let report = kickstart_run(&cfg.env, Some(&*prep.expert), &kcfg, arm.seed)?;
    let eval_set = make_instance_set(arm.seed, Split::Validation, kcfg.eval_size);
    let refs = arm_refs(&*prep.expert, &cfg.env, &eval_set, dir)?;

    let tag = format!("lam{}", super::config::fmt_float(lambda));
    write_csv(
        &dir.join("curve.csv"),
        &ONLINE_CURVE_HEADER,
        &online_curve_rows(&report.curve, arm.seed, &tag),
    )?;
    let mut env = make_env(&cfg.env)?;
    let test_rep = evaluate(
        &report.actor,
        env.as_mut(),
        &prep.test_set,
        0.0,
        EvalMode::MeanAction,
    );
    write_csv(
        &dir.join("test_returns.csv"),
        &["episode", "return"],
        &returns_rows(&test_rep.returns),
    )?;

    let last = report.curve.last().expect("curve has at least one point");
    let test_score = prep.test_refs.score(test_rep.mean);
    let summary = json!({
        "lambda": lambda,
        "seed_index": arm.seed_index,
        "env_steps": report.env_steps,
        "learner_steps": report.learner_steps,
        "final_val_mean": last.eval_mean,
        "final_val_score": refs.score(last.eval_mean),
        "test_mean": test_rep.mean,
        "test_ci95": test_rep.ci95,
        "test_score": test_score,
        "refs": refs,
    });
    let row = vec![
        arm.id.clone(),
        fstr(lambda),
        arm.seed_index.to_string(),
        report.env_steps.to_string(),
        report.learner_steps.to_string(),
        fstr(last.eval_mean),
        fstr(refs.score(last.eval_mean)),
        fstr(test_rep.mean),
        fstr(test_rep.ci95),
        fstr(test_score),
    ];
    Ok((summary, row))
}

fn run_arm(
    cfg: &ExperimentConfig,
    prep: &SharedPrep,
    arm: &Arm,
    dir: &Path,
) -> Result<(Value, Vec<String>)> {
    std::fs::create_dir_all(dir)?;
    match &arm.spec {
        ArmSpec::Offline {
            method,
            n_trajectories,
            torso,
            sigma_s,
        } => run_offline_arm(cfg, prep, arm, dir, *method, *n_trajectories, torso, *sigma_s),
        ArmSpec::Dagger { variant } => run_dagger_arm(cfg, prep, arm, dir, variant),
        ArmSpec::Kickstart { lambda } => run_kickstart_arm(cfg, prep, arm, dir, *lambda),
    }
}

// ---------------------------------------------------------------------------
// Selection
// ---------------------------------------------------------------------------

fn group_mean(records: &[ArmRecord], prefix: &str, field: &str) -> Option<f64> {
    let values: Vec<f64> = records
        .iter()
        .filter(|r| r.status == "ok" && r.id.starts_with(prefix))
        .filter_map(|r| r.summary.as_ref()?.get(field)?.as_f64())
        .collect();
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Pick the sweep winner by highest seed-averaged validation mean; ties keep
/// the earliest grid value.
fn select(cfg: &ExperimentConfig, records: &[ArmRecord]) -> Option<Selection> {
    let (groups, val_field, rule): (Vec<(String, f64)>, &str, &str) = match cfg.kind {
        ExperimentKind::SigmaSAblation => (
            cfg.sigma_s_grid
                .iter()
                .map(|&s| (format!("apc-sig{}-", super::config::fmt_float(s)), s))
                .collect(),
            "best_val_mean",
            "max seed-averaged best validation mean",
        ),
        ExperimentKind::Kickstart => (
            cfg.lambda_grid
                .iter()
                .filter(|&&l| l > 0.0)
                .map(|&l| (format!("lam{}-", super::config::fmt_float(l)), l))
                .collect(),
            "final_val_mean",
            "max seed-averaged final validation mean",
        ),
        _ => return None,
    };
    let mut best: Option<Selection> = None;
    for (prefix, parameter) in groups {
        let Some(validation_mean) = group_mean(records, &prefix, val_field) else {
            continue;
        };
        if best
            .as_ref()
            .map_or(true, |b| validation_mean > b.validation_mean)
        {
            let test_score_mean = group_mean(records, &prefix, "test_score").unwrap_or(f64::NAN);
            best = Some(Selection {
                rule: rule.to_string(),
                group: prefix.trim_end_matches('-').to_string(),
                parameter,
                validation_mean,
                test_score_mean,
            });
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

fn fresh_experiment_dir(out_root: &Path, name: &str) -> Result<PathBuf> {
    let dir = out_root.join(name);
    if dir.exists() {
        let owned = dir.join("manifest.json").exists()
            || std::fs::read_dir(&dir)?.next().is_none();
        if !owned {
            return Err(Error::Config(format!(
                "refusing to overwrite {}: not an experiment directory (no manifest.json)",
                dir.display()
            )));
        }
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::create_dir_all(dir.join("arms"))?;
    Ok(dir)
}

/// Run every (filtered) arm of `cfg` and write the artifact directory,
/// returning its path. Arm failures are recorded in the manifest rather than
/// aborting the experiment; completed arm outputs stay on disk.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<PathBuf> {
    cfg.validate()?;
    let mut arms = cfg.arms();
    if let Some(filter) = &opts.arm_filter {
        arms.retain(|a| a.id.contains(filter.as_str()));
        if arms.is_empty() {
            return Err(Error::Config(format!(
                "arm filter {filter:?} matched no arms"
            )));
        }
    }
    let dir = fresh_experiment_dir(&opts.out_root, &cfg.name)?;
    let prep = prepare(cfg)?;

    let refs_rows: Vec<Vec<String>> = prep
        .null_returns
        .iter()
        .zip(&prep.expert_returns)
        .enumerate()
        .map(|(i, (n, e))| vec![i.to_string(), fstr(*n), fstr(*e)])
        .collect();
    write_csv(
        &dir.join("refs_returns.csv"),
        &["episode", "null_return", "expert_return"],
        &refs_rows,
    )?;

    // Arms pull work from a shared queue; results land in their config-order
    // slot so output never depends on completion order.
    let queue: Mutex<VecDeque<usize>> = Mutex::new((0..arms.len()).collect());
    let results: Mutex<Vec<Option<(ArmRecord, Option<Vec<String>>)>>> =
        Mutex::new((0..arms.len()).map(|_| None).collect());
    let worker = |_worker_id: usize| loop {
        let Some(index) = queue.lock().expect("queue lock").pop_front() else {
            break;
        };
        let arm = &arms[index];
        let arm_dir = dir.join("arms").join(&arm.id);
        let outcome = run_arm(cfg, &prep, arm, &arm_dir);
        let entry = match outcome {
            Ok((summary, row)) => (
                ArmRecord {
                    id: arm.id.clone(),
                    seed: arm.seed,
                    status: "ok".into(),
                    error: None,
                    summary: Some(summary),
                },
                Some(row),
            ),
            Err(e) => (
                ArmRecord {
                    id: arm.id.clone(),
                    seed: arm.seed,
                    status: "failed".into(),
                    error: Some(e.to_string()),
                    summary: None,
                },
                None,
            ),
        };
        results.lock().expect("results lock")[index] = Some(entry);
    };
    let threads = opts.threads.max(1).min(arms.len());
    if threads <= 1 {
        worker(0);
    } else {
        std::thread::scope(|scope| {
            for w in 0..threads {
                scope.spawn(move || worker(w));
            }
        });
    }

    let mut records = Vec::with_capacity(arms.len());
    let mut rows = Vec::new();
    for slot in results.into_inner().expect("results lock") {
        let (record, row) = slot.expect("every queued arm produces a result");
        if let Some(row) = row {
            rows.push(row);
        }
        records.push(record);
    }
    write_csv(&dir.join("summary.csv"), summary_header(cfg.kind), &rows)?;

    let manifest = Manifest {
        name: cfg.name.clone(),
        kind: cfg.kind.as_str().to_string(),
        env: cfg.env.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.config_hash(),
        score_refs: prep.test_refs,
        teacher: prep.teacher_info.clone(),
        config: cfg.clone(),
        arms: records,
        selection: None,
    };
    let manifest = Manifest {
        selection: select(cfg, &manifest.arms),
        ..manifest
    };
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(dir)
}

/// Parse a previously written manifest.
pub fn read_manifest(dir: &Path) -> Result<Value> {
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Err(Error::Config(format!(
            "{} has no manifest.json (not an experiment directory)",
            dir.display()
        )));
    }
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
