//! Temporary timing/quality probe; delete before finishing.
use apc_lab::bench::eval::{evaluate, EvalMode, ScoreRefs};
use apc_lab::cloning::{
    apc_minibatch_loss, train_offline, AugmentationSpec, CloneMethod, TrainConfig,
};
use apc_lab::data::{build_dataset, Chunk, DatasetSpec, NoiseTier};
use apc_lab::envs::{make_env, make_instance_set, Channel, Split};
use apc_lab::experts::LqrExpert;
use apc_lab::numcore::{AdamConfig, AdamState};
use apc_lab::policy::{ObsSpec, PolicyNet};
use apc_lab::seeding::rng_from;
use std::time::Instant;

fn student(hidden: Vec<usize>, seed: u64) -> PolicyNet {
    let env = make_env("lqr2d").unwrap();
    let spec = ObsSpec::new(vec![Channel::State], env.spec().layout.clone(), 0);
    let mut rng = rng_from(seed, "student-init", 0);
    PolicyNet::new(spec, hidden, env.spec().action_dim, &mut rng).unwrap()
}

#[test]
#[ignore]
fn probe_iteration_cost() {
    let mut env = make_env("lqr2d").unwrap();
    let expert = LqrExpert::default_2d();
    let ds = build_dataset(
        &expert,
        env.as_mut(),
        &DatasetSpec::full(10, NoiseTier::Deterministic),
        0,
    )
    .unwrap();
    for hidden in [vec![32, 32], vec![64, 64]] {
        let mut policy = student(hidden.clone(), 0);
        let mut flat = policy.flat_params();
        let mut adam = AdamState::new(flat.len(), AdamConfig::with_lr(1e-4));
        let mut rng_b = rng_from(0, "b", 0);
        let mut rng_a = rng_from(0, "a", 0);
        let aug = AugmentationSpec::default(); // sigma_s 0.1, M 10
        let t0 = Instant::now();
        let iters = 100;
        for _ in 0..iters {
            use rand::Rng;
            let batch: Vec<&Chunk> = (0..64)
                .map(|_| &ds.chunks[rng_b.gen_range(0..ds.chunks.len())])
                .collect();
            let (_, g) =
                apc_minibatch_loss(&policy, &expert, &batch, &aug, &*env, &mut rng_a).unwrap();
            adam.step(&mut flat, &g).unwrap();
            policy.set_flat_params(&flat).unwrap();
        }
        let dt = t0.elapsed().as_secs_f64();
        println!("hidden {hidden:?}: {:.2} ms/iter (APC M=10 L=64)", dt / iters as f64 * 1e3);
        // And the eval cost (50 episodes x 200 steps).
        let val = make_instance_set(0, Split::Validation, 50);
        let t0 = Instant::now();
        let _ = evaluate(&policy, env.as_mut(), &val, 0.2, EvalMode::Stochastic);
        println!("  eval50: {:.1} ms", t0.elapsed().as_secs_f64() * 1e3);
    }
}

#[test]
#[ignore]
fn probe_apc_two_trajectories() {
    let mut env = make_env("lqr2d").unwrap();
    let expert = LqrExpert::default_2d();
    let ds = build_dataset(
        &expert,
        env.as_mut(),
        &DatasetSpec::full(2, NoiseTier::Deterministic),
        0,
    )
    .unwrap();
    let val = make_instance_set(0, Split::Validation, 50);
    let test = make_instance_set(0, Split::Test, 150);
    let refs = ScoreRefs::measure(&expert, env.as_mut(), &test);
    println!("refs: null {} expert {}", refs.null_mean, refs.expert_mean);
    // What does the noisy expert itself score?
    let e02 = evaluate(&expert, env.as_mut(), &test, 0.2, EvalMode::Stochastic);
    println!("expert@0.2 score {:.4}", refs.score(e02.mean));

    for (tag, cfg) in [
        (
            "K3000",
            TrainConfig {
                max_iters: 3000,
                eval_period: 150,
                patience: 8,
                ..Default::default()
            },
        ),
        (
            "K8000",
            TrainConfig {
                max_iters: 8000,
                eval_period: 250,
                patience: 8,
                ..Default::default()
            },
        ),
    ] {
        let t0 = Instant::now();
        let rep = train_offline(
            student(vec![32, 32], 5),
            CloneMethod::Apc,
            &ds,
            &expert,
            env.as_mut(),
            &cfg,
            &AugmentationSpec::default(),
            &val,
            &test,
            7,
        )
        .unwrap();
        println!(
            "{tag}: {:.1}s, iters {}, best@{} val {:.1}, test score {:.4}",
            t0.elapsed().as_secs_f64(),
            rep.iters_run,
            rep.best_iter,
            rep.best_val_mean,
            refs.score(rep.test.mean)
        );
    }
}

#[test]
#[ignore]
fn probe_pure_distillation() {
    use apc_lab::envs::{make_env, Observation};
    use apc_lab::experts::train::expert_obs_spec;
    use apc_lab::experts::{A2cConfig, A2cLearner, Expert, LqrExpert};
    use apc_lab::numcore::Matrix;
    use apc_lab::online::{kickstart_run, KickstartConfig};
    use apc_lab::policy::{GaussianActor, PolicyNet};

    let teacher = LqrExpert::default_2d();
    let probes = Matrix::from_rows(&[
        vec![0.6, -0.3, 0.1, -0.05],
        vec![-0.5, 0.4, -0.15, 0.2],
        vec![0.2, 0.7, 0.0, -0.25],
        vec![-0.7, -0.55, 0.3, 0.1],
    ]);
    let gap = |actor: &PolicyNet| {
        let tm = teacher.mean_batch(&probes);
        let mut total = 0.0;
        let mut sig = 0.0;
        for r in 0..probes.rows() {
            let obs = Observation::state_only(probes.row(r).to_vec());
            let head = GaussianActor::head(actor, &obs);
            sig += head.sigma.iter().sum::<f64>() / 2.0 / probes.rows() as f64;
            for (a, b) in head.mu.iter().zip(tm.row(r)) {
                total += (a - b).powi(2);
            }
        }
        (total.sqrt(), sig)
    };
    for lr in [1e-3, 3e-3] {
        for steps in [4000u64, 20000] {
            let cfg = KickstartConfig {
                lambda: 1.0,
                task_weight: 0.0,
                a2c: A2cConfig {
                    actor_lr: lr,
                    actor_hidden: vec![16],
                    critic_hidden: vec![16],
                    ..A2cConfig::default()
                },
                learner_steps: steps,
                eval_period: steps,
                eval_size: 5,
                ..Default::default()
            };
            let t0 = std::time::Instant::now();
            let rep = kickstart_run("lqr2d", Some(&teacher), &cfg, 99).unwrap();
            let (g, s) = gap(&rep.actor);
            println!(
                "lr {lr} steps {steps}: gap {g:.3} mean-sigma {s:.3} eval {:.1} -> {:.1}  ({:?})",
                rep.curve.first().unwrap().eval_mean,
                rep.curve.last().unwrap().eval_mean,
                t0.elapsed()
            );
        }
    }
}

#[test]
#[ignore]
fn probe_dagger_halving() {
    use apc_lab::bench::eval::ScoreRefs;
    use apc_lab::cloning::AugmentationSpec;
    use apc_lab::data::RateLimiterConfig;
    use apc_lab::envs::{make_env, make_instance_set, Split};
    use apc_lab::experts::LqrExpert;
    use apc_lab::online::{dagger_run, DaggerConfig, DaggerObjective};

    let expert = LqrExpert::default_2d();
    let mut env = make_env("lqr2d").unwrap();
    let set = make_instance_set(7, Split::Validation, 20);
    let refs = ScoreRefs::measure(&expert, env.as_mut(), &set);
    println!("refs null {} expert {}", refs.null_mean, refs.expert_mean);

    let apc_aug = Some(AugmentationSpec {
        sigma_s: 0.1,
        m: 10,
        relabel: true,
        ..Default::default()
    });
    for (tag, objective, aug) in [
        ("plain-ce", DaggerObjective::AnalyticCe, None),
        ("apc-ce", DaggerObjective::AnalyticCe, apc_aug.clone()),
        ("plain-lp", DaggerObjective::LogprobOnMean, None),
        ("apc-lp", DaggerObjective::LogprobOnMean, apc_aug.clone()),
    ] {
        for seed in [0u64, 1, 2] {
            let cfg = DaggerConfig {
                beta: 0.0,
                objective,
                aug: aug.clone(),
                env_step_budget: 600,
                eval_period_env_steps: 10,
                eval_size: 20,
                learning_rate: 1e-4,
                student_hidden: vec![16, 16],
                rate: RateLimiterConfig {
                    batch_size: 8,
                    ..Default::default()
                },
                ..Default::default()
            };
            let t0 = std::time::Instant::now();
            let rep = dagger_run("lqr2d", &expert, &cfg, seed).unwrap();
            let scores: Vec<(u64, f64)> = rep
                .curve
                .iter()
                .map(|p| (p.env_steps, refs.score(p.eval_mean)))
                .collect();
            let cross = scores.iter().find(|(_, s)| *s >= 0.9).map(|(e, _)| *e);
            let auc = scores.iter().map(|(_, s)| s).sum::<f64>() / scores.len() as f64;
            println!(
                "{tag} seed {seed}: cross90 {cross:?} final {:.6} auc {:.6} upt {:.2} ({:?}) scores {:?}",
                scores.last().unwrap().1,
                auc,
                rep.updates_per_timestep,
                t0.elapsed(),
                scores
                    .iter()
                    .map(|(e, s)| format!("{e}:{s:.2}"))
                    .collect::<Vec<_>>()
            );
        }
    }
}

#[test]
#[ignore]
fn probe_kickstart_medium() {
    use apc_lab::bench::eval::{evaluate, EvalMode, ScoreRefs};
    use apc_lab::envs::{make_env, make_instance_set, Split};
    use apc_lab::experts::{train_expert, Tier, TierTrainConfig};
    use apc_lab::online::{kickstart_run, KickstartConfig};

    let t0 = std::time::Instant::now();
    let tiers = train_expert("pointmass", &TierTrainConfig::default()).unwrap();
    println!(
        "tiers trained in {:?}; converged {} null {}",
        t0.elapsed(),
        tiers.converged_return,
        tiers.null_return
    );
    let medium = tiers
        .tiers
        .iter()
        .find(|t| t.tier == Tier::Medium)
        .unwrap();
    let mut env = make_env("pointmass").unwrap();
    let test_set = make_instance_set(1234, Split::Test, 50);
    let refs = ScoreRefs::measure(&medium.expert, env.as_mut(), &test_set);
    println!(
        "medium meta score {} measured test refs: null {} medium {}",
        medium.expert.meta().measured_score,
        refs.null_mean,
        refs.expert_mean
    );

    let arms: Vec<(f64, Option<apc_lab::cloning::AugmentationSpec>)> = vec![
        (0.0, None),
        (3.0, Some(apc_lab::cloning::AugmentationSpec { sigma_s: 0.1, m: 5, relabel: true, ..Default::default() })),
        (10.0, Some(apc_lab::cloning::AugmentationSpec { sigma_s: 0.1, m: 5, relabel: true, ..Default::default() })),
    ];
    for (lambda, aug) in arms {
        for seed in [0u64, 1, 2] {
            let cfg = KickstartConfig {
                lambda,
                aug: aug.clone(),
                learner_steps: 80_000,
                eval_period: 5_000,
                eval_size: 20,
                ..Default::default()
            };
            // Match the expert-training hyperparameters.
            let cfg = KickstartConfig {
                a2c: apc_lab::experts::A2cConfig {
                    actor_lr: 1e-4,
                    ..apc_lab::experts::A2cConfig::default()
                },
                ..cfg
            };
            let t1 = std::time::Instant::now();
            let teacher = if lambda > 0.0 {
                Some(&medium.expert as &dyn apc_lab::experts::Expert)
            } else {
                None
            };
            let rep = kickstart_run("pointmass", teacher, &cfg, seed).unwrap();
            let curve: Vec<String> = rep
                .curve
                .iter()
                .map(|p| format!("{}:{:.2}", p.learner_steps, refs.score(p.eval_mean)))
                .collect();
            println!(
                "lambda {lambda} aug {} seed {seed} ({:?}): {:?}",
                cfg.aug.is_some(),
                t1.elapsed(),
                curve
            );
            // Final test evaluation (curve scores above are on the
            // validation split; this one is the test mean).
            let test_rep = evaluate(&rep.actor, env.as_mut(), &test_set, 0.0, EvalMode::MeanAction);
            println!(
                "  -> final test score {:.3} (mean {:.1})",
                refs.score(test_rep.mean),
                test_rep.mean
            );
        }
    }
}

#[test]
#[ignore]
fn probe_offline_criteria() {
    use apc_lab::bench::config::ExperimentConfig;
    use apc_lab::bench::runner::{read_manifest, run_experiment, RunOptions};

    let root = std::path::PathBuf::from("/tmp/probe_offline");
    let _ = std::fs::remove_dir_all(&root);

    let lqr_train = r#"
master_seed = 0
student_hidden = [16, 16]
validation_size = 20
test_size = 50

[train]
max_iters = 4000
eval_period = 200
batch_chunks = 16
patience = 8
"#;

    let run = |name: &str, toml: String| -> serde_json::Value {
        let cfg = ExperimentConfig::from_toml_str(&toml).unwrap();
        let t0 = std::time::Instant::now();
        let dir = run_experiment(&cfg, &RunOptions::new(&root)).unwrap();
        println!("== {name} done in {:?}", t0.elapsed());
        read_manifest(&dir).unwrap()
    };
    let group_scores = |m: &serde_json::Value, prefix: &str, field: &str| -> Vec<f64> {
        m["arms"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|a| a["id"].as_str().unwrap().starts_with(prefix))
            .map(|a| a["summary"][field].as_f64().unwrap())
            .collect()
    };
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    // A: criterion 6 — offline sweep bc vs apc over n.
    let m = run(
        "sweep",
        format!(
            r#"
kind = "offline_sweep"
name = "probe-sweep"
env = "lqr2d"
methods = ["bc", "apc"]
trajectory_grid = [1, 2, 3, 5, 10]
{lqr_train}
"#
        ),
    );
    for n in [1, 2, 3, 5, 10] {
        let bc = group_scores(&m, &format!("bc-n{n}-s"), "test_score");
        let apc = group_scores(&m, &format!("apc-n{n}-s"), "test_score");
        println!(
            "A n={n}: bc avg {:.4} {:?} | apc avg {:.4} {:?}",
            avg(&bc),
            bc.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>(),
            avg(&apc),
            apc.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>()
        );
    }

    // B: criterion 7 — compression drops.
    let m = run(
        "compress",
        format!(
            r#"
kind = "compression"
name = "probe-compress"
env = "lqr2d"
methods = ["bc", "apc"]
n_trajectories = 10
torso_grid = [[32, 32], [8]]
{lqr_train}
"#
        ),
    );
    for method in ["bc", "apc"] {
        let big = avg(&group_scores(&m, &format!("{method}-t32x32-s"), "test_score"));
        let small = avg(&group_scores(&m, &format!("{method}-t8-s"), "test_score"));
        println!("B {method}: [32,32] {big:.4} [8] {small:.4} drop {:.4}", big - small);
    }

    // C: criterion 12 — sigma_s ablation selection.
    let m = run(
        "sigma",
        format!(
            r#"
kind = "sigma_s_ablation"
name = "probe-sigma"
env = "lqr2d"
n_trajectories = 10
sigma_s_grid = [0.0001, 0.001, 0.01, 0.05, 0.1, 1.0, 10.0]
{lqr_train}

[aug]
m = 5
"#
        ),
    );
    for s in ["0p0001", "0p001", "0p01", "0p05", "0p1", "1", "10"] {
        let val = group_scores(&m, &format!("apc-sig{s}-s"), "best_val_mean");
        let test = group_scores(&m, &format!("apc-sig{s}-s"), "test_score");
        println!("C sig {s}: val avg {:.4} test avg {:.4}", avg(&val), avg(&test));
    }
    println!("C selection: {}", m["selection"]);

    // D: criterion 11 — noise grid.
    let m = run(
        "noise",
        format!(
            r#"
kind = "noise_grid"
name = "probe-noise"
env = "lqr2d"
methods = ["bc", "apc"]
n_trajectories = 10
{lqr_train}
"#
        ),
    );
    let dir = root.join("probe-noise");
    for method in ["bc", "apc"] {
        for sigma in ["0", "0.2", "0.5", "1"] {
            let mut scores = Vec::new();
            for s in 0..3 {
                let text =
                    std::fs::read_to_string(dir.join(format!("arms/{method}-s{s}/noise.csv")))
                        .unwrap();
                for line in text.lines().skip(1) {
                    let cells: Vec<&str> = line.split(',').collect();
                    if cells[0] == sigma {
                        scores.push(cells[3].parse::<f64>().unwrap());
                    }
                }
            }
            println!("D {method} sigma {sigma}: avg {:.4}", avg(&scores));
        }
    }
    let _ = m;
}

#[test]
#[ignore]
fn probe_noise_candidates() {
    use apc_lab::bench::config::ExperimentConfig;
    use apc_lab::bench::runner::{run_experiment, RunOptions};

    let root = std::path::PathBuf::from("/tmp/probe_noise2");
    let _ = std::fs::remove_dir_all(&root);
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    for (name, n, hidden) in [
        ("noise-n5", 5, "[16, 16]"),
        ("noise-n3", 3, "[16, 16]"),
        ("noise-n10-tiny", 10, "[8, 8]"),
    ] {
        let toml = format!(
            r#"
kind = "noise_grid"
name = "{name}"
env = "lqr2d"
methods = ["bc", "apc"]
n_trajectories = {n}
master_seed = 0
student_hidden = {hidden}
validation_size = 20
test_size = 50

[train]
max_iters = 4000
eval_period = 200
batch_chunks = 16
patience = 8
"#
        );
        let cfg = ExperimentConfig::from_toml_str(&toml).unwrap();
        let t0 = std::time::Instant::now();
        let dir = run_experiment(&cfg, &RunOptions::new(&root)).unwrap();
        println!("== {name} done in {:?}", t0.elapsed());
        for method in ["bc", "apc"] {
            let mut by_sigma: Vec<(String, Vec<f64>)> = Vec::new();
            for s in 0..3 {
                let text =
                    std::fs::read_to_string(dir.join(format!("arms/{method}-s{s}/noise.csv")))
                        .unwrap();
                for (i, line) in text.lines().skip(1).enumerate() {
                    let cells: Vec<&str> = line.split(',').collect();
                    if s == 0 {
                        by_sigma.push((cells[0].to_string(), Vec::new()));
                    }
                    by_sigma[i].1.push(cells[3].parse().unwrap());
                }
            }
            let scores: Vec<String> = by_sigma
                .iter()
                .map(|(sig, v)| format!("{sig}:{:.4}", avg(v)))
                .collect();
            let clean = avg(&by_sigma[0].1);
            let worst = by_sigma.iter().map(|(_, v)| avg(v)).fold(f64::INFINITY, f64::min);
            println!("{name} {method}: {} drop {:.4}", scores.join(" "), clean - worst);
        }
    }
}

#[test]
#[ignore]
fn probe_privileged() {
    use apc_lab::bench::config::ExperimentConfig;
    use apc_lab::bench::runner::{read_manifest, run_experiment, RunOptions};

    let root = std::path::PathBuf::from("/tmp/probe_priv");
    let _ = std::fs::remove_dir_all(&root);
    let toml = r#"
kind = "privileged"
name = "priv-cal"
env = "pointmass"
methods = ["bc", "apc"]
trajectory_grid = [20, 50]
n_seeds = 1
student_channels = ["common", "grid"]
grid_embed = 16
student_hidden = [32, 32]
expert_tier = "high"
master_seed = 0
validation_size = 20
test_size = 50

[train]
max_iters = 3000
eval_period = 200
batch_chunks = 16
patience = 8

[aug]
sigma_s = 0.1
m = 10
"#;
    let cfg = ExperimentConfig::from_toml_str(toml).unwrap();
    let t0 = std::time::Instant::now();
    let dir = run_experiment(&cfg, &RunOptions::new(&root)).unwrap();
    println!("== priv-cal done in {:?}", t0.elapsed());
    let m = read_manifest(&dir).unwrap();
    for arm in m["arms"].as_array().unwrap() {
        let s = &arm["summary"];
        println!(
            "{}: score {:.4} best_iter {} iters {} val {:.2}",
            arm["id"].as_str().unwrap(),
            s["test_score"].as_f64().unwrap(),
            s["best_iter"],
            s["iters_run"],
            s["best_val_mean"].as_f64().unwrap(),
        );
    }
}

#[test]
#[ignore]
fn probe_privileged_sizing() {
    use apc_lab::bench::config::ExperimentConfig;
    use apc_lab::bench::runner::{read_manifest, run_experiment, RunOptions};

    let root = std::path::PathBuf::from("/tmp/probe_priv2");
    let _ = std::fs::remove_dir_all(&root);
    for (name, lr, iters, sigma, filter) in [
        ("p-lr3e4", 3e-4, 12000, 0.1, None),
        ("p-sig25", 3e-4, 12000, 0.25, Some("apc")),
    ] {
        let toml = format!(
            r#"
kind = "privileged"
name = "{name}"
env = "pointmass"
methods = ["bc", "apc"]
trajectory_grid = [20]
n_seeds = 1
student_channels = ["common", "grid"]
grid_embed = 16
student_hidden = [32, 32]
expert_tier = "high"
master_seed = 0
validation_size = 20
test_size = 50

[train]
learning_rate = {lr}
max_iters = {iters}
eval_period = 400
batch_chunks = 16
patience = 8

[aug]
sigma_s = {sigma}
m = 10
"#
        );
        let cfg = ExperimentConfig::from_toml_str(&toml).unwrap();
        let mut opts = RunOptions::new(&root);
        opts.arm_filter = filter.map(String::from);
        let t0 = std::time::Instant::now();
        let dir = run_experiment(&cfg, &opts).unwrap();
        println!("== {name} done in {:?}", t0.elapsed());
        let m = read_manifest(&dir).unwrap();
        for arm in m["arms"].as_array().unwrap() {
            let s = &arm["summary"];
            println!(
                "{} {}: score {:.4} best_iter {} iters {} val {:.2}",
                name,
                arm["id"].as_str().unwrap(),
                s["test_score"].as_f64().unwrap(),
                s["best_iter"],
                s["iters_run"],
                s["best_val_mean"].as_f64().unwrap(),
            );
        }
    }
}
