//! Experiment configuration: TOML-parsed, schema-validated experiment
//! definitions and their expansion into a deterministic arm list.
//!
//! A config names one experiment of a fixed kind plus the grids it sweeps;
//! every (grid point, seed index) pair becomes an arm with a stable string
//! identifier. Arm training seeds derive purely from (master seed, arm id),
//! so arms never share rng streams; dataset seeds derive from the
//! (trajectory count, seed index) pair only, so methods compared at the same
//! seed index train on identical datasets.

use serde::{Deserialize, Serialize};

use crate::cloning::{AugmentationSpec, CloneMethod, TrainConfig};
use crate::data::{DatasetMode, DatasetSpec, NoiseTier};
use crate::envs::{make_env, Channel};
use crate::experts::{Tier, TierTrainConfig};
use crate::online::{DaggerConfig, DaggerObjective, KickstartConfig, LAMBDA_GRID};
use crate::seeding::derive_seed;
use crate::{Error, Result};

/// The seven experiment families the runner knows how to execute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Test score vs dataset size, per cloning method (data-efficiency
    /// figure analogue).
    OfflineSweep,
    /// Train once per method at a fixed dataset size, evaluate across a grid
    /// of student action-noise levels (noise-sensitivity analogue).
    NoiseGrid,
    /// Sweep the augmentation noise scale for the relabeling method, select
    /// by validation, report on test (state-noise ablation analogue).
    SigmaSAblation,
    /// Sweep student torso sizes per method at a fixed dataset size
    /// (expert-compression figure analogue).
    Compression,
    /// Grid-observation students cloned from a full-state expert
    /// (privileged-transfer figure analogue).
    Privileged,
    /// Online DAgger variants at a fixed mixture rate (DAgger figure
    /// analogue).
    Dagger,
    /// RL with a λ-weighted distillation term vs from-scratch RL
    /// (kickstarting figure analogue).
    Kickstart,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::OfflineSweep,
        ExperimentKind::NoiseGrid,
        ExperimentKind::SigmaSAblation,
        ExperimentKind::Compression,
        ExperimentKind::Privileged,
        ExperimentKind::Dagger,
        ExperimentKind::Kickstart,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::OfflineSweep => "offline_sweep",
            ExperimentKind::NoiseGrid => "noise_grid",
            ExperimentKind::SigmaSAblation => "sigma_s_ablation",
            ExperimentKind::Compression => "compression",
            ExperimentKind::Privileged => "privileged",
            ExperimentKind::Dagger => "dagger",
            ExperimentKind::Kickstart => "kickstart",
        }
    }

    /// One-line description for `sweep-list`.
    pub fn describe(&self) -> &'static str {
        match self {
            ExperimentKind::OfflineSweep => {
                "test score vs trajectory count per cloning method (uses: trajectory_grid, methods, dataset, train, aug)"
            }
            ExperimentKind::NoiseGrid => {
                "evaluation noise robustness at fixed dataset size (uses: n_trajectories, methods, eval_noise_grid)"
            }
            ExperimentKind::SigmaSAblation => {
                "augmentation noise-scale sweep with validation selection (uses: n_trajectories, sigma_s_grid)"
            }
            ExperimentKind::Compression => {
                "student torso-size sweep per method (uses: n_trajectories, methods, torso_grid)"
            }
            ExperimentKind::Privileged => {
                "grid-observation students from a full-state expert (uses: trajectory_grid, methods, student_channels)"
            }
            ExperimentKind::Dagger => {
                "online DAgger variants (uses: dagger, dagger_variants)"
            }
            ExperimentKind::Kickstart => {
                "kickstarted RL vs scratch across a lambda grid (uses: kickstart, lambda_grid, teacher_tier, teacher)"
            }
        }
    }
}

/// Dataset settings minus the trajectory count, which the sweeps own.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSettings {
    pub expert_noise: NoiseTier,
    pub mode: DatasetMode,
    pub short_length: Option<usize>,
}

impl Default for DatasetSettings {
    fn default() -> Self {
        DatasetSettings {
            expert_noise: NoiseTier::Deterministic,
            mode: DatasetMode::Full,
            short_length: None,
        }
    }
}

impl DatasetSettings {
    pub fn spec(&self, n_trajectories: usize) -> DatasetSpec {
        DatasetSpec {
            n_trajectories,
            expert_noise: self.expert_noise,
            mode: self.mode,
            short_length: self.short_length,
        }
    }
}

/// One DAgger arm shape: a tag plus the objective/augmentation it runs with;
/// everything else comes from the shared base [`DaggerConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DaggerVariant {
    pub tag: String,
    #[serde(default = "default_objective")]
    pub objective: DaggerObjective,
    #[serde(default)]
    pub aug: Option<AugmentationSpec>,
}

fn default_objective() -> DaggerObjective {
    DaggerObjective::AnalyticCe
}

/// Default torso grid for compression sweeps.
pub fn default_torso_grid() -> Vec<Vec<usize>> {
    vec![
        vec![8],
        vec![16],
        vec![32, 8],
        vec![32, 32],
        vec![64, 64, 64],
    ]
}

/// Default evaluation action-noise grid.
pub fn default_eval_noise_grid() -> Vec<f64> {
    vec![0.0, 0.2, 0.5, 1.0]
}

/// Default augmentation noise-scale sweep grid.
pub fn default_sigma_s_grid() -> Vec<f64> {
    vec![1e-4, 1e-3, 1e-2, 0.05, 0.1, 1.0, 10.0]
}

fn default_n_seeds() -> usize {
    3
}

fn default_n_trajectories() -> usize {
    10
}

fn default_student_hidden() -> Vec<usize> {
    vec![32, 32]
}

fn default_student_channels() -> Vec<Channel> {
    vec![Channel::State]
}

fn default_grid_embed() -> usize {
    16
}

fn default_validation_size() -> usize {
    50
}

fn default_test_size() -> usize {
    150
}

fn default_lambda_grid() -> Vec<f64> {
    LAMBDA_GRID.to_vec()
}

fn default_teacher_tier() -> Tier {
    Tier::Medium
}

fn default_expert_tier() -> Tier {
    Tier::High
}

/// A fully specified experiment. Unknown keys are rejected; fields that a
/// kind does not use must be left at their defaults (validation enforces the
/// ones that would silently change meaning).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Artifact directory name: lowercase alphanumeric, `-`, `_`.
    pub name: String,
    /// Environment id (`lqr2d`, `pointmass`).
    pub env: String,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    /// Cloning methods for the offline kinds.
    #[serde(default)]
    pub methods: Vec<CloneMethod>,
    /// Dataset sizes for `offline_sweep`.
    #[serde(default)]
    pub trajectory_grid: Vec<usize>,
    /// Dataset size for the fixed-size kinds.
    #[serde(default = "default_n_trajectories")]
    pub n_trajectories: usize,
    #[serde(default)]
    pub dataset: DatasetSettings,
    #[serde(default)]
    pub train: TrainConfig,
    /// Augmentation used by relabeling/naive arms (`relabel` is forced per
    /// method; `sigma_s` is overridden by `sigma_s_ablation` arms).
    #[serde(default)]
    pub aug: AugmentationSpec,
    #[serde(default = "default_student_hidden")]
    pub student_hidden: Vec<usize>,
    /// Observation channels of the offline student.
    #[serde(default = "default_student_channels")]
    pub student_channels: Vec<Channel>,
    /// Width of the learned grid embedding (used only with a grid channel).
    #[serde(default = "default_grid_embed")]
    pub grid_embed: usize,
    /// Torso sizes for `compression`.
    #[serde(default = "default_torso_grid")]
    pub torso_grid: Vec<Vec<usize>>,
    /// Student action-noise levels for `noise_grid` evaluation.
    #[serde(default = "default_eval_noise_grid")]
    pub eval_noise_grid: Vec<f64>,
    /// Augmentation noise scales for `sigma_s_ablation`.
    #[serde(default = "default_sigma_s_grid")]
    pub sigma_s_grid: Vec<f64>,
    #[serde(default = "default_validation_size")]
    pub validation_size: usize,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    /// Reference-expert tier used for datasets and score anchors on trained
    /// expert environments (the analytic LQR expert is always converged).
    #[serde(default = "default_expert_tier")]
    pub expert_tier: Tier,
    /// Trained-expert budget (PointMass); ignored on analytic-expert
    /// environments.
    #[serde(default)]
    pub teacher: TierTrainConfig,
    /// Base settings for `dagger` arms (β, budget, rate limiter, ...).
    #[serde(default)]
    pub dagger: Option<DaggerConfig>,
    /// DAgger arm shapes.
    #[serde(default)]
    pub dagger_variants: Vec<DaggerVariant>,
    /// Base settings for `kickstart` arms (λ is overridden per arm).
    #[serde(default)]
    pub kickstart: Option<KickstartConfig>,
    /// Distillation weights for `kickstart`; include 0 for a scratch arm.
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    /// Teacher tier for `kickstart`.
    #[serde(default = "default_teacher_tier")]
    pub teacher_tier: Tier,
}

/// Work assigned to one arm.
#[derive(Clone, Debug, PartialEq)]
pub enum ArmSpec {
    Offline {
        method: CloneMethod,
        n_trajectories: usize,
        torso: Vec<usize>,
        /// `sigma_s_ablation` override of `aug.sigma_s`.
        sigma_s: Option<f64>,
    },
    Dagger { variant: DaggerVariant },
    Kickstart { lambda: f64 },
}

/// One runnable arm: stable id, derived training seed, seed index (shared
/// across methods for dataset pairing), and its work spec.
#[derive(Clone, Debug, PartialEq)]
pub struct Arm {
    pub id: String,
    pub seed: u64,
    pub seed_index: u64,
    pub spec: ArmSpec,
}

/// Compact, filename-safe float formatting for arm ids (`0.05`, `10`).
pub fn fmt_float(x: f64) -> String {
    let s = format!("{x}");
    s.replace('.', "p").replace('-', "m")
}

/// Filename-safe tag for a torso shape: `[32, 8]` → `32x8`.
pub fn torso_tag(torso: &[usize]) -> String {
    torso
        .iter()
        .map(|u| u.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '_')
}

impl ExperimentConfig {
    /// Parse from TOML text, rejecting unknown keys.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Hash of the canonical JSON encoding; changes iff any field changes.
    pub fn config_hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        super::json_hash(&value)
    }

    fn offline_kind(&self) -> bool {
        matches!(
            self.kind,
            ExperimentKind::OfflineSweep
                | ExperimentKind::NoiseGrid
                | ExperimentKind::SigmaSAblation
                | ExperimentKind::Compression
                | ExperimentKind::Privileged
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !valid_name(&self.name) {
            return Err(Error::Config(format!(
                "experiment name {:?} must be non-empty lowercase [a-z0-9-_]",
                self.name
            )));
        }
        let env = make_env(&self.env)?;
        if self.n_seeds == 0 {
            return Err(Error::Config("n_seeds must be positive".into()));
        }
        if self.validation_size == 0 || self.test_size == 0 {
            return Err(Error::Config("validation_size and test_size must be positive".into()));
        }
        if self.offline_kind() {
            self.train.validate()?;
            self.aug.validate()?;
            self.dataset.spec(self.n_trajectories).validate()?;
            if self.student_hidden.is_empty() {
                return Err(Error::Config("student_hidden must be non-empty".into()));
            }
            if self.student_channels.is_empty() {
                return Err(Error::Config("student_channels must be non-empty".into()));
            }
            if self.student_channels.contains(&Channel::Grid) {
                if env.spec().layout.grid.is_none() {
                    return Err(Error::Config(format!(
                        "student consumes a grid but environment {} has none",
                        self.env
                    )));
                }
                if self.grid_embed == 0 {
                    return Err(Error::Config(
                        "grid students need grid_embed >= 1".into(),
                    ));
                }
            }
        }
        match self.kind {
            ExperimentKind::OfflineSweep => {
                if self.methods.is_empty() {
                    return Err(Error::Config("offline_sweep needs a method list".into()));
                }
                if self.trajectory_grid.is_empty() {
                    return Err(Error::Config("offline_sweep needs trajectory_grid".into()));
                }
                for &n in &self.trajectory_grid {
                    self.dataset.spec(n).validate()?;
                }
            }
            ExperimentKind::NoiseGrid => {
                if self.methods.is_empty() {
                    return Err(Error::Config("noise_grid needs a method list".into()));
                }
                if self.eval_noise_grid.is_empty() {
                    return Err(Error::Config("noise_grid needs eval_noise_grid".into()));
                }
                if self.eval_noise_grid.iter().any(|s| !s.is_finite() || *s < 0.0) {
                    return Err(Error::Config(
                        "eval_noise_grid entries must be finite and >= 0".into(),
                    ));
                }
            }
            ExperimentKind::SigmaSAblation => {
                if self.sigma_s_grid.is_empty() {
                    return Err(Error::Config("sigma_s_ablation needs sigma_s_grid".into()));
                }
                if self.sigma_s_grid.iter().any(|s| !s.is_finite() || *s < 0.0) {
                    return Err(Error::Config(
                        "sigma_s_grid entries must be finite and >= 0".into(),
                    ));
                }
            }
            ExperimentKind::Compression => {
                if self.methods.is_empty() {
                    return Err(Error::Config("compression needs a method list".into()));
                }
                if self.torso_grid.is_empty() || self.torso_grid.iter().any(|t| t.is_empty()) {
                    return Err(Error::Config(
                        "compression needs a grid of non-empty torso shapes".into(),
                    ));
                }
            }
            ExperimentKind::Privileged => {
                if self.methods.is_empty() {
                    return Err(Error::Config("privileged needs a method list".into()));
                }
                if self.trajectory_grid.is_empty() {
                    return Err(Error::Config("privileged needs trajectory_grid".into()));
                }
                for &n in &self.trajectory_grid {
                    self.dataset.spec(n).validate()?;
                }
                if !self.student_channels.contains(&Channel::Grid)
                    || self.student_channels.contains(&Channel::Privileged)
                    || self.student_channels.contains(&Channel::State)
                {
                    return Err(Error::Config(
                        "privileged students must consume the grid and must not see \
                         privileged state channels"
                            .into(),
                    ));
                }
            }
            ExperimentKind::Dagger => {
                let base = self.dagger.as_ref().ok_or_else(|| {
                    Error::Config("dagger experiments need a [dagger] section".into())
                })?;
                base.validate()?;
                if self.dagger_variants.is_empty() {
                    return Err(Error::Config("dagger needs dagger_variants".into()));
                }
                let mut tags: Vec<&str> =
                    self.dagger_variants.iter().map(|v| v.tag.as_str()).collect();
                tags.sort_unstable();
                tags.dedup();
                if tags.len() != self.dagger_variants.len() {
                    return Err(Error::Config("dagger variant tags must be unique".into()));
                }
                for v in &self.dagger_variants {
                    if !valid_name(&v.tag) {
                        return Err(Error::Config(format!(
                            "dagger variant tag {:?} must be lowercase [a-z0-9-_]",
                            v.tag
                        )));
                    }
                    if let Some(aug) = &v.aug {
                        aug.validate()?;
                    }
                }
            }
            ExperimentKind::Kickstart => {
                let base = self.kickstart.as_ref().ok_or_else(|| {
                    Error::Config("kickstart experiments need a [kickstart] section".into())
                })?;
                base.validate()?;
                if self.lambda_grid.is_empty() {
                    return Err(Error::Config("kickstart needs lambda_grid".into()));
                }
                if self.lambda_grid.iter().any(|l| !l.is_finite() || *l < 0.0) {
                    return Err(Error::Config(
                        "lambda_grid entries must be finite and >= 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Expand into the deterministic, ordered arm list.
    pub fn arms(&self) -> Vec<Arm> {
        let mut arms = Vec::new();
        let mut push = |id: String, seed_index: u64, spec: ArmSpec| {
            let seed = derive_seed(self.master_seed, &id, 0);
            arms.push(Arm {
                id,
                seed,
                seed_index,
                spec,
            });
        };
        match self.kind {
            ExperimentKind::OfflineSweep => {
                for &n in &self.trajectory_grid {
                    for &method in &self.methods {
                        for s in 0..self.n_seeds as u64 {
                            push(
                                format!("{}-n{}-s{}", method.as_str(), n, s),
                                s,
                                ArmSpec::Offline {
                                    method,
                                    n_trajectories: n,
                                    torso: self.student_hidden.clone(),
                                    sigma_s: None,
                                },
                            );
                        }
                    }
                }
            }
            ExperimentKind::NoiseGrid => {
                for &method in &self.methods {
                    for s in 0..self.n_seeds as u64 {
                        push(
                            format!("{}-s{}", method.as_str(), s),
                            s,
                            ArmSpec::Offline {
                                method,
                                n_trajectories: self.n_trajectories,
                                torso: self.student_hidden.clone(),
                                sigma_s: None,
                            },
                        );
                    }
                }
            }
            ExperimentKind::Privileged => {
                for &n in &self.trajectory_grid {
                    for &method in &self.methods {
                        for s in 0..self.n_seeds as u64 {
                            push(
                                format!("{}-n{}-s{}", method.as_str(), n, s),
                                s,
                                ArmSpec::Offline {
                                    method,
                                    n_trajectories: n,
                                    torso: self.student_hidden.clone(),
                                    sigma_s: None,
                                },
                            );
                        }
                    }
                }
            }
            ExperimentKind::SigmaSAblation => {
                for &sigma in &self.sigma_s_grid {
                    for s in 0..self.n_seeds as u64 {
                        push(
                            format!("apc-sig{}-s{}", fmt_float(sigma), s),
                            s,
                            ArmSpec::Offline {
                                method: CloneMethod::Apc,
                                n_trajectories: self.n_trajectories,
                                torso: self.student_hidden.clone(),
                                sigma_s: Some(sigma),
                            },
                        );
                    }
                }
            }
            ExperimentKind::Compression => {
                for torso in &self.torso_grid {
                    for &method in &self.methods {
                        for s in 0..self.n_seeds as u64 {
                            push(
                                format!("{}-t{}-s{}", method.as_str(), torso_tag(torso), s),
                                s,
                                ArmSpec::Offline {
                                    method,
                                    n_trajectories: self.n_trajectories,
                                    torso: torso.clone(),
                                    sigma_s: None,
                                },
                            );
                        }
                    }
                }
            }
            ExperimentKind::Dagger => {
                for variant in &self.dagger_variants {
                    for s in 0..self.n_seeds as u64 {
                        push(
                            format!("{}-s{}", variant.tag, s),
                            s,
                            ArmSpec::Dagger {
                                variant: variant.clone(),
                            },
                        );
                    }
                }
            }
            ExperimentKind::Kickstart => {
                for &lambda in &self.lambda_grid {
                    for s in 0..self.n_seeds as u64 {
                        push(
                            format!("lam{}-s{}", fmt_float(lambda), s),
                            s,
                            ArmSpec::Kickstart { lambda },
                        );
                    }
                }
            }
        }
        arms
    }

    /// Seed for the dataset shared by every method arm at `(n, seed_index)`.
    pub fn dataset_seed(&self, n_trajectories: usize, seed_index: u64) -> u64 {
        derive_seed(
            self.master_seed,
            &format!("dataset-n{n_trajectories}"),
            seed_index,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL_SWEEP: &str = r#"
kind = "offline_sweep"
name = "lqr-sweep"
env = "lqr2d"
methods = ["bc", "apc"]
trajectory_grid = [1, 2]
n_seeds = 2
"#;

    #[test]
    fn parses_minimal_sweep_and_expands_arms() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL_SWEEP).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::OfflineSweep);
        let arms = cfg.arms();
        let ids: Vec<&str> = arms.iter().map(|a| a.id.as_str()).collect();
        assert_eq!(
            ids,
            vec![
                "bc-n1-s0", "bc-n1-s1", "apc-n1-s0", "apc-n1-s1", "bc-n2-s0", "bc-n2-s1",
                "apc-n2-s0", "apc-n2-s1"
            ]
        );
        // Arm seeds are pure functions of (master seed, arm id) and distinct.
        let mut seeds: Vec<u64> = arms.iter().map(|a| a.seed).collect();
        assert_eq!(arms[0].seed, derive_seed(0, "bc-n1-s0", 0));
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), arms.len());
        // Methods share the dataset seed at equal seed index; sizes differ.
        assert_eq!(cfg.dataset_seed(1, 0), cfg.dataset_seed(1, 0));
        assert_ne!(cfg.dataset_seed(1, 0), cfg.dataset_seed(2, 0));
        assert_ne!(cfg.dataset_seed(1, 0), cfg.dataset_seed(1, 1));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let unknown = format!("{MINIMAL_SWEEP}\nbogus_key = 3\n");
        assert!(ExperimentConfig::from_toml_str(&unknown).is_err());
        let bad_n = MINIMAL_SWEEP.replace("[1, 2]", "[4]");
        assert!(ExperimentConfig::from_toml_str(&bad_n).is_err());
        let bad_name = MINIMAL_SWEEP.replace("lqr-sweep", "LQR sweep");
        assert!(ExperimentConfig::from_toml_str(&bad_name).is_err());
        let bad_env = MINIMAL_SWEEP.replace("lqr2d", "cartpole");
        assert!(ExperimentConfig::from_toml_str(&bad_env).is_err());
    }

    #[test]
    fn nested_sections_parse() {
        let text = r#"
kind = "sigma_s_ablation"
name = "sigma-sweep"
env = "lqr2d"
n_trajectories = 2
sigma_s_grid = [0.01, 0.1]

[dataset]
expert_noise = "low"

[train]
max_iters = 100
eval_period = 50

[aug]
m = 5
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.dataset.expert_noise, NoiseTier::Low);
        assert_eq!(cfg.train.max_iters, 100);
        assert_eq!(cfg.aug.m, 5);
        let ids: Vec<String> = cfg.arms().iter().map(|a| a.id.clone()).collect();
        assert_eq!(
            ids,
            vec![
                "apc-sig0p01-s0",
                "apc-sig0p01-s1",
                "apc-sig0p01-s2",
                "apc-sig0p1-s0",
                "apc-sig0p1-s1",
                "apc-sig0p1-s2"
            ]
        );
    }

    #[test]
    fn dagger_and_kickstart_sections() {
        let text = r#"
kind = "dagger"
name = "dagger-lqr"
env = "lqr2d"

[dagger]
beta = 0.0
env_step_budget = 100

[[dagger_variants]]
tag = "plain"

[[dagger_variants]]
tag = "apc"
[dagger_variants.aug]
sigma_s = 0.1
m = 10
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.dagger_variants.len(), 2);
        assert_eq!(cfg.dagger_variants[0].objective, DaggerObjective::AnalyticCe);
        assert!(cfg.dagger_variants[1].aug.is_some());
        assert_eq!(cfg.arms().len(), 6);

        let dup = text.replace("tag = \"plain\"", "tag = \"apc\"");
        assert!(ExperimentConfig::from_toml_str(&dup).is_err());

        let ks = r#"
kind = "kickstart"
name = "kick-pm"
env = "pointmass"
lambda_grid = [0.0, 1.0]
teacher_tier = "medium"

[kickstart]
learner_steps = 10
eval_period = 5
"#;
        let cfg = ExperimentConfig::from_toml_str(ks).unwrap();
        assert_eq!(cfg.lambda_grid, vec![0.0, 1.0]);
        let ids: Vec<String> = cfg.arms().iter().map(|a| a.id.clone()).collect();
        assert_eq!(
            ids,
            vec!["lam0-s0", "lam0-s1", "lam0-s2", "lam1-s0", "lam1-s1", "lam1-s2"]
        );
    }

    #[test]
    fn privileged_channel_rules() {
        let text = r#"
kind = "privileged"
name = "priv"
env = "pointmass"
methods = ["bc", "apc"]
trajectory_grid = [5, 10]
student_channels = ["common", "grid"]
"#;
        assert!(ExperimentConfig::from_toml_str(text).is_ok());
        let leaky = text.replace(r#"["common", "grid"]"#, r#"["common", "privileged", "grid"]"#);
        assert!(ExperimentConfig::from_toml_str(&leaky).is_err());
        let no_grid = text.replace(r#"["common", "grid"]"#, r#"["common"]"#);
        assert!(ExperimentConfig::from_toml_str(&no_grid).is_err());
        let lqr = text.replace("pointmass", "lqr2d");
        assert!(ExperimentConfig::from_toml_str(&lqr).is_err());
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = ExperimentConfig::from_toml_str(MINIMAL_SWEEP).unwrap();
        let b = ExperimentConfig::from_toml_str(MINIMAL_SWEEP).unwrap();
        assert_eq!(a.config_hash(), b.config_hash());
        let c =
            ExperimentConfig::from_toml_str(&MINIMAL_SWEEP.replace("n_seeds = 2", "n_seeds = 3"))
                .unwrap();
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn float_tags_are_filename_safe() {
        assert_eq!(fmt_float(0.05), "0p05");
        assert_eq!(fmt_float(10.0), "10");
        assert_eq!(fmt_float(1e-4), "0p0001");
    }
}
