//! A self-contained imitation-learning laboratory for continuous control.
//!
//! The crate trains small Gaussian-policy students from analytically
//! verifiable experts on two desk-scale environments (a 2-D LQR tracking
//! problem and a 2-D point-mass navigation problem), and compares plain
//! behaviour cloning against cloning with expert-relabelled state
//! augmentation, both offline and in online settings (DAgger-style data
//! collection and kickstarted actor-critic training).
//!
//! Layering, bottom-up:
//!
//! * [`numcore`] — dense f64 matrices, a fixed-topology MLP with
//!   reverse-mode gradients, Adam, and a parameter checkpoint format;
//! * [`policy`] — diagonal Gaussian policies (log-probabilities, entropy,
//!   analytic cross-entropy) built on `numcore`;
//! * [`envs`] — the two environments plus seeded instance sets;
//! * [`experts`] — the analytic Riccati expert and trained actor-critic
//!   experts checkpointed at quality tiers;
//! * [`data`] — rollouts, fixed-length chunking with validity masks,
//!   datasets on disk, FIFO replay, and the sample/insert rate limiter;
//! * [`cloning`] — offline losses (behaviour cloning, relabelled and naive
//!   state augmentation) and the offline training driver;
//! * [`online`] — DAgger-style mixture collection and kickstarted
//!   actor-critic;
//! * [`bench`] — evaluation protocol, experiment configs, the sweep runner,
//!   and report emission (CSV + SVG).

pub mod bench;
pub mod cloning;
pub mod data;
pub mod envs;
pub mod error;
pub mod experts;
pub mod numcore;
pub mod online;
pub mod policy;
pub mod seeding;

pub use error::{Error, Result};

/// Version string recorded in run manifests. Bump with the crate version.
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
