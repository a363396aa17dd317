//! Bounded FIFO replay over chunks and the acting/learning rate limiter.
//!
//! The interleaved online loop is single-threaded and deterministic; callers
//! that want one actor thread and one learner thread can share the buffer
//! behind a `std::sync::Mutex` — every method takes `&mut self` and does no
//! internal locking of its own.

use super::{Chunk, CHUNK_LEN};
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Bounded FIFO chunk store with uniform iid sampling (with replacement).
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    queue: VecDeque<Chunk>,
    capacity: usize,
    inserted_chunks: u64,
    inserted_timesteps: u64,
    sampled_batches: u64,
    sampled_timesteps: u64,
}

impl ReplayBuffer {
    /// Default capacity; configs may raise it up to [`Self::MAX_CAPACITY`].
    pub const DEFAULT_CAPACITY: usize = 10_000;
    pub const MAX_CAPACITY: usize = 1_000_000;

    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 || capacity > Self::MAX_CAPACITY {
            return Err(Error::Config(format!(
                "replay capacity must be in 1..={}, got {capacity}",
                Self::MAX_CAPACITY
            )));
        }
        Ok(ReplayBuffer {
            queue: VecDeque::with_capacity(capacity.min(4096)),
            capacity,
            inserted_chunks: 0,
            inserted_timesteps: 0,
            sampled_batches: 0,
            sampled_timesteps: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Append a chunk, evicting the oldest when full. Returns the number of
    /// valid timesteps inserted.
    pub fn insert(&mut self, chunk: Chunk) -> usize {
        chunk.assert_valid();
        let steps = chunk.valid_len;
        if self.queue.len() == self.capacity {
            self.queue.pop_front();
        }
        self.queue.push_back(chunk);
        self.inserted_chunks += 1;
        self.inserted_timesteps += steps as u64;
        steps
    }

    /// Draw `batch` chunks uniformly with replacement. Errors when empty.
    pub fn sample(&mut self, batch: usize, rng: &mut impl Rng) -> Result<Vec<Chunk>> {
        if self.queue.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot sample from an empty replay buffer".into(),
            ));
        }
        if batch == 0 {
            return Err(Error::InvalidArgument("sample batch must be positive".into()));
        }
        let out = (0..batch)
            .map(|_| self.queue[rng.gen_range(0..self.queue.len())].clone())
            .collect();
        self.sampled_batches += 1;
        self.sampled_timesteps += (batch * CHUNK_LEN) as u64;
        Ok(out)
    }

    /// Oldest-first view of the stored chunks (diagnostics only).
    pub fn iter(&self) -> impl Iterator<Item = &Chunk> {
        self.queue.iter()
    }

    pub fn inserted_chunks(&self) -> u64 {
        self.inserted_chunks
    }

    pub fn inserted_timesteps(&self) -> u64 {
        self.inserted_timesteps
    }

    pub fn sampled_batches(&self) -> u64 {
        self.sampled_batches
    }

    pub fn sampled_timesteps(&self) -> u64 {
        self.sampled_timesteps
    }
}

/// Which side of the actor/learner loop may proceed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateDecision {
    ActorOnly,
    LearnerOnly,
    Both,
}

/// Targets `updates_per_timestep` gradient updates per inserted timestep.
///
/// With batch size B over T-step chunks, one learner update consumes `B*T`
/// sampled timesteps, so the target sampled:inserted timestep ratio is
/// `T * B * updates_per_timestep`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateLimiterConfig {
    pub batch_size: usize,
    pub updates_per_timestep: f64,
    /// Relative half-width of the band around the target ratio inside which
    /// both sides may proceed.
    pub tolerance: f64,
}

impl Default for RateLimiterConfig {
    fn default() -> Self {
        RateLimiterConfig {
            batch_size: 64,
            updates_per_timestep: 10.0,
            tolerance: 0.05,
        }
    }
}

impl RateLimiterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("rate limiter batch_size must be positive".into()));
        }
        if !(self.updates_per_timestep > 0.0) || !self.updates_per_timestep.is_finite() {
            return Err(Error::Config(
                "rate limiter updates_per_timestep must be positive and finite".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.tolerance) {
            return Err(Error::Config("rate limiter tolerance must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Target sampled:inserted timestep ratio, `T * B * updates_per_timestep`.
    pub fn target_ratio(&self) -> f64 {
        CHUNK_LEN as f64 * self.batch_size as f64 * self.updates_per_timestep
    }
}

/// Sampled-to-inserted bookkeeping plus the gate itself.
#[derive(Clone, Debug)]
pub struct RateLimiter {
    cfg: RateLimiterConfig,
    inserted_timesteps: u64,
    sampled_timesteps: u64,
}

impl RateLimiter {
    pub fn new(cfg: RateLimiterConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(RateLimiter {
            cfg,
            inserted_timesteps: 0,
            sampled_timesteps: 0,
        })
    }

    pub fn config(&self) -> &RateLimiterConfig {
        &self.cfg
    }

    /// Record an actor insertion of `timesteps` valid steps.
    pub fn record_insert(&mut self, timesteps: usize) {
        self.inserted_timesteps += timesteps as u64;
    }

    /// Record one learner update (consumes `B * T` sampled timesteps).
    pub fn record_update(&mut self) {
        self.sampled_timesteps += (self.cfg.batch_size * CHUNK_LEN) as u64;
    }

    pub fn inserted_timesteps(&self) -> u64 {
        self.inserted_timesteps
    }

    pub fn sampled_timesteps(&self) -> u64 {
        self.sampled_timesteps
    }

    /// Learner updates per inserted timestep so far (the audited quantity).
    pub fn updates_per_inserted_timestep(&self) -> f64 {
        if self.inserted_timesteps == 0 {
            return 0.0;
        }
        let updates =
            self.sampled_timesteps as f64 / (self.cfg.batch_size * CHUNK_LEN) as f64;
        updates / self.inserted_timesteps as f64
    }

    /// Permit the side that is behind the target ratio; inside the tolerance
    /// band both proceed. Before any insertion only the actor may run.
    pub fn gate(&self) -> GateDecision {
        if self.inserted_timesteps == 0 {
            return GateDecision::ActorOnly;
        }
        let target = self.cfg.target_ratio();
        let ratio = self.sampled_timesteps as f64 / self.inserted_timesteps as f64;
        let lo = target * (1.0 - self.cfg.tolerance);
        let hi = target * (1.0 + self.cfg.tolerance);
        if ratio > hi {
            GateDecision::ActorOnly
        } else if ratio < lo {
            GateDecision::LearnerOnly
        } else {
            GateDecision::Both
        }
    }
}
