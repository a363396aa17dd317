//! Discrete-time linear-quadratic regulator environment.
//!
//! Dynamics `s' = A s + B a`, per-step reward `-(s^T Q s + a^T R a)`
//! evaluated at the current state with the clipped action. Episodes run a
//! fixed horizon; the only randomness is the initial state.
//!
//! The default instance is a 2-D double integrator (positions + velocities,
//! acceleration actions) whose optimal infinite-horizon controller is
//! analytic via the Riccati solver in `experts`.

use super::obs::{Grid, Observation, ObsLayout, Span};
use super::{clip_action, Env, EnvSpec, StepResult};
use crate::numcore::Matrix;
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// The (A, B, Q, R) quadruple defining an LQR instance.
#[derive(Clone, Debug, PartialEq)]
pub struct LqrDynamics {
    pub a: Matrix,
    pub b: Matrix,
    pub q: Matrix,
    pub r: Matrix,
}

impl LqrDynamics {
    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.rows();
        let m = self.b.cols();
        if self.a.cols() != n {
            return Err(Error::InvalidArgument("LqrDynamics: A must be square".into()));
        }
        if self.b.rows() != n {
            return Err(Error::InvalidArgument("LqrDynamics: B rows must match A".into()));
        }
        if (self.q.rows(), self.q.cols()) != (n, n) {
            return Err(Error::InvalidArgument("LqrDynamics: Q must be n x n".into()));
        }
        if (self.r.rows(), self.r.cols()) != (m, m) {
            return Err(Error::InvalidArgument("LqrDynamics: R must be m x m".into()));
        }
        for m_ in [&self.a, &self.b, &self.q, &self.r] {
            m_.ensure_finite("LqrDynamics")?;
        }
        Ok(())
    }
}

pub struct LqrEnv {
    spec: EnvSpec,
    dynamics: LqrDynamics,
    /// Per-coordinate standard deviation of the Gaussian initial state.
    init_sigma: Vec<f64>,
    state: Vec<f64>,
    t: usize,
    alive: bool,
}

/// Integration step of the default double integrator.
pub const DEFAULT_DT: f64 = 0.1;
/// Default horizon; long enough that the optimal controller's finite
/// episode cost matches the infinite-horizon Riccati value to < 1e-6.
pub const DEFAULT_HORIZON: usize = 200;
pub const DEFAULT_ACTION_BOUND: f64 = 10.0;

impl LqrEnv {
    /// The pinned desk instance: 2-D double integrator, state
    /// (px, py, vx, vy), acceleration actions, Q = diag(1, 1, 0.1, 0.1),
    /// R = 0.05 I.
    pub fn default_2d() -> Self {
        let dt = DEFAULT_DT;
        let a = Matrix::from_rows(&[
            vec![1.0, 0.0, dt, 0.0],
            vec![0.0, 1.0, 0.0, dt],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ]);
        let b = Matrix::from_rows(&[
            vec![0.5 * dt * dt, 0.0],
            vec![0.0, 0.5 * dt * dt],
            vec![dt, 0.0],
            vec![0.0, dt],
        ]);
        let q = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.1, 0.0],
            vec![0.0, 0.0, 0.0, 0.1],
        ]);
        let r = Matrix::from_rows(&[vec![0.05, 0.0], vec![0.0, 0.05]]);
        let dynamics = LqrDynamics { a, b, q, r };
        LqrEnv::new(
            dynamics,
            DEFAULT_HORIZON,
            DEFAULT_ACTION_BOUND,
            vec![0.6, 0.6, 0.25, 0.25],
        )
        .expect("default LQR instance is valid")
    }

    /// Custom instance; `init_sigma` gives the per-coordinate std of the
    /// zero-mean Gaussian initial state.
    pub fn new(
        dynamics: LqrDynamics,
        horizon: usize,
        action_bound: f64,
        init_sigma: Vec<f64>,
    ) -> Result<Self> {
        dynamics.validate()?;
        if horizon == 0 {
            return Err(Error::InvalidArgument("LqrEnv: horizon 0".into()));
        }
        if action_bound <= 0.0 {
            return Err(Error::InvalidArgument("LqrEnv: action bound must be > 0".into()));
        }
        let n = dynamics.state_dim();
        if init_sigma.len() != n {
            return Err(Error::shape("LqrEnv init_sigma", n, init_sigma.len()));
        }
        // Reward bound: generous envelope from the initial-state scale; it is
        // documented, not enforced per step (costs are unbounded in theory
        // but episodes that approach it are diverging anyway).
        let reward_bound = 1e6;
        let layout = ObsLayout {
            state_dim: n,
            common: Span::new(0, n),
            privileged: Span::new(n, n),
            grid: None,
        };
        let spec = EnvSpec {
            id: "lqr2d".into(),
            state_dim: n,
            action_dim: dynamics.action_dim(),
            horizon,
            action_bound,
            layout,
            reward_bound,
        };
        Ok(LqrEnv {
            spec,
            dynamics,
            init_sigma,
            state: vec![0.0; n],
            t: 0,
            alive: false,
        })
    }

    pub fn dynamics(&self) -> &LqrDynamics {
        &self.dynamics
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }
}

impl Env for LqrEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = self
            .init_sigma
            .iter()
            .map(|&s| {
                let z: f64 = rng.sample(StandardNormal);
                s * z
            })
            .collect();
        self.t = 0;
        self.alive = true;
        Observation::state_only(self.state.clone())
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        assert!(self.alive, "LqrEnv::step called on finished episode");
        assert_eq!(action.len(), self.spec.action_dim, "LqrEnv::step action dim");
        let (a, clipped) = clip_action(action, self.spec.action_bound);
        let reward = -(self.dynamics.q.quad_form(&self.state) + self.dynamics.r.quad_form(&a));
        let mut next = self.dynamics.a.matvec(&self.state);
        let ba = self.dynamics.b.matvec(&a);
        for (n, b) in next.iter_mut().zip(&ba) {
            *n += b;
        }
        self.state = next;
        self.t += 1;
        let done = self.t >= self.spec.horizon;
        if done {
            self.alive = false;
        }
        StepResult {
            obs: Observation::state_only(self.state.clone()),
            reward,
            done,
            clipped,
        }
    }

    fn render_grid_from_state(&self, _state: &[f64]) -> Option<Grid> {
        None
    }
}
