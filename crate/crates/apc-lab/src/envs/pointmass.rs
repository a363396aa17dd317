//! Point-mass navigation with an optional coarse image channel.
//!
//! State (8): agent position (2), velocity (2), target position (2), and
//! goal-relative offset target - position (2). Double-integrator dynamics
//! under acceleration actions clipped to [-1, 1]. Per-step reward is
//! `-||pos - target||` at the current state; leaving the arena ends the
//! episode early and additionally charges `(remaining steps) x (distance at
//! exit)`, making an exit reward-equivalent to hovering at the exit point —
//! without that charge, early termination would truncate future negative
//! rewards and boundary exits would be the optimal policy.
//!
//! The grid channel is a 16 x 16 top-down render with values in
//! {0, 0.5, 1}: the target is a 2 x 2 block at 0.5, the agent a single cell
//! at 1.0; an overlapping cell keeps the maximum (1.0).

use super::obs::{Grid, GridShape, Observation, ObsLayout, Span};
use super::{clip_action, Env, EnvSpec, StepResult};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STATE_DIM: usize = 8;
pub const ACTION_DIM: usize = 2;
pub const DEFAULT_HORIZON: usize = 300;
pub const DEFAULT_DT: f64 = 0.1;
/// Arena is the square [-half, half]^2.
pub const ARENA_HALF: f64 = 4.0;
/// Starts and targets are drawn uniformly from [-spawn, spawn]^2.
pub const SPAWN_HALF: f64 = 2.5;
pub const GRID_H: usize = 16;
pub const GRID_W: usize = 16;
pub const TARGET_VALUE: f64 = 0.5;
pub const AGENT_VALUE: f64 = 1.0;

pub struct PointMassEnv {
    spec: EnvSpec,
    dt: f64,
    state: Vec<f64>,
    t: usize,
    alive: bool,
}

impl PointMassEnv {
    pub fn default_nav() -> Self {
        let layout = ObsLayout {
            state_dim: STATE_DIM,
            // Proprioception: position + velocity. Task information
            // (privileged): target + goal-relative offset.
            common: Span::new(0, 4),
            privileged: Span::new(4, 8),
            grid: Some(GridShape { h: GRID_H, w: GRID_W }),
        };
        // Max in-arena distance is the arena diagonal; the terminal exit
        // charge can reach horizon x that distance on the final step.
        let max_dist = 2.0 * ARENA_HALF * std::f64::consts::SQRT_2;
        let spec = EnvSpec {
            id: "pointmass".into(),
            state_dim: STATE_DIM,
            action_dim: ACTION_DIM,
            horizon: DEFAULT_HORIZON,
            action_bound: 1.0,
            layout,
            reward_bound: (1.0 + DEFAULT_HORIZON as f64) * max_dist,
        };
        PointMassEnv {
            spec,
            dt: DEFAULT_DT,
            state: vec![0.0; STATE_DIM],
            t: 0,
            alive: false,
        }
    }

    fn observation(&self) -> Observation {
        Observation {
            state: self.state.clone(),
            grid: self.render_grid_from_state(&self.state),
        }
    }

    fn distance_to_target(p: &[f64], t: &[f64]) -> f64 {
        ((p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2)).sqrt()
    }
}

/// Cell index of a coordinate: arena mapped linearly onto [0, cells).
fn cell_index(x: f64, cells: usize) -> usize {
    let f = ((x + ARENA_HALF) / (2.0 * ARENA_HALF) * cells as f64).floor();
    f.clamp(0.0, (cells - 1) as f64) as usize
}

/// Top-left index of the 2 x 2 target block; centred targets land on the
/// central cell pair, and the index is monotone in the coordinate.
fn block_index(x: f64, cells: usize) -> usize {
    let f = ((x + ARENA_HALF) / (2.0 * ARENA_HALF) * cells as f64 - 0.5).floor();
    f.clamp(0.0, (cells - 2) as f64) as usize
}

/// Render the 16 x 16 grid for an arbitrary state vector (only the position
/// and target coordinates are read, so inconsistent perturbed states render
/// fine).
pub fn render_grid(state: &[f64]) -> Grid {
    let shape = GridShape { h: GRID_H, w: GRID_W };
    let mut g = Grid::zeros(shape);
    let (tr, tc) = (block_index(state[5], GRID_H), block_index(state[4], GRID_W));
    for dr in 0..2 {
        for dc in 0..2 {
            g.set(tr + dr, tc + dc, TARGET_VALUE);
        }
    }
    let (ar, ac) = (cell_index(state[1], GRID_H), cell_index(state[0], GRID_W));
    let v = g.get(ar, ac).max(AGENT_VALUE);
    g.set(ar, ac, v);
    g
}

impl Env for PointMassEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let px = rng.gen_range(-SPAWN_HALF..SPAWN_HALF);
        let py = rng.gen_range(-SPAWN_HALF..SPAWN_HALF);
        let tx = rng.gen_range(-SPAWN_HALF..SPAWN_HALF);
        let ty = rng.gen_range(-SPAWN_HALF..SPAWN_HALF);
        self.state = vec![px, py, 0.0, 0.0, tx, ty, tx - px, ty - py];
        self.t = 0;
        self.alive = true;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        assert!(self.alive, "PointMassEnv::step called on finished episode");
        assert_eq!(action.len(), ACTION_DIM, "PointMassEnv::step action dim");
        let (a, clipped) = clip_action(action, self.spec.action_bound);
        let dt = self.dt;
        let (px, py, vx, vy, tx, ty) = (
            self.state[0],
            self.state[1],
            self.state[2],
            self.state[3],
            self.state[4],
            self.state[5],
        );
        let mut reward = -PointMassEnv::distance_to_target(&[px, py], &[tx, ty]);
        let npx = px + vx * dt + 0.5 * a[0] * dt * dt;
        let npy = py + vy * dt + 0.5 * a[1] * dt * dt;
        let nvx = vx + a[0] * dt;
        let nvy = vy + a[1] * dt;
        self.state = vec![npx, npy, nvx, nvy, tx, ty, tx - npx, ty - npy];
        self.t += 1;

        let exited = npx.abs() > ARENA_HALF || npy.abs() > ARENA_HALF;
        let done = exited || self.t >= self.spec.horizon;
        if exited {
            let remaining = (self.spec.horizon - self.t) as f64;
            reward -= remaining * PointMassEnv::distance_to_target(&[npx, npy], &[tx, ty]);
        }
        if done {
            self.alive = false;
        }
        StepResult {
            obs: self.observation(),
            reward,
            done,
            clipped,
        }
    }

    fn render_grid_from_state(&self, state: &[f64]) -> Option<Grid> {
        Some(render_grid(state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_consistency_and_bounds() {
        let mut env = PointMassEnv::default_nav();
        for seed in 0..200 {
            let o = env.reset(seed);
            let s = &o.state;
            assert!(s[0].abs() <= SPAWN_HALF && s[1].abs() <= SPAWN_HALF);
            assert!(s[4].abs() <= SPAWN_HALF && s[5].abs() <= SPAWN_HALF);
            assert_eq!(s[2], 0.0);
            assert_eq!(s[3], 0.0);
            assert_eq!(s[6], s[4] - s[0]);
            assert_eq!(s[7], s[5] - s[1]);
            assert!(o.grid.is_some());
        }
    }

    #[test]
    fn double_integrator_hand_step() {
        let mut env = PointMassEnv::default_nav();
        env.reset(0);
        env.state = vec![0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 2.0, 0.0];
        let r = env.step(&[1.0, 0.0]);
        // reward at current state: -dist((0,0),(2,0)) = -2
        assert!((r.reward + 2.0).abs() < 1e-12);
        let s = &r.obs.state;
        // p' = p + v dt + a dt^2/2 = 0.1 + 0.005; v' = 1 + 0.1
        assert!((s[0] - 0.105).abs() < 1e-12);
        assert!((s[2] - 1.1).abs() < 1e-12);
        assert!((s[6] - (2.0 - 0.105)).abs() < 1e-12);
    }

    #[test]
    fn exit_terminates_with_hover_equivalent_charge() {
        let mut env = PointMassEnv::default_nav();
        env.reset(0);
        // Heading out of the arena at speed.
        env.state = vec![3.99, 0.0, 5.0, 0.0, 0.0, 0.0, -3.99, 0.0];
        let r = env.step(&[0.0, 0.0]);
        assert!(r.done);
        let exit_pos = r.obs.state[0];
        assert!(exit_pos > ARENA_HALF);
        let exit_dist = exit_pos.abs();
        let expected = -3.99 - (DEFAULT_HORIZON as f64 - 1.0) * exit_dist;
        assert!(
            (r.reward - expected).abs() < 1e-9,
            "terminal reward {} vs expected {expected}",
            r.reward
        );
    }

    #[test]
    fn episodes_end_inside_or_at_exit() {
        let mut env = PointMassEnv::default_nav();
        for seed in 0..20 {
            env.reset(seed);
            let mut steps = 0;
            loop {
                let r = env.step(&[0.9, -0.3]);
                steps += 1;
                if r.done {
                    break;
                }
                let s = &r.obs.state;
                assert!(s[0].abs() <= ARENA_HALF && s[1].abs() <= ARENA_HALF);
            }
            assert!(steps <= DEFAULT_HORIZON);
        }
    }

    #[test]
    fn grid_geometry_center_and_values() {
        // Target at the arena centre: 2 x 2 block on the central cells.
        let state = vec![-3.0, -3.0, 0.0, 0.0, 0.0, 0.0, 3.0, 3.0];
        let g = render_grid(&state);
        for (r, c) in [(7, 7), (7, 8), (8, 7), (8, 8)] {
            assert_eq!(g.get(r, c), TARGET_VALUE, "target block at ({r},{c})");
        }
        let mut values: Vec<f64> = g.data.clone();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        assert_eq!(values, vec![0.0, 0.5, 1.0]);
        // Agent at (-3, -3) lands in the lower-left quadrant (row from y).
        assert_eq!(g.get(cell_index(-3.0, 16), cell_index(-3.0, 16)), AGENT_VALUE);
    }

    #[test]
    fn grid_overlap_takes_max() {
        let state = vec![0.1, 0.1, 0.0, 0.0, 0.1, 0.1, 0.0, 0.0];
        let g = render_grid(&state);
        let (r, c) = (cell_index(0.1, 16), cell_index(0.1, 16));
        assert_eq!(g.get(r, c), AGENT_VALUE);
    }

    #[test]
    fn target_sweep_moves_block_monotonically() {
        let mut last = 0;
        let mut moved = 0;
        for i in 0..100 {
            let tx = -3.5 + 7.0 * (i as f64) / 99.0;
            let state = vec![0.0, 0.0, 0.0, 0.0, tx, -3.5, 0.0, 0.0];
            let g = render_grid(&state);
            // Leftmost column holding target value in the block row.
            let row = block_index(-3.5, 16);
            let col = (0..16)
                .find(|&c| g.get(row, c) == TARGET_VALUE)
                .expect("target block present");
            assert!(col >= last, "block column went backwards: {col} < {last}");
            if col > last {
                moved += 1;
            }
            last = col;
        }
        assert!(moved >= 10, "sweep should cross many cells, moved {moved}");
    }
}
