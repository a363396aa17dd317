//! Observations and channel layouts.
//!
//! An environment exposes one `state` vector per step; named channels are
//! views into it (`common` = proprioceptive subrange, `privileged` =
//! task-information subrange) plus an optional rendered `grid`. Policies
//! declare which channels they consume; feature vectors are the selected
//! subranges concatenated in the declared channel order, with the grid
//! handled separately through a learned embedding.

use crate::numcore::Matrix;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Half-open index range into the state vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        assert!(start <= end, "Span: start > end");
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Grid dimensions (rows, cols).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridShape {
    pub h: usize,
    pub w: usize,
}

impl GridShape {
    pub fn cells(&self) -> usize {
        self.h * self.w
    }
}

/// A rendered observation image; values restricted to {0, 0.5, 1}.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub shape: GridShape,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn zeros(shape: GridShape) -> Self {
        Grid {
            shape,
            data: vec![0.0; shape.cells()],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape.w + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.shape.w + c] = v;
    }
}

/// One step's observation: the raw state plus the rendered grid when the
/// environment has one.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub state: Vec<f64>,
    pub grid: Option<Grid>,
}

impl Observation {
    pub fn state_only(state: Vec<f64>) -> Self {
        Observation { state, grid: None }
    }
}

/// Where each named channel lives inside the state vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsLayout {
    pub state_dim: usize,
    pub common: Span,
    pub privileged: Span,
    pub grid: Option<GridShape>,
}

impl ObsLayout {
    pub fn validate(&self) -> Result<()> {
        if self.common.end > self.state_dim || self.privileged.end > self.state_dim {
            return Err(Error::InvalidArgument(format!(
                "ObsLayout spans exceed state_dim {}",
                self.state_dim
            )));
        }
        Ok(())
    }
}

/// Observation channels a policy may consume.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// The full state vector.
    State,
    /// The proprioceptive subrange.
    Common,
    /// The task-information subrange (expert-only in transfer experiments).
    Privileged,
    /// The rendered image, consumed through a learned embedding.
    Grid,
}

/// Width of the concatenated (non-grid) feature vector for `channels`.
pub fn feature_dim(layout: &ObsLayout, channels: &[Channel]) -> usize {
    channels
        .iter()
        .map(|c| match c {
            Channel::State => layout.state_dim,
            Channel::Common => layout.common.len(),
            Channel::Privileged => layout.privileged.len(),
            Channel::Grid => 0,
        })
        .sum()
}

/// Concatenate the selected subranges of one state, in channel order.
pub fn write_features(state: &[f64], layout: &ObsLayout, channels: &[Channel], out: &mut Vec<f64>) {
    debug_assert_eq!(state.len(), layout.state_dim);
    for c in channels {
        match c {
            Channel::State => out.extend_from_slice(state),
            Channel::Common => out.extend_from_slice(&state[layout.common.start..layout.common.end]),
            Channel::Privileged => {
                out.extend_from_slice(&state[layout.privileged.start..layout.privileged.end])
            }
            Channel::Grid => {}
        }
    }
}

/// Batched feature construction: one row per state row.
pub fn feature_matrix(states: &Matrix, layout: &ObsLayout, channels: &[Channel]) -> Matrix {
    assert_eq!(states.cols(), layout.state_dim, "feature_matrix: state width");
    let fd = feature_dim(layout, channels);
    let mut data = Vec::with_capacity(states.rows() * fd);
    for r in 0..states.rows() {
        write_features(states.row(r), layout, channels, &mut data);
    }
    Matrix::from_vec(states.rows(), fd, data)
}
