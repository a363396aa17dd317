//! Numeric core: dense matrices, a fixed-topology MLP with reverse-mode
//! gradients, Adam, central-difference verification, and the checkpoint
//! byte format.

pub mod adam;
pub mod checkpoint;
pub mod fd;
pub mod matrix;
pub mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use matrix::{dot, spectral_radius, Matrix};
pub use mlp::{
    backward_batch, elu, elu_prime, forward_batch, mlp_backward, mlp_forward, ForwardTape, Layer,
    MlpParams, MlpSpec,
};
