//! Differentiable fully-connected network and its optimizers.

mod mlp;
mod optim;

pub use mlp::{ForwardTrace, LayerSpec, Mlp};
pub use optim::{Adam, AdamConfig, MomentumConfig, MomentumSgd};
