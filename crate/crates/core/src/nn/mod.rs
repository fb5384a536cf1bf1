//! Minimal f32 tensor engine: reverse-mode tape, MLPs, Adam and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod mlp;
pub mod tensor;

pub use adam::{soft_update, AdamConfig, AdamState};
pub use graph::{Gradients, Graph, Var};
pub use mlp::{Activation, Mlp, MlpVars, Mode};
pub use tensor::Tensor;
