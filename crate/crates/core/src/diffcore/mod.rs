//! Reverse-mode differentiation over dense `f64` tensors, plus the pieces the
//! models need on top of it: Adam, Gumbel-softmax, MLPs and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod graph;
pub mod gumbel;
pub mod nn;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use graph::{Gradients, Graph, NodeId};
pub use gumbel::{gumbel_noise, gumbel_softmax, gumbel_softmax_sample};
pub use nn::{Activation, Mlp, TrainableMlp};
pub use tensor::Tensor;
