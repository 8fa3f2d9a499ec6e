//! Dense tensors, reverse-mode differentiation and the optimisation pieces
//! used to train the networks.

pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod params;
pub mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use optim::{adagrad_step, clip_global_norm, lr_schedule, TrainConfig};
pub use params::{ParamId, ParamStore, Parameter};
pub use tensor::{dropout, dropout_mask, glorot_init, matmul, Tensor};
