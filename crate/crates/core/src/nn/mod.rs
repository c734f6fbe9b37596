//! Minimal dense-network machinery: tensors, layers, losses, optimizers,
//! dropout and a binary model container.

pub mod container;
pub mod dropout;
pub mod layer;
pub mod loss;
pub mod optim;
pub mod tensor;

pub use container::{decode_layers, encode_layers};
pub use dropout::dropout_forward;
pub use layer::{Activation, DenseLayer, Gradients, LayerGrad, Mlp, MlpOptimizer};
pub use loss::{loss_and_grad, LossKind};
pub use optim::{OptimizerKind, OptimizerState};
pub use tensor::Tensor;
