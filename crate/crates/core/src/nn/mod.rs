//! Dense feed-forward networks, losses and first-order optimizers.

pub mod loss;
pub mod mlp;
pub mod optim;

pub use loss::LossKind;
pub use mlp::{sigmoid, softmax_in_place, ForwardPass, Gradients, HiddenActivation, Layer, MlpParams, OutputActivation};
pub use optim::{OptimizerKind, OptimizerState};
