//! Shared numerical building blocks: splittable random streams and small
//! fully-connected networks with exact reverse-mode gradients.

mod net;
mod rng;
mod train;

pub use net::{Activation, DenseNet, Forward, Gradients, Layer, LayerGrad, NetDocument};
pub use rng::RngState;
pub(crate) use train::non_finite_loss as non_finite_loss_pub;
pub use train::{
    softmax, train, AdamState, Dataset, Loss, OptimizerKind, TrainConfig, TrainOutcome, Targets,
};
