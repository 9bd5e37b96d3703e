//! Small message-passing networks for node-level anomaly classification.
//!
//! Four convolutions share one pipeline: input features pass through
//! `layers` convolutions with ReLU, then a linear head produces two logits
//! per node. Gradients are exact (reverse mode on a tape); training is
//! full-batch Adam on a weighted cross-entropy.

mod adam;
mod loss;
mod model;
mod tape;
mod train;

pub use adam::Adam;
pub use loss::{weighted_cross_entropy, ClassWeight};
pub use model::{
    anomaly_scores, forward, Activation, Checkpoint, ConvType, ModelConfig, ModelState, Parameter, PreparedGraph,
    StoredParam, StoredTensor,
};
pub use train::{loss_and_gradients, split_nodes, train, SplitConfig, TrainConfig, TrainOutcome};
