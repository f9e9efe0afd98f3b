//! Dense convolutional value network trained with an asymmetric loss.

mod activation;
mod adam;
mod conv;
mod init;
mod io;
mod loss;
mod network;
mod pool;
mod tensor;
mod train;

pub use activation::{selu, selu_grad, SELU_ALPHA, SELU_LAMBDA};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{conv2d_same, conv2d_same_backward};
pub use init::he_init;
pub use io::{load_weights, load_weights_expecting, read_weights, save_weights, write_weights};
pub use loss::{asym_loss, asym_term};
pub use network::{Architecture, Gradients, Layer, LayerShape, LayerSpec, Network};
pub use pool::{avg_pool_valid, avg_pool_valid_backward, pooled_len};
pub use tensor::Tensor;
pub use train::{evaluate_loss, train, EvalPoint, StepRecord, TrainConfig, TrainLog};
