//! Small deterministic neural kernel: valid 3D convolutions, fully connected
//! layers, ReLU, softmax / cross-entropy, reverse-mode gradients and Adam.

mod adam;
pub mod format;
pub mod gradcheck;
mod layers;
mod loss;
mod net;
mod tensor;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use format::{fnv1a64, ModelEntry, ModelFile};
pub use layers::{Conv3d, Dense};
pub use loss::{half_tanh, softmax, softmax_cross_entropy};
pub use net::{BranchSpec, Cache, Grads, Head, InputGrads, LayerSpec, ModelParams, NetSpec};
pub use tensor::Tensor;
pub use train::{fit, TrainConfig, TrainReport};
