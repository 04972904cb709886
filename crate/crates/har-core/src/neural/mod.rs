//! Tensor math, the 1D residual network, reverse-mode gradients, Adam,
//! and the learning-rate schedule.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod resnet;
pub mod scalar;
pub mod schedule;
pub mod tensor;
pub mod util;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{NamedTensor, NetworkCheckpoint, OptimizerState};
pub use gradcheck::{gradient_check, gradient_check_corrupted, GradCheckReport};
pub use layers::Mode;
pub use loss::{cross_entropy, softmax_rows, StepOut};
pub use resnet::{build_arch, NetConfig, NeuralError, Network, PRETEXT_TASKS};
pub use scalar::Scalar;
pub use schedule::{lr_schedule, lr_schedule_with};
pub use tensor::Tensor;
