//! Differentiable building blocks: circular convolution, batch
//! normalization, activation, pooling, loss, and the Adam optimizer.

mod activation;
mod adam;
mod batchnorm;
mod block;
mod conv;
pub mod gradcheck;
mod layer;
mod loss;
mod pool;
mod scalar;
mod tensor;

pub use activation::{relu, Relu};
pub use adam::{adam_step, AdamConfig, AdamState, StepLr};
pub use batchnorm::{BatchNorm2d, NormMode, DEFAULT_EPSILON, DEFAULT_MOMENTUM};
pub use block::ConvBlock;
pub use conv::{conv2d_circular, conv2d_circular_direct, Conv2d, ConvParams, Padding, KERNEL};
pub use gradcheck::{finite_diff_check, finite_diff_check_mse, GradCheck};
pub use layer::{Layer, Param, Sequential};
pub use loss::{mse_loss, mse_loss_grad};
pub use pool::{maxpool2, upsample2, upsample2_backward, MaxPool2, Upsample2};
pub use scalar::Scalar;
pub use tensor::{concat_channels, split_channels, Tensor4};
