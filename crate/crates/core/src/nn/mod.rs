//! Layer kernels with exact forward and backward passes.
//!
//! Every kernel works on [`Tensor4`](crate::tensor::Tensor4) in `f64` and is
//! deterministic: loops run in a fixed order and no reduction depends on
//! scheduling.

mod activation;
mod batchnorm;
mod conv;
mod dense;
pub mod init;
mod loss;
mod pool;
mod sgd;

pub use activation::{relu, relu_backward};
pub use batchnorm::{BatchNorm2d, BatchNormCache, BatchNormGrads, BN_EPSILON, BN_MOMENTUM};
pub use conv::{Conv2d, ConvGrads};
pub use dense::{Dense, DenseGrads};
pub use loss::{cross_entropy, cross_entropy_from_logits, softmax, softmax_cross_entropy_grad};
pub use pool::{MaxPool2d, PoolOutput};
pub use sgd::sgd_step;
