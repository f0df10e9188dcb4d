pub mod dataset;
pub mod error;
pub mod gradcam;
pub mod kv;
pub mod metrics;
pub mod models;
pub mod network;
pub mod nn;
pub mod rng;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Shape, Tensor4};
