//! Inference engine for inverted-residual networks with linear bottlenecks
//! (MobileNetV2), plus the analysis around it: multiply-add and parameter
//! counts, activation-memory planning with exact schedule search, a
//! channel-split cascade executor, and numerical experiments on when ReLU
//! loses information.
//!
//! Tensors are NHWC `f32`. Convolutions are cross-correlations with SAME
//! padding, and every kernel reduces in a fixed order so outputs do not
//! depend on the thread count.

pub mod architecture;
pub mod blocks;
pub mod cost;
pub mod error;
pub mod io;
pub mod kernels;
pub mod memory;
pub mod rng;
pub mod tensor;
pub mod theory;

pub use architecture::{build_model, ExecOptions, Model, ModelSpec};
pub use blocks::{bottleneck_forward, BottleneckParams};
pub use error::{Error, Result};
pub use io::{load_tensor, read_tensor, save_tensor, write_tensor};
pub use kernels::{Conv2dParams, DepthwiseParams, MaddCounter};
pub use rng::Rng;
pub use tensor::{Shape, Tensor};
