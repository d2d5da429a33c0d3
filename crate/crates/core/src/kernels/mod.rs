//! Primitive operators: dense and depthwise convolution, activations,
//! global average pooling and the residual add.
//!
//! Every operator is a pure function of its inputs. Work is split across
//! rayon workers by output row, and each output value is produced by one
//! worker running a fixed sequential reduction, so results are bit-identical
//! for any thread count.

mod conv;
mod depthwise;
mod elementwise;

use std::sync::atomic::{AtomicU64, Ordering};

pub(crate) use conv::conv2d_with;
pub use conv::{conv2d, conv2d_counted, Conv2dParams};
pub(crate) use depthwise::depthwise_with;
pub use depthwise::{depthwise_conv, depthwise_conv_counted, DepthwiseParams};
pub use elementwise::{
    add_residual, global_avgpool, relu, relu6, relu6_in_place, relu_in_place, RELU6_CEILING,
};

/// SAME padding: output extent is `ceil(input / stride)`, and when the total
/// padding is odd the extra row/column goes to the bottom/right.
///
/// Returns `(output_extent, padding_before)`.
pub fn same_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, total / 2)
}

/// Tally of multiply-accumulates actually issued by the counted kernel
/// variants. Taps that land on SAME padding are counted: they are multiplies
/// against the implicit zero border.
#[derive(Debug, Default)]
pub struct MaddCounter(AtomicU64);

impl MaddCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}
