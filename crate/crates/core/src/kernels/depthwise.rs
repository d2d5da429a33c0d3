use rayon::prelude::*;

use super::{same_padding, MaddCounter};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// One `kernel x kernel` filter per channel, laid out `(ky, kx, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthwiseParams {
    pub kernel: usize,
    pub stride: usize,
    pub channels: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl DepthwiseParams {
    pub fn new(
        kernel: usize,
        stride: usize,
        channels: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        if kernel != 1 && kernel != 3 {
            return Err(Error::param("kernel", format!("{kernel} is not 1 or 3")));
        }
        if stride != 1 && stride != 2 {
            return Err(Error::param("stride", format!("{stride} is not 1 or 2")));
        }
        if channels == 0 {
            return Err(Error::param("channels", "channel count must be positive"));
        }
        if weights.len() != kernel * kernel * channels {
            return Err(Error::param(
                "weights",
                format!(
                    "{} values, expected {}",
                    weights.len(),
                    kernel * kernel * channels
                ),
            ));
        }
        if bias.len() != channels {
            return Err(Error::param(
                "bias",
                format!("{} values, expected {channels}", bias.len()),
            ));
        }
        Ok(Self {
            kernel,
            stride,
            channels,
            weights,
            bias,
        })
    }

    pub fn zeros(kernel: usize, stride: usize, channels: usize) -> Result<Self> {
        Self::new(
            kernel,
            stride,
            channels,
            vec![0.0; kernel * kernel * channels],
            vec![0.0; channels],
        )
    }

    /// Centre tap 1, all others 0.
    pub fn delta(channels: usize, stride: usize) -> Self {
        let mut p = Self::zeros(3, stride, channels).expect("valid delta kernel");
        p.weights[4 * channels..5 * channels].fill(1.0);
        p
    }

    pub fn weight_dims(&self) -> [usize; 3] {
        [self.kernel, self.kernel, self.channels]
    }

    #[inline]
    pub fn weight(&self, ky: usize, kx: usize, c: usize) -> f32 {
        self.weights[(ky * self.kernel + kx) * self.channels + c]
    }

    pub fn output_shape(&self, input: Shape) -> Shape {
        let (h, _) = same_padding(input.height, self.kernel, self.stride);
        let (w, _) = same_padding(input.width, self.kernel, self.stride);
        Shape {
            batch: input.batch,
            height: h,
            width: w,
            channels: self.channels,
        }
    }

    /// Restriction to channels `range` (used by the cascade executor).
    pub fn slice_channels(&self, range: std::ops::Range<usize>) -> Self {
        let taps = self.kernel * self.kernel;
        let mut weights = Vec::with_capacity(taps * range.len());
        for t in 0..taps {
            weights.extend_from_slice(&self.weights[t * self.channels..][range.clone()]);
        }
        Self {
            kernel: self.kernel,
            stride: self.stride,
            channels: range.len(),
            weights,
            bias: self.bias[range].to_vec(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

pub fn depthwise_conv(input: &Tensor, p: &DepthwiseParams) -> Result<Tensor> {
    depthwise_with(input, p, None)
}

pub fn depthwise_conv_counted(
    input: &Tensor,
    p: &DepthwiseParams,
    counter: &MaddCounter,
) -> Result<Tensor> {
    depthwise_with(input, p, Some(counter))
}

pub(crate) fn depthwise_with(
    input: &Tensor,
    p: &DepthwiseParams,
    counter: Option<&MaddCounter>,
) -> Result<Tensor> {
    let ishape = input.shape();
    if ishape.channels != p.channels {
        return Err(Error::ChannelMismatch {
            expected: p.channels,
            found: ishape.channels,
        });
    }
    let oshape = p.output_shape(ishape);
    let (_, pad_top) = same_padding(ishape.height, p.kernel, p.stride);
    let (_, pad_left) = same_padding(ishape.width, p.kernel, p.stride);
    let (k, s, d) = (p.kernel, p.stride, p.channels);
    let src = input.data();

    let mut out = Tensor::zeros(oshape);
    out.data_mut()
        .par_chunks_mut(oshape.width * d)
        .enumerate()
        .for_each(|(row, dst)| {
            let (b, oy) = (row / oshape.height, row % oshape.height);
            let mut madds = 0u64;
            for (ox, px) in dst.chunks_exact_mut(d).enumerate() {
                px.copy_from_slice(&p.bias);
                for ky in 0..k {
                    let iy = (oy * s + ky) as isize - pad_top as isize;
                    for kx in 0..k {
                        madds += d as u64;
                        let ix = (ox * s + kx) as isize - pad_left as isize;
                        if iy < 0
                            || ix < 0
                            || iy as usize >= ishape.height
                            || ix as usize >= ishape.width
                        {
                            continue;
                        }
                        let base = ishape.offset(b, iy as usize, ix as usize, 0);
                        let pixel = &src[base..base + d];
                        let tap = &p.weights[(ky * k + kx) * d..][..d];
                        for ((o, &v), &w) in px.iter_mut().zip(pixel).zip(tap) {
                            *o += v * w;
                        }
                    }
                }
            }
            if let Some(c) = counter {
                c.add(madds);
            }
        });
    Ok(out)
}
