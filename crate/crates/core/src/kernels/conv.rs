use rayon::prelude::*;

use super::{same_padding, MaddCounter};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Dense convolution with a square `kernel x kernel` window and SAME padding.
///
/// Weights are laid out `(ky, kx, in_channel, out_channel)`, so the filter
/// taps for one input channel form a contiguous output-channel row.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dParams {
    pub kernel: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Conv2dParams {
    pub fn new(
        kernel: usize,
        stride: usize,
        in_channels: usize,
        out_channels: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        if kernel != 1 && kernel != 3 {
            return Err(Error::param("kernel", format!("{kernel} is not 1 or 3")));
        }
        if stride != 1 && stride != 2 {
            return Err(Error::param("stride", format!("{stride} is not 1 or 2")));
        }
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::param("channels", "channel counts must be positive"));
        }
        let expected = kernel * kernel * in_channels * out_channels;
        if weights.len() != expected {
            return Err(Error::param(
                "weights",
                format!("{} values, expected {expected}", weights.len()),
            ));
        }
        if bias.len() != out_channels {
            return Err(Error::param(
                "bias",
                format!("{} values, expected {out_channels}", bias.len()),
            ));
        }
        Ok(Self {
            kernel,
            stride,
            in_channels,
            out_channels,
            weights,
            bias,
        })
    }

    pub fn zeros(
        kernel: usize,
        stride: usize,
        in_channels: usize,
        out_channels: usize,
    ) -> Result<Self> {
        Self::new(
            kernel,
            stride,
            in_channels,
            out_channels,
            vec![0.0; kernel * kernel * in_channels * out_channels],
            vec![0.0; out_channels],
        )
    }

    /// 1x1, stride 1, identity channel map.
    pub fn identity(channels: usize) -> Self {
        let mut p = Self::zeros(1, 1, channels, channels).expect("valid identity conv");
        for c in 0..channels {
            p.weights[c * channels + c] = 1.0;
        }
        p
    }

    pub fn weight_dims(&self) -> [usize; 4] {
        [
            self.kernel,
            self.kernel,
            self.in_channels,
            self.out_channels,
        ]
    }

    #[inline]
    pub fn weight(&self, ky: usize, kx: usize, ci: usize, co: usize) -> f32 {
        self.weights[((ky * self.kernel + kx) * self.in_channels + ci) * self.out_channels + co]
    }

    pub fn output_shape(&self, input: Shape) -> Shape {
        let (h, _) = same_padding(input.height, self.kernel, self.stride);
        let (w, _) = same_padding(input.width, self.kernel, self.stride);
        Shape {
            batch: input.batch,
            height: h,
            width: w,
            channels: self.out_channels,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Restriction to output channels `range`.
    pub fn slice_out_channels(&self, range: std::ops::Range<usize>) -> Self {
        let rows = self.kernel * self.kernel * self.in_channels;
        let mut weights = Vec::with_capacity(rows * range.len());
        for r in 0..rows {
            weights.extend_from_slice(&self.weights[r * self.out_channels..][range.clone()]);
        }
        Self {
            kernel: self.kernel,
            stride: self.stride,
            in_channels: self.in_channels,
            out_channels: range.len(),
            weights,
            bias: self.bias[range].to_vec(),
        }
    }
}

pub fn conv2d(input: &Tensor, p: &Conv2dParams) -> Result<Tensor> {
    conv2d_with(input, p, None)
}

pub fn conv2d_counted(input: &Tensor, p: &Conv2dParams, counter: &MaddCounter) -> Result<Tensor> {
    conv2d_with(input, p, Some(counter))
}

pub(crate) fn conv2d_with(
    input: &Tensor,
    p: &Conv2dParams,
    counter: Option<&MaddCounter>,
) -> Result<Tensor> {
    let ishape = input.shape();
    if ishape.channels != p.in_channels {
        return Err(Error::ChannelMismatch {
            expected: p.in_channels,
            found: ishape.channels,
        });
    }
    let oshape = p.output_shape(ishape);
    let (_, pad_top) = same_padding(ishape.height, p.kernel, p.stride);
    let (_, pad_left) = same_padding(ishape.width, p.kernel, p.stride);
    let (k, s, di, dj) = (p.kernel, p.stride, p.in_channels, p.out_channels);
    let src = input.data();
    let tap_madds = (di * dj) as u64;

    let mut out = Tensor::zeros(oshape);
    out.data_mut()
        .par_chunks_mut(oshape.width * dj)
        .enumerate()
        .for_each(|(row, dst)| {
            let (b, oy) = (row / oshape.height, row % oshape.height);
            let mut madds = 0u64;
            for (ox, px) in dst.chunks_exact_mut(dj).enumerate() {
                px.copy_from_slice(&p.bias);
                for ky in 0..k {
                    let iy = (oy * s + ky) as isize - pad_top as isize;
                    for kx in 0..k {
                        madds += tap_madds;
                        let ix = (ox * s + kx) as isize - pad_left as isize;
                        if iy < 0
                            || ix < 0
                            || iy as usize >= ishape.height
                            || ix as usize >= ishape.width
                        {
                            continue;
                        }
                        let base = ishape.offset(b, iy as usize, ix as usize, 0);
                        let pixel = &src[base..base + di];
                        let tap = &p.weights[(ky * k + kx) * di * dj..][..di * dj];
                        for (&v, wrow) in pixel.iter().zip(tap.chunks_exact(dj)) {
                            for (o, &w) in px.iter_mut().zip(wrow) {
                                *o += v * w;
                            }
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
