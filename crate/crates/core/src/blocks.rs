//! The inverted-residual bottleneck block.
//!
//! ```text
//! h x w x k   --1x1 conv, ReLU6-->        h x w x tk
//! h x w x tk  --3x3 dwise s, ReLU6-->     h/s x w/s x tk
//! h/s x w/s x tk --1x1 conv (linear)-->   h/s x w/s x k'
//! ```
//!
//! The projection carries no activation. A shortcut adds the block input
//! to the projection output exactly when `stride == 1 && k == k'`.

use crate::error::{Error, Result};
use crate::kernels::{
    conv2d_with, depthwise_with, relu6_in_place, Conv2dParams, DepthwiseParams, MaddCounter,
};
use crate::tensor::Tensor;

/// Expanded width `round(t * k)`.
pub fn expanded_channels(in_channels: usize, expansion: f64) -> usize {
    (expansion * in_channels as f64).round() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct BottleneckParams {
    in_channels: usize,
    out_channels: usize,
    expansion: f64,
    stride: usize,
    /// `None` when a t=1 block skips the expansion conv.
    pub expand: Option<Conv2dParams>,
    pub depthwise: DepthwiseParams,
    pub project: Conv2dParams,
}

impl BottleneckParams {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        expansion: f64,
        stride: usize,
        expand: Option<Conv2dParams>,
        depthwise: DepthwiseParams,
        project: Conv2dParams,
    ) -> Result<Self> {
        if !(expansion >= 1.0) || !expansion.is_finite() {
            return Err(Error::param(
                "expansion",
                format!("{expansion} is not a finite ratio >= 1"),
            ));
        }
        let hidden = expanded_channels(in_channels, expansion);
        match &expand {
            Some(e) => {
                if (e.kernel, e.stride, e.in_channels, e.out_channels)
                    != (1, 1, in_channels, hidden)
                {
                    return Err(Error::param(
                        "expand",
                        format!(
                            "expected 1x1/s1 conv {in_channels}->{hidden}, got {k}x{k}/s{} {}->{}",
                            e.stride,
                            e.in_channels,
                            e.out_channels,
                            k = e.kernel
                        ),
                    ));
                }
            }
            None if hidden != in_channels => {
                return Err(Error::param(
                    "expand",
                    format!("expansion conv can only be skipped when t*k == k ({hidden} != {in_channels})"),
                ));
            }
            None => {}
        }
        if (depthwise.kernel, depthwise.stride, depthwise.channels) != (3, stride, hidden) {
            return Err(Error::param(
                "depthwise",
                format!(
                    "expected 3x3/s{stride} over {hidden} channels, got {k}x{k}/s{} over {}",
                    depthwise.stride,
                    depthwise.channels,
                    k = depthwise.kernel
                ),
            ));
        }
        if (
            project.kernel,
            project.stride,
            project.in_channels,
            project.out_channels,
        ) != (1, 1, hidden, out_channels)
        {
            return Err(Error::param(
                "project",
                format!(
                    "expected 1x1/s1 conv {hidden}->{out_channels}, got {k}x{k}/s{} {}->{}",
                    project.stride,
                    project.in_channels,
                    project.out_channels,
                    k = project.kernel
                ),
            ));
        }
        Ok(Self {
            in_channels,
            out_channels,
            expansion,
            stride,
            expand,
            depthwise,
            project,
        })
    }

    /// All-zero weights. With `fuse_t1_expand`, a block whose expanded width
    /// equals its input width gets no expansion conv.
    pub fn zeros(
        in_channels: usize,
        out_channels: usize,
        expansion: f64,
        stride: usize,
        fuse_t1_expand: bool,
    ) -> Result<Self> {
        let hidden = expanded_channels(in_channels, expansion);
        let expand = if fuse_t1_expand && hidden == in_channels {
            None
        } else {
            Some(Conv2dParams::zeros(1, 1, in_channels, hidden)?)
        };
        Self::new(
            in_channels,
            out_channels,
            expansion,
            stride,
            expand,
            DepthwiseParams::zeros(3, stride, hidden)?,
            Conv2dParams::zeros(1, 1, hidden, out_channels)?,
        )
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn expansion(&self) -> f64 {
        self.expansion
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn hidden_channels(&self) -> usize {
        self.depthwise.channels
    }

    pub fn has_shortcut(&self) -> bool {
        self.stride == 1 && self.in_channels == self.out_channels
    }

    /// Asserts that this block carries a shortcut; errors otherwise.
    pub fn require_shortcut(self) -> Result<Self> {
        if self.has_shortcut() {
            Ok(self)
        } else {
            Err(Error::param(
                "shortcut",
                format!(
                    "a shortcut needs stride 1 and equal widths (stride {}, {} -> {})",
                    self.stride, self.in_channels, self.out_channels
                ),
            ))
        }
    }

    /// Multiply-adds for one `height x width` image, skipping the expansion
    /// stage when it is fused away.
    pub fn madds(&self, height: usize, width: usize) -> u64 {
        let hidden = self.hidden_channels() as u64;
        let (ho, wo) = (
            height.div_ceil(self.stride) as u64,
            width.div_ceil(self.stride) as u64,
        );
        let expand = match self.expand {
            Some(_) => (height * width) as u64 * self.in_channels as u64 * hidden,
            None => 0,
        };
        expand + ho * wo * hidden * 9 + ho * wo * hidden * self.out_channels as u64
    }

    pub fn param_count(&self) -> usize {
        self.expand.as_ref().map_or(0, Conv2dParams::param_count)
            + self.depthwise.param_count()
            + self.project.param_count()
    }
}

/// Closed-form multiply-adds of a block with 3x3 depthwise kernel and an
/// expansion conv: expansion at input resolution, depthwise and projection
/// at output resolution. For stride 1 this is `h*w*k*t*(k + 9 + k')`.
pub fn bottleneck_madds(
    height: usize,
    width: usize,
    in_channels: usize,
    out_channels: usize,
    expansion: f64,
    stride: usize,
) -> u64 {
    let hidden = expanded_channels(in_channels, expansion) as u64;
    let (h, w) = (height as u64, width as u64);
    let (ho, wo) = (h.div_ceil(stride as u64), w.div_ceil(stride as u64));
    h * w * in_channels as u64 * hidden + ho * wo * hidden * (9 + out_channels as u64)
}

pub fn bottleneck_forward(input: &Tensor, p: &BottleneckParams) -> Result<Tensor> {
    forward_with(input, p, None, &mut |_, _| {})
}

pub fn bottleneck_forward_counted(
    input: &Tensor,
    p: &BottleneckParams,
    counter: &MaddCounter,
) -> Result<Tensor> {
    forward_with(input, p, Some(counter), &mut |_, _| {})
}

/// Which post-activation tensor an observer is shown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockStage {
    Expand,
    Depthwise,
}

pub(crate) fn forward_with(
    input: &Tensor,
    p: &BottleneckParams,
    counter: Option<&MaddCounter>,
    observe: &mut dyn FnMut(BlockStage, &Tensor),
) -> Result<Tensor> {
    if input.shape().channels != p.in_channels {
        return Err(Error::ChannelMismatch {
            expected: p.in_channels,
            found: input.shape().channels,
        });
    }
    let expanded;
    let hidden = match &p.expand {
        Some(e) => {
            let mut h = conv2d_with(input, e, counter)?;
            relu6_in_place(&mut h);
            observe(BlockStage::Expand, &h);
            expanded = h;
            &expanded
        }
        None => input,
    };
    let mut filtered = depthwise_with(hidden, &p.depthwise, counter)?;
    relu6_in_place(&mut filtered);
    observe(BlockStage::Depthwise, &filtered);
    let mut out = conv2d_with(&filtered, &p.project, counter)?;
    if p.has_shortcut() {
        for (o, &x) in out.data_mut().iter_mut().zip(input.data()) {
            *o += x;
        }
    }
    Ok(out)
}
