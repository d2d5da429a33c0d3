use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::blocks::BottleneckParams;
use crate::error::{Error, Result};
use crate::kernels::{conv2d_with, depthwise_with, relu6_in_place, same_padding, MaddCounter};
use crate::tensor::{Shape, Tensor};

/// Partition of a block's expanded channels into `split` contiguous groups
/// whose sizes differ by at most one (the first `n % split` groups hold the
/// extra channel), so the largest group is `ceil(n / split)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CascadePlan {
    channels: usize,
    groups: Vec<Range<usize>>,
}

impl CascadePlan {
    pub fn new(channels: usize, split: usize) -> Result<Self> {
        if split == 0 {
            return Err(Error::param("split", "need at least one group"));
        }
        if split > channels {
            return Err(Error::SplitTooLarge { split, channels });
        }
        let (base, extra) = (channels / split, channels % split);
        let mut groups = Vec::with_capacity(split);
        let mut start = 0;
        for i in 0..split {
            let len = base + usize::from(i < extra);
            groups.push(start..start + len);
            start += len;
        }
        Ok(Self { channels, groups })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn split(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    pub fn max_group(&self) -> usize {
        self.channels.div_ceil(self.groups.len())
    }
}

/// Peak elements held by a cascaded block over one image: its input, the
/// output accumulator, and one group's expanded and filtered slices. When
/// the expansion is fused away the group reads the input directly and only
/// the filtered slice is new.
pub fn cascade_peak_elements(
    height: usize,
    width: usize,
    p: &BottleneckParams,
    split: usize,
) -> u64 {
    let (ho, wo) = (
        same_padding(height, 3, p.stride()).0,
        same_padding(width, 3, p.stride()).0,
    );
    let group = p.hidden_channels().div_ceil(split) as u64;
    let input = (height * width * p.in_channels()) as u64;
    let output = (ho * wo * p.out_channels()) as u64;
    let expanded = if p.expand.is_some() {
        (height * width) as u64 * group
    } else {
        0
    };
    input + output + expanded + (ho * wo) as u64 * group
}

/// Runs a bottleneck block one channel group at a time, summing each
/// group's projection into a single output buffer:
/// `F(x) = sum_i A_i(N(B_i x))`. Only one group's intermediate tensors
/// exist at any time.
///
/// Groups are visited in order and each accumulates its projection terms in
/// channel order, so the sums are formed exactly as the monolithic block
/// forms them and the output is bit-identical for every split.
///
/// Returns the output and the peak bytes (f32) the schedule needs.
pub fn cascade_execute(
    input: &Tensor,
    p: &BottleneckParams,
    plan: &CascadePlan,
) -> Result<(Tensor, u64)> {
    cascade_execute_with(input, p, plan, None)
}

pub fn cascade_execute_counted(
    input: &Tensor,
    p: &BottleneckParams,
    plan: &CascadePlan,
    counter: &MaddCounter,
) -> Result<(Tensor, u64)> {
    cascade_execute_with(input, p, plan, Some(counter))
}

pub(crate) fn cascade_execute_with(
    input: &Tensor,
    p: &BottleneckParams,
    plan: &CascadePlan,
    counter: Option<&MaddCounter>,
) -> Result<(Tensor, u64)> {
    let ishape = input.shape();
    if ishape.channels != p.in_channels() {
        return Err(Error::ChannelMismatch {
            expected: p.in_channels(),
            found: ishape.channels,
        });
    }
    if plan.channels() != p.hidden_channels() {
        return Err(Error::param(
            "split",
            format!(
                "plan covers {} channels, block expands to {}",
                plan.channels(),
                p.hidden_channels()
            ),
        ));
    }
    let oshape = p
        .depthwise
        .output_shape(ishape.with_channels(p.hidden_channels()))
        .with_channels(p.out_channels());
    let mut out = Tensor::zeros(oshape);
    for px in out.data_mut().chunks_exact_mut(oshape.channels) {
        px.copy_from_slice(&p.project.bias);
    }

    for g in plan.groups() {
        let mut hidden = match &p.expand {
            Some(e) => conv2d_with(input, &e.slice_out_channels(g.clone()), counter)?,
            None => slice_channels(input, g.clone()),
        };
        if p.expand.is_some() {
            relu6_in_place(&mut hidden);
        }
        let mut filtered =
            depthwise_with(&hidden, &p.depthwise.slice_channels(g.clone()), counter)?;
        drop(hidden);
        relu6_in_place(&mut filtered);
        project_accumulate(&mut out, &filtered, p, g.clone(), counter);
    }

    if p.has_shortcut() {
        for (o, &x) in out.data_mut().iter_mut().zip(input.data()) {
            *o += x;
        }
    }
    let peak = cascade_peak_elements(ishape.height, ishape.width, p, plan.split())
        * ishape.batch as u64
        * 4;
    Ok((out, peak))
}

/// `out += filtered . W[group, :]` for the projection rows of `group`.
fn project_accumulate(
    out: &mut Tensor,
    filtered: &Tensor,
    p: &BottleneckParams,
    group: Range<usize>,
    counter: Option<&MaddCounter>,
) {
    let k = p.out_channels();
    let gl = group.len();
    let rows = &p.project.weights[group.start * k..group.end * k];
    let src = filtered.data();
    out.data_mut()
        .par_chunks_mut(k)
        .zip(src.par_chunks(gl))
        .for_each(|(px, x)| {
            for (&v, wrow) in x.iter().zip(rows.chunks_exact(k)) {
                for (o, &w) in px.iter_mut().zip(wrow) {
                    *o += v * w;
                }
            }
        });
    if let Some(c) = counter {
        c.add((out.shape().batch * out.shape().spatial() * gl * k) as u64);
    }
}

/// Copy of channels `range` of every pixel.
pub fn slice_channels(t: &Tensor, range: Range<usize>) -> Tensor {
    let s = t.shape();
    let mut data = Vec::with_capacity(t.numel() / s.channels * range.len());
    for px in t.data().chunks_exact(s.channels) {
        data.extend_from_slice(&px[range.clone()]);
    }
    Tensor::from_vec(
        Shape {
            channels: range.len(),
            ..s
        },
        data,
    )
    .expect("sliced length matches shape")
}
