//! Multiply-add and parameter accounting.
//!
//! One multiply-accumulate counts as one MAdd; bias adds, pooling and the
//! residual add are free. Parameters are counted in folded form: conv
//! weights plus one bias per output channel. The batch-norm scales that
//! folding absorbs into the weights are tallied in a separate column.

use serde::Serialize;

use crate::architecture::{Extent, LayerOp, Model, ModelSpec};
use crate::error::Result;
use crate::kernels::MaddCounter;
use crate::tensor::Tensor;

/// Dense `k x k` conv at stride `s` under SAME padding.
pub fn madds_standard_conv(
    h: usize,
    w: usize,
    d_in: usize,
    d_out: usize,
    k: usize,
    s: usize,
) -> u64 {
    (h.div_ceil(s) * w.div_ceil(s)) as u64 * (d_in * d_out * k * k) as u64
}

/// Depthwise `k x k` at stride `s` followed by a 1x1 conv to `d_out`.
pub fn madds_depthwise_separable(
    h: usize,
    w: usize,
    d_in: usize,
    d_out: usize,
    k: usize,
    s: usize,
) -> u64 {
    (h.div_ceil(s) * w.div_ceil(s)) as u64 * d_in as u64 * (k * k + d_out) as u64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub name: String,
    pub output: Extent,
    pub madds: u64,
    pub params: u64,
    /// Batch-norm scale factors folded into this layer's weights.
    pub bn_scale_params: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostTotals {
    pub madds: u64,
    pub params: u64,
    pub bn_scale_params: u64,
    /// `params + bn_scale_params`: the count with unfolded batch norm.
    pub params_with_bn_scale: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub alpha: f64,
    pub resolution: usize,
    pub num_classes: usize,
    pub rows: Vec<CostRow>,
    pub totals: CostTotals,
}

pub fn model_cost(spec: &ModelSpec) -> Result<CostReport> {
    let model = Model::zeros(spec)?;
    let mut blocks = model.blocks.iter();
    let mut rows = Vec::new();
    for layer in spec.plan()? {
        let (h, w) = (layer.input.height, layer.input.width);
        let (madds, params, bn) = match &layer.op {
            LayerOp::Conv { kernel, stride, .. } => {
                let conv = match layer.name.as_str() {
                    "stem" => &model.stem,
                    "head" => &model.head,
                    _ => &model.classifier,
                };
                let bn = if layer.name == "classifier" {
                    0
                } else {
                    conv.out_channels
                };
                (
                    madds_standard_conv(
                        h,
                        w,
                        conv.in_channels,
                        conv.out_channels,
                        *kernel,
                        *stride,
                    ),
                    conv.param_count(),
                    bn,
                )
            }
            LayerOp::Bottleneck { .. } => {
                let b = blocks.next().expect("plan and model agree on block count");
                let bn = b.expand.as_ref().map_or(0, |e| e.out_channels)
                    + b.hidden_channels()
                    + b.out_channels();
                (b.madds(h, w), b.param_count(), bn)
            }
            LayerOp::GlobalAvgPool => (0, 0, 0),
        };
        rows.push(CostRow {
            name: layer.name,
            output: layer.output,
            madds,
            params: params as u64,
            bn_scale_params: bn as u64,
        });
    }
    let madds = rows.iter().map(|r| r.madds).sum();
    let params = rows.iter().map(|r| r.params).sum();
    let bn_scale_params = rows.iter().map(|r| r.bn_scale_params).sum();
    Ok(CostReport {
        alpha: spec.width_multiplier,
        resolution: spec.input_resolution,
        num_classes: spec.num_classes,
        rows,
        totals: CostTotals {
            madds,
            params,
            bn_scale_params,
            params_with_bn_scale: params + bn_scale_params,
        },
    })
}

/// Multiply-adds the kernels actually issue for one forward pass over the
/// whole batch.
pub fn instrumented_count(model: &Model, input: &Tensor) -> Result<u64> {
    let counter = MaddCounter::new();
    model.forward_counted(input, &counter)?;
    Ok(counter.get())
}
