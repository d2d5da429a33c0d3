use serde::Serialize;

use crate::architecture::{Extent, LayerOp, Model, ModelSpec};
use crate::error::{Error, Result};

use super::cascade::cascade_peak_elements;
use super::graph::{linear_bound_memory, schedule_memory, ComputeGraph, ScheduleMemory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryOptions {
    /// Bytes per stored activation: 2 for 16-bit floats, 4 for 32-bit.
    pub bytes_per_activation: usize,
    /// Channel groups used when cascading each block.
    pub split: usize,
    /// Stream every layer that reads the stem's input or output resolution
    /// instead of materializing it.
    pub first_layer_trick: bool,
}

impl Default for MemoryOptions {
    fn default() -> Self {
        Self {
            bytes_per_activation: 2,
            split: 1,
            first_layer_trick: true,
        }
    }
}

/// Widest tensor that has to be materialized at one spatial resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolutionRow {
    pub resolution: usize,
    pub channels: usize,
    /// `None` when the layers at this resolution are streamed.
    pub bytes: Option<u64>,
    pub kib: Option<f64>,
    pub streamed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockMemory {
    pub name: String,
    pub input: Extent,
    pub output: Extent,
    pub hidden: usize,
    pub split: usize,
    /// Peak of the cascaded block: input, output and one group's slices.
    pub peak_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryReport {
    pub alpha: f64,
    pub resolution: usize,
    pub bytes_per_activation: usize,
    pub split: usize,
    pub first_layer_trick: bool,
    pub rows: Vec<ResolutionRow>,
    pub max_row_bytes: u64,
    pub max_row_kib: f64,
    pub blocks: Vec<BlockMemory>,
    /// Whole network with each block as a single op, in its only order.
    pub schedule: ScheduleMemory,
    pub linear_bound_bytes: u64,
}

/// Per-resolution materialization table in the layer-table convention:
/// each layer is charged at its input resolution with the width it
/// produces. The head conv is folded into global pooling (every pixel's
/// 1x1 output is added straight into the pooled vector), so its width is
/// charged at 1x1.
///
/// Each bottleneck block counts as one op: its expanded tensor is treated
/// as disposable. Block-level peaks under the cascade are reported
/// separately in `blocks`.
pub fn memory_table(spec: &ModelSpec, options: MemoryOptions) -> Result<MemoryReport> {
    let bpa = options.bytes_per_activation;
    if bpa != 2 && bpa != 4 {
        return Err(Error::param(
            "act-bits",
            format!("{} bits per activation is not 16 or 32", bpa * 8),
        ));
    }
    if options.split == 0 {
        return Err(Error::param("split", "need at least one group"));
    }
    let plan = spec.plan()?;
    let stem_out = plan[0].output.height;

    let mut charged: Vec<(usize, usize)> = Vec::new();
    for layer in &plan {
        match (&layer.op, layer.name.as_str()) {
            (LayerOp::GlobalAvgPool, _) => {}
            (_, "head") => charged.push((1, layer.output.channels)),
            _ => charged.push((layer.input.height, layer.output.channels)),
        }
    }
    let mut resolutions: Vec<usize> = charged.iter().map(|&(r, _)| r).collect();
    resolutions.sort_unstable_by(|a, b| b.cmp(a));
    resolutions.dedup();

    let rows: Vec<ResolutionRow> = resolutions
        .into_iter()
        .map(|r| {
            let channels = charged
                .iter()
                .filter(|&&(cr, _)| cr == r)
                .map(|&(_, c)| c)
                .max()
                .unwrap();
            let streamed = options.first_layer_trick && r >= stem_out && r > 1;
            let bytes = (!streamed).then(|| (r * r * channels * bpa) as u64);
            ResolutionRow {
                resolution: r,
                channels,
                bytes,
                kib: bytes.map(|b| b as f64 / 1024.0),
                streamed,
            }
        })
        .collect();
    let max_row_bytes = rows.iter().filter_map(|r| r.bytes).max().unwrap_or(0);

    let model = Model::zeros(spec)?;
    let blocks = model
        .blocks
        .iter()
        .zip(
            plan.iter()
                .filter(|l| matches!(l.op, LayerOp::Bottleneck { .. })),
        )
        .map(|(b, layer)| {
            let split = options.split.min(b.hidden_channels());
            BlockMemory {
                name: layer.name.clone(),
                input: layer.input,
                output: layer.output,
                hidden: b.hidden_channels(),
                split,
                peak_bytes: cascade_peak_elements(layer.input.height, layer.input.width, b, split)
                    * bpa as u64,
            }
        })
        .collect();

    let graph = model_graph(spec, bpa)?;
    let order: Vec<usize> = (0..graph.ops().len()).collect();
    let schedule = schedule_memory(&graph, &order)?;
    let linear_bound_bytes = linear_bound_memory(&graph)?;

    Ok(MemoryReport {
        alpha: spec.width_multiplier,
        resolution: spec.input_resolution,
        bytes_per_activation: bpa,
        split: options.split,
        first_layer_trick: options.first_layer_trick,
        rows,
        max_row_bytes,
        max_row_kib: max_row_bytes as f64 / 1024.0,
        blocks,
        schedule,
        linear_bound_bytes,
    })
}

/// The network as a chain: one tensor per layer boundary and one op per
/// layer, with residual shortcuts inside the block ops.
pub fn model_graph(spec: &ModelSpec, bytes_per_activation: usize) -> Result<ComputeGraph> {
    let plan = spec.plan()?;
    let mut g = ComputeGraph::new();
    let bytes = |e: &Extent| (e.numel() * bytes_per_activation) as u64;
    let mut at = g.add_tensor("input", bytes(&plan[0].input));
    for layer in &plan {
        let next = g.add_tensor(format!("{}.out", layer.name), bytes(&layer.output));
        g.add_op(layer.name.clone(), &[at], &[next], 0)?;
        at = next;
    }
    Ok(g)
}
