//! Reference implementations written for clarity, not speed: direct
//! summation convolutions, stage-by-stage MAdd recounts, and an exhaustive
//! schedule enumerator with its own liveness bookkeeping.
#![allow(dead_code)]

use btn_core::blocks::BottleneckParams;
use btn_core::kernels::{Conv2dParams, DepthwiseParams};
use btn_core::memory::ComputeGraph;
use btn_core::{Rng, Shape, Tensor};

/// Padding before the first row for SAME output `ceil(n / s)`; the odd
/// leftover row goes after.
pub fn pad_before(n: usize, k: usize, s: usize) -> usize {
    let out = (n + s - 1) / s;
    let needed = (out - 1) * s + k;
    if needed > n {
        (needed - n) / 2
    } else {
        0
    }
}

fn at(x: &Tensor, b: usize, y: isize, xx: isize, c: usize) -> Option<f32> {
    let s = x.shape();
    if y < 0 || xx < 0 || y as usize >= s.height || xx as usize >= s.width {
        return None;
    }
    Some(x.data()[((b * s.height + y as usize) * s.width + xx as usize) * s.channels + c])
}

fn out_shape(s: Shape, stride: usize, channels: usize) -> Shape {
    Shape::new(
        s.batch,
        (s.height + stride - 1) / stride,
        (s.width + stride - 1) / stride,
        channels,
    )
    .unwrap()
}

pub fn conv2d(x: &Tensor, p: &Conv2dParams) -> Tensor {
    let s = x.shape();
    let (k, st) = (p.kernel, p.stride);
    let o = out_shape(s, st, p.out_channels);
    let (pt, pl) = (
        pad_before(s.height, k, st) as isize,
        pad_before(s.width, k, st) as isize,
    );
    let mut out = Tensor::zeros(o);
    for b in 0..o.batch {
        for oy in 0..o.height {
            for ox in 0..o.width {
                for co in 0..p.out_channels {
                    let mut acc = p.bias[co];
                    for ky in 0..k {
                        for kx in 0..k {
                            for ci in 0..p.in_channels {
                                let iy = (oy * st + ky) as isize - pt;
                                let ix = (ox * st + kx) as isize - pl;
                                if let Some(v) = at(x, b, iy, ix, ci) {
                                    let w = p.weights[((ky * k + kx) * p.in_channels + ci)
                                        * p.out_channels
                                        + co];
                                    acc += v * w;
                                }
                            }
                        }
                    }
                    out.set(b, oy, ox, co, acc);
                }
            }
        }
    }
    out
}

/// Double-precision conv, plus for each output the sum of absolute terms
/// (a scale for judging float32 rounding).
pub fn conv2d_f64(x: &Tensor, p: &Conv2dParams) -> (Vec<f64>, Vec<f64>) {
    let s = x.shape();
    let (k, st) = (p.kernel, p.stride);
    let o = out_shape(s, st, p.out_channels);
    let (pt, pl) = (
        pad_before(s.height, k, st) as isize,
        pad_before(s.width, k, st) as isize,
    );
    let mut vals = Vec::with_capacity(o.numel());
    let mut scale = Vec::with_capacity(o.numel());
    for b in 0..o.batch {
        for oy in 0..o.height {
            for ox in 0..o.width {
                for co in 0..p.out_channels {
                    let mut acc = p.bias[co] as f64;
                    let mut mag = acc.abs();
                    for ky in 0..k {
                        for kx in 0..k {
                            for ci in 0..p.in_channels {
                                let iy = (oy * st + ky) as isize - pt;
                                let ix = (ox * st + kx) as isize - pl;
                                if let Some(v) = at(x, b, iy, ix, ci) {
                                    let w = p.weights[((ky * k + kx) * p.in_channels + ci)
                                        * p.out_channels
                                        + co];
                                    acc += v as f64 * w as f64;
                                    mag += (v as f64 * w as f64).abs();
                                }
                            }
                        }
                    }
                    vals.push(acc);
                    scale.push(mag);
                }
            }
        }
    }
    (vals, scale)
}

pub fn depthwise(x: &Tensor, p: &DepthwiseParams) -> Tensor {
    let s = x.shape();
    let (k, st) = (p.kernel, p.stride);
    let o = out_shape(s, st, p.channels);
    let (pt, pl) = (
        pad_before(s.height, k, st) as isize,
        pad_before(s.width, k, st) as isize,
    );
    let mut out = Tensor::zeros(o);
    for b in 0..o.batch {
        for oy in 0..o.height {
            for ox in 0..o.width {
                for c in 0..p.channels {
                    let mut acc = p.bias[c];
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * st + ky) as isize - pt;
                            let ix = (ox * st + kx) as isize - pl;
                            if let Some(v) = at(x, b, iy, ix, c) {
                                acc += v * p.weights[(ky * k + kx) * p.channels + c];
                            }
                        }
                    }
                    out.set(b, oy, ox, c, acc);
                }
            }
        }
    }
    out
}

pub fn relu6(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0).min(6.0))
}

pub fn block(x: &Tensor, p: &BottleneckParams) -> Tensor {
    let hidden = match &p.expand {
        Some(e) => relu6(&conv2d(x, e)),
        None => x.clone(),
    };
    let filtered = relu6(&depthwise(&hidden, &p.depthwise));
    let mut out = conv2d(&filtered, &p.project);
    if p.stride() == 1 && p.in_channels() == p.out_channels() {
        for (o, v) in out.data_mut().iter_mut().zip(x.data()) {
            *o += v;
        }
    }
    out
}

/// Every output pixel issues `k*k*ci*co` multiply-adds, border or not.
pub fn conv_madds(s: Shape, p: &Conv2dParams) -> u64 {
    let o = out_shape(s, p.stride, p.out_channels);
    (o.batch * o.height * o.width * p.kernel * p.kernel * p.in_channels * p.out_channels) as u64
}

pub fn depthwise_madds(s: Shape, p: &DepthwiseParams) -> u64 {
    let o = out_shape(s, p.stride, p.channels);
    (o.batch * o.height * o.width * p.kernel * p.kernel * p.channels) as u64
}

pub fn block_madds(s: Shape, p: &BottleneckParams) -> u64 {
    let hs = s.with_channels(p.hidden_channels());
    let expand = p.expand.as_ref().map_or(0, |e| conv_madds(s, e));
    let ds = out_shape(hs, p.stride(), p.hidden_channels());
    expand + depthwise_madds(hs, &p.depthwise) + conv_madds(ds, &p.project)
}

pub fn random_vec(rng: &mut Rng, n: usize, std: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gaussian_f32(0.0, std)).collect()
}

pub fn random_conv(rng: &mut Rng, k: usize, s: usize, ci: usize, co: usize) -> Conv2dParams {
    let w = random_vec(rng, k * k * ci * co, 1.0 / ((k * k * ci) as f32).sqrt());
    let b = random_vec(rng, co, 0.1);
    Conv2dParams::new(k, s, ci, co, w, b).unwrap()
}

pub fn random_depthwise(rng: &mut Rng, s: usize, c: usize) -> DepthwiseParams {
    let w = random_vec(rng, 9 * c, 1.0 / 3.0);
    let b = random_vec(rng, c, 0.1);
    DepthwiseParams::new(3, s, c, w, b).unwrap()
}

pub fn random_block(
    rng: &mut Rng,
    k: usize,
    k2: usize,
    t: f64,
    s: usize,
    fuse: bool,
) -> BottleneckParams {
    let mut p = BottleneckParams::zeros(k, k2, t, s, fuse).unwrap();
    let h = p.hidden_channels();
    if let Some(e) = p.expand.as_mut() {
        *e = random_conv(rng, 1, 1, k, h);
    }
    p.depthwise = random_depthwise(rng, s, h);
    p.project = random_conv(rng, 1, 1, h, k2);
    p
}

pub fn random_tensor(rng: &mut Rng, dims: [usize; 4]) -> Tensor {
    Tensor::random_gaussian(dims, rng, 0.0, 1.0).unwrap()
}

/// Peak of `order` computed from first principles: at step `i` a tensor is
/// counted when it was created at or before `i` (graph inputs at -1) and is
/// still needed at or after `i` (unread tensors forever).
pub fn peak_of(g: &ComputeGraph, order: &[usize]) -> u64 {
    let n = order.len();
    let mut step = vec![0usize; g.ops().len()];
    for (i, &op) in order.iter().enumerate() {
        step[op] = i;
    }
    let mut peak = 0;
    for i in 0..n {
        let mut live = g.ops()[order[i]].workspace;
        for (t, node) in g.tensors().iter().enumerate() {
            let born = g.producer(t).map_or(-1, |p| step[p] as isize);
            let dies = if g.consumers(t).is_empty() {
                n as isize
            } else {
                g.consumers(t)
                    .iter()
                    .map(|&c| step[c] as isize)
                    .max()
                    .unwrap()
            };
            if born <= i as isize && i as isize <= dies {
                live += node.bytes;
            }
        }
        peak = peak.max(live);
    }
    peak
}

/// All topological orders, in lexicographic order.
pub fn all_orders(g: &ComputeGraph) -> Vec<Vec<usize>> {
    fn rec(
        g: &ComputeGraph,
        done: &mut Vec<bool>,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if cur.len() == done.len() {
            out.push(cur.clone());
            return;
        }
        for op in 0..done.len() {
            if done[op] {
                continue;
            }
            let ready = g.ops()[op]
                .inputs
                .iter()
                .all(|&t| g.producer(t).map_or(true, |p| done[p]));
            if ready {
                done[op] = true;
                cur.push(op);
                rec(g, done, cur, out);
                cur.pop();
                done[op] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(
        g,
        &mut vec![false; g.ops().len()],
        &mut Vec::new(),
        &mut out,
    );
    out
}

/// Minimum peak over every order, and the first order reaching it.
pub fn exhaustive_min(g: &ComputeGraph) -> (u64, Vec<usize>) {
    all_orders(g)
        .into_iter()
        .map(|o| (peak_of(g, &o), o))
        .min_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
        .unwrap()
}

pub fn chain(sizes: &[u64]) -> ComputeGraph {
    let mut g = ComputeGraph::new();
    let ts: Vec<usize> = sizes
        .iter()
        .enumerate()
        .map(|(i, &b)| g.add_tensor(format!("t{i}"), b))
        .collect();
    for i in 1..ts.len() {
        g.add_op(format!("op{i}"), &[ts[i - 1]], &[ts[i]], 0)
            .unwrap();
    }
    g
}

/// Fork into two two-op branches and join. Running the first branch first
/// peaks at 260 bytes; the second branch first peaks at 300.
pub fn diamond() -> ComputeGraph {
    let mut g = ComputeGraph::new();
    let i = g.add_tensor("in", 20);
    let s = g.add_tensor("s", 10);
    let p1 = g.add_tensor("p1", 50);
    let q1 = g.add_tensor("q1", 50);
    let p2 = g.add_tensor("p2", 10);
    let q2 = g.add_tensor("q2", 200);
    let o = g.add_tensor("out", 10);
    g.add_op("split", &[i], &[s], 0).unwrap();
    g.add_op("a1", &[s], &[p1], 0).unwrap();
    g.add_op("b1", &[p1], &[q1], 0).unwrap();
    g.add_op("a2", &[s], &[p2], 0).unwrap();
    g.add_op("b2", &[p2], &[q2], 0).unwrap();
    g.add_op("join", &[q1, q2], &[o], 0).unwrap();
    g
}

/// Bottleneck block with an explicit shortcut: `x` bypasses three ops.
pub fn residual_explicit(k: u64, t: u64) -> ComputeGraph {
    let mut g = ComputeGraph::new();
    let x = g.add_tensor("x", k);
    let h1 = g.add_tensor("expanded", k * t);
    let h2 = g.add_tensor("filtered", k * t);
    let p = g.add_tensor("projected", k);
    let y = g.add_tensor("y", k);
    g.add_op("expand", &[x], &[h1], 0).unwrap();
    g.add_op("depthwise", &[h1], &[h2], 0).unwrap();
    g.add_op("project", &[h2], &[p], 0).unwrap();
    g.add_op("add", &[x, p], &[y], 0).unwrap();
    g
}

/// Chain of residual blocks, each one op whose inner tensor is workspace.
pub fn residual_fused(blocks: usize, k: u64, t: u64) -> ComputeGraph {
    let mut g = ComputeGraph::new();
    let mut x = g.add_tensor("x0", k);
    for i in 0..blocks {
        let y = g.add_tensor(format!("x{}", i + 1), k);
        g.add_op(format!("block{i}"), &[x], &[y], k * t).unwrap();
        x = y;
    }
    g
}

/// Three parallel branches of different widths concatenated.
pub fn inception() -> ComputeGraph {
    let mut g = ComputeGraph::new();
    let x = g.add_tensor("x", 64);
    let a = g.add_tensor("a", 32);
    let b1 = g.add_tensor("b1", 96);
    let b2 = g.add_tensor("b2", 48);
    let c1 = g.add_tensor("c1", 16);
    let c2 = g.add_tensor("c2", 128);
    let y = g.add_tensor("y", 208);
    g.add_op("a", &[x], &[a], 0).unwrap();
    g.add_op("b1", &[x], &[b1], 8).unwrap();
    g.add_op("b2", &[b1], &[b2], 0).unwrap();
    g.add_op("c1", &[x], &[c1], 0).unwrap();
    g.add_op("c2", &[c1], &[c2], 4).unwrap();
    g.add_op("concat", &[a, b2, c2], &[y], 0).unwrap();
    g
}

/// Random DAG with `ops` ops. Op `i` reads one or two tensors chosen among
/// the graph input and earlier outputs, and writes one or two tensors.
pub fn random_dag(rng: &mut Rng, ops: usize) -> ComputeGraph {
    let mut g = ComputeGraph::new();
    let mut avail = vec![g.add_tensor("in", 1 + rng.below(100) as u64)];
    for i in 0..ops {
        let mut ins = vec![avail[rng.below(avail.len())]];
        if rng.below(3) == 0 {
            ins.push(avail[rng.below(avail.len())]);
        }
        let outs: Vec<usize> = (0..1 + usize::from(rng.below(4) == 0))
            .map(|j| g.add_tensor(format!("op{i}.out{j}"), 1 + rng.below(200) as u64))
            .collect();
        let ws = if rng.below(4) == 0 {
            rng.below(50) as u64
        } else {
            0
        };
        g.add_op(format!("op{i}"), &ins, &outs, ws).unwrap();
        avail.extend(outs);
    }
    g
}

/// Named graphs of at most 8 ops.
pub fn corpus() -> Vec<(String, ComputeGraph)> {
    let mut out = vec![
        ("single".to_string(), chain(&[100, 50])),
        ("chain".to_string(), chain(&[100, 200, 50])),
        (
            "long-chain".to_string(),
            chain(&[8, 64, 16, 96, 24, 144, 32, 7, 1]),
        ),
        ("diamond".to_string(), diamond()),
        ("residual".to_string(), residual_explicit(32, 6)),
        ("residual-fused".to_string(), residual_fused(8, 32, 6)),
        ("inception".to_string(), inception()),
    ];
    let mut rng = Rng::new(2018);
    for i in 0..60 {
        let ops = 2 + i % 7;
        out.push((format!("random-{i}"), random_dag(&mut rng, ops)));
    }
    out
}
