//! How many channels are positive after each ReLU6, per layer.

use serde::Serialize;

use crate::architecture::{ActivationSite, Model};
use crate::error::{Error, Result};
use crate::kernels::{conv2d, depthwise_conv, relu6_in_place, Conv2dParams, DepthwiseParams};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

/// Epsilon added to the batch variance during calibration.
pub const BN_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Count positive channels at every pixel of every image.
    #[default]
    PerLocation,
    /// Count, per image, channels positive anywhere in the feature map.
    PerFeatureMap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerActivation {
    pub index: usize,
    pub name: String,
    pub channels: usize,
    /// Positive-channel count needed to keep the layer's input space:
    /// the input dimension, which is `channels / t` inside a block.
    pub threshold: f64,
    pub min: usize,
    pub mean: f64,
    pub max: usize,
    pub mean_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivationStats {
    pub aggregation: Aggregation,
    pub batch: usize,
    pub layers: Vec<LayerActivation>,
}

struct Tally {
    name: String,
    channels: usize,
    threshold: f64,
    min: usize,
    max: usize,
    sum: u64,
    samples: u64,
}

/// Runs the batch one image at a time and tallies every post-ReLU6 tensor.
pub fn activation_pattern_stats(
    model: &Model,
    batch: &Tensor,
    aggregation: Aggregation,
) -> Result<ActivationStats> {
    model.check_input(batch)?;
    let s = batch.shape();
    let per_image = s.spatial() * s.channels;
    let mut tallies: Vec<Tally> = Vec::new();
    for b in 0..s.batch {
        let image = Tensor::from_vec(
            Shape { batch: 1, ..s },
            batch.data()[b * per_image..(b + 1) * per_image].to_vec(),
        )?;
        let mut site_index = 0;
        model.forward_observed(&image, &mut |site: ActivationSite<'_>| {
            if tallies.len() == site_index {
                tallies.push(Tally {
                    name: site.name.to_string(),
                    channels: site.tensor.shape().channels,
                    threshold: site.input_dim as f64,
                    min: usize::MAX,
                    max: 0,
                    sum: 0,
                    samples: 0,
                });
            }
            let tally = &mut tallies[site_index];
            site_index += 1;
            let c = site.tensor.shape().channels;
            let mut record = |count: usize| {
                tally.min = tally.min.min(count);
                tally.max = tally.max.max(count);
                tally.sum += count as u64;
                tally.samples += 1;
            };
            match aggregation {
                Aggregation::PerLocation => {
                    for px in site.tensor.data().chunks_exact(c) {
                        record(px.iter().filter(|&&v| v > 0.0).count());
                    }
                }
                Aggregation::PerFeatureMap => {
                    let mut any = vec![false; c];
                    for px in site.tensor.data().chunks_exact(c) {
                        for (a, &v) in any.iter_mut().zip(px) {
                            *a |= v > 0.0;
                        }
                    }
                    record(any.into_iter().filter(|&a| a).count());
                }
            }
        })?;
    }
    let layers = tallies
        .into_iter()
        .enumerate()
        .map(|(index, t)| {
            let mean = t.sum as f64 / t.samples as f64;
            LayerActivation {
                index,
                name: t.name,
                channels: t.channels,
                threshold: t.threshold,
                min: t.min,
                mean,
                max: t.max,
                mean_fraction: mean / t.channels as f64,
            }
        })
        .collect();
    Ok(ActivationStats {
        aggregation,
        batch: s.batch,
        layers,
    })
}

/// Folds batch normalization with unit scale and zero shift, using the
/// statistics of `batch`, into every conv except the classifier: the state
/// a batch-normalized network is in at its first training step. Layers are
/// calibrated in order, each on the already-normalized output of the last.
pub fn calibrate_batch_norm(model: &mut Model, batch: &Tensor) -> Result<()> {
    model.check_input(batch)?;
    let mut x = conv2d(batch, &model.stem)?;
    normalize_conv(&mut model.stem, &mut x);
    relu6_in_place(&mut x);

    for block in &mut model.blocks {
        let input = x;
        let mut hidden = match &mut block.expand {
            Some(e) => {
                let mut h = conv2d(&input, e)?;
                normalize_conv(e, &mut h);
                relu6_in_place(&mut h);
                Some(h)
            }
            None => None,
        };
        let mut filtered = depthwise_conv(hidden.as_ref().unwrap_or(&input), &block.depthwise)?;
        hidden.take();
        normalize_depthwise(&mut block.depthwise, &mut filtered);
        relu6_in_place(&mut filtered);
        let mut out = conv2d(&filtered, &block.project)?;
        drop(filtered);
        normalize_conv(&mut block.project, &mut out);
        if block.has_shortcut() {
            for (o, &v) in out.data_mut().iter_mut().zip(input.data()) {
                *o += v;
            }
        }
        x = out;
    }
    let mut h = conv2d(&x, &model.head)?;
    normalize_conv(&mut model.head, &mut h);
    Ok(())
}

/// Per-channel mean and `1 / sqrt(var + eps)` over every pixel.
fn channel_moments(t: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let c = t.shape().channels;
    let mut sum = vec![0.0f64; c];
    let mut sq = vec![0.0f64; c];
    for px in t.data().chunks_exact(c) {
        for ((s, q), &v) in sum.iter_mut().zip(&mut sq).zip(px) {
            *s += v as f64;
            *q += v as f64 * v as f64;
        }
    }
    let n = (t.numel() / c) as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let inv_std = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| 1.0 / ((q / n - m * m).max(0.0) + BN_EPSILON).sqrt())
        .collect();
    (mean, inv_std)
}

fn normalize_output(t: &mut Tensor, mean: &[f64], inv_std: &[f64]) {
    let c = t.shape().channels;
    for px in t.data_mut().chunks_exact_mut(c) {
        for ((v, m), s) in px.iter_mut().zip(mean).zip(inv_std) {
            *v = ((*v as f64 - m) * s) as f32;
        }
    }
}

fn fold(weights: &mut [f32], bias: &mut [f32], mean: &[f64], inv_std: &[f64]) {
    let c = bias.len();
    for (i, w) in weights.iter_mut().enumerate() {
        *w = (*w as f64 * inv_std[i % c]) as f32;
    }
    for ((b, m), s) in bias.iter_mut().zip(mean).zip(inv_std) {
        *b = ((*b as f64 - m) * s) as f32;
    }
}

fn normalize_conv(p: &mut Conv2dParams, out: &mut Tensor) {
    let (mean, inv_std) = channel_moments(out);
    fold(&mut p.weights, &mut p.bias, &mean, &inv_std);
    normalize_output(out, &mean, &inv_std);
}

fn normalize_depthwise(p: &mut DepthwiseParams, out: &mut Tensor) {
    let (mean, inv_std) = channel_moments(out);
    fold(&mut p.weights, &mut p.bias, &mean, &inv_std);
    normalize_output(out, &mean, &inv_std);
}

/// A batch of i.i.d. standard normal images for `model`.
pub fn random_batch(model: &Model, batch: usize, rng: &mut Rng) -> Result<Tensor> {
    let r = model.spec().input_resolution;
    if batch == 0 {
        return Err(Error::param("batch", "need at least one image"));
    }
    Tensor::random_gaussian(
        [batch, r, r, crate::architecture::INPUT_CHANNELS],
        rng,
        0.0,
        1.0,
    )
}

/// He-initialized model with batch norm calibrated on `batch`.
pub fn initialized_model(
    spec: &crate::architecture::ModelSpec,
    seed: u64,
    batch: &Tensor,
) -> Result<Model> {
    let mut model = Model::random(spec, seed)?;
    calibrate_batch_norm(&mut model, batch)?;
    Ok(model)
}
