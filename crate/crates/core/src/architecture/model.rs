use crate::blocks::{self, BlockStage, BottleneckParams};
use crate::error::{Error, Result};
use crate::kernels::{conv2d_with, global_avgpool, relu6_in_place, Conv2dParams, MaddCounter};
use crate::memory::{cascade_execute_with, CascadePlan};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::spec::{LayerOp, LayerPlan, ModelSpec, INPUT_CHANNELS};

/// A built network. Batch norm is assumed folded into each conv's weights
/// and bias; dropout does not exist at inference time.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    plan: Vec<LayerPlan>,
    pub stem: Conv2dParams,
    pub blocks: Vec<BottleneckParams>,
    pub head: Conv2dParams,
    pub classifier: Conv2dParams,
}

/// Execution switches that do not change the computed function.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExecOptions {
    /// Run blocks through the channel-split cascade with this many groups
    /// (clamped to each block's expanded width).
    pub split: Option<usize>,
    /// Apply the split only to the first bottleneck.
    pub first_block_only: bool,
}

/// A post-ReLU6 tensor handed to an observer during forward.
#[derive(Debug, Clone, Copy)]
pub struct ActivationSite<'a> {
    pub layer: usize,
    pub name: &'a str,
    /// Dimension of the space the layer's input pixels live in: the
    /// bottleneck width for block stages, the input channels otherwise.
    pub input_dim: usize,
    pub tensor: &'a Tensor,
}

pub fn build_model(spec: &ModelSpec) -> Result<Model> {
    Model::zeros(spec)
}

impl Model {
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        let plan = spec.plan()?;
        let mut blocks = Vec::new();
        let (mut stem, mut head, mut classifier) = (None, None, None);
        for layer in &plan {
            match (&layer.op, layer.name.as_str()) {
                (LayerOp::Conv { kernel, stride, .. }, name) => {
                    let conv = Conv2dParams::zeros(
                        *kernel,
                        *stride,
                        layer.input.channels,
                        layer.output.channels,
                    )?;
                    match name {
                        "stem" => stem = Some(conv),
                        "head" => head = Some(conv),
                        _ => classifier = Some(conv),
                    }
                }
                (
                    LayerOp::Bottleneck {
                        expansion,
                        stride,
                        fused_expand,
                        ..
                    },
                    _,
                ) => blocks.push(BottleneckParams::zeros(
                    layer.input.channels,
                    layer.output.channels,
                    *expansion,
                    *stride,
                    *fused_expand,
                )?),
                (LayerOp::GlobalAvgPool, _) => {}
            }
        }
        Ok(Self {
            spec: spec.clone(),
            plan,
            stem: stem.expect("plan has a stem"),
            blocks,
            head: head.expect("plan has a head"),
            classifier: classifier.expect("plan has a classifier"),
        })
    }

    /// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases, drawn in
    /// parameter-schema order from one stream.
    pub fn random(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(spec)?;
        let mut rng = Rng::new(seed);
        model.for_each_param_mut(|_, dims, values| {
            if dims.len() == 1 {
                return;
            }
            let fan_in = match dims.len() {
                3 => dims[0] * dims[1],
                _ => dims[0] * dims[1] * dims[2],
            };
            let std = (2.0 / fan_in as f64).sqrt() as f32;
            values
                .iter_mut()
                .for_each(|v| *v = rng.gaussian_f32(0.0, std));
        });
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn plan(&self) -> &[LayerPlan] {
        &self.plan
    }

    /// Ordered `(name, dims)` for every parameter tensor.
    pub fn schema(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.for_each_param(|name, dims, _| out.push((name.to_string(), dims.to_vec())));
        out
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each_param(|_, _, v| n += v.len());
        n
    }

    pub fn for_each_param(&self, mut f: impl FnMut(&str, &[usize], &[f32])) {
        let conv = |f: &mut dyn FnMut(&str, &[usize], &[f32]), prefix: &str, c: &Conv2dParams| {
            f(&format!("{prefix}.weight"), &c.weight_dims(), &c.weights);
            f(&format!("{prefix}.bias"), &[c.out_channels], &c.bias);
        };
        conv(&mut f, "stem", &self.stem);
        for (i, b) in self.blocks.iter().enumerate() {
            if let Some(e) = &b.expand {
                conv(&mut f, &format!("blocks.{i}.expand"), e);
            }
            let d = &b.depthwise;
            f(
                &format!("blocks.{i}.depthwise.weight"),
                &d.weight_dims(),
                &d.weights,
            );
            f(
                &format!("blocks.{i}.depthwise.bias"),
                &[d.channels],
                &d.bias,
            );
            conv(&mut f, &format!("blocks.{i}.project"), &b.project);
        }
        conv(&mut f, "head", &self.head);
        conv(&mut f, "classifier", &self.classifier);
    }

    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&str, &[usize], &mut [f32])) {
        let conv =
            |f: &mut dyn FnMut(&str, &[usize], &mut [f32]), prefix: &str, c: &mut Conv2dParams| {
                let dims = c.weight_dims();
                f(&format!("{prefix}.weight"), &dims, &mut c.weights);
                f(&format!("{prefix}.bias"), &[c.out_channels], &mut c.bias);
            };
        conv(&mut f, "stem", &mut self.stem);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            if let Some(e) = &mut b.expand {
                conv(&mut f, &format!("blocks.{i}.expand"), e);
            }
            let d = &mut b.depthwise;
            let dims = d.weight_dims();
            f(
                &format!("blocks.{i}.depthwise.weight"),
                &dims,
                &mut d.weights,
            );
            f(
                &format!("blocks.{i}.depthwise.bias"),
                &[d.channels],
                &mut d.bias,
            );
            conv(&mut f, &format!("blocks.{i}.project"), &mut b.project);
        }
        conv(&mut f, "head", &mut self.head);
        conv(&mut f, "classifier", &mut self.classifier);
    }

    /// Logits of shape `(batch, 1, 1, classes)`.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.run(input, ExecOptions::default(), None, &mut |_| {})
    }

    pub fn forward_with(&self, input: &Tensor, options: ExecOptions) -> Result<Tensor> {
        self.run(input, options, None, &mut |_| {})
    }

    pub fn forward_counted(&self, input: &Tensor, counter: &MaddCounter) -> Result<Tensor> {
        self.run(input, ExecOptions::default(), Some(counter), &mut |_| {})
    }

    /// Forward pass that shows every post-ReLU6 tensor to `observe`.
    pub fn forward_observed(
        &self,
        input: &Tensor,
        observe: &mut dyn FnMut(ActivationSite<'_>),
    ) -> Result<Tensor> {
        self.run(input, ExecOptions::default(), None, observe)
    }

    pub fn check_input(&self, input: &Tensor) -> Result<()> {
        let s = input.shape();
        let r = self.spec.input_resolution;
        if s.height != r || s.width != r || s.channels != INPUT_CHANNELS {
            return Err(Error::DimensionMismatch(format!(
                "model expects {r}x{r}x{INPUT_CHANNELS} images, input is {}x{}x{}",
                s.height, s.width, s.channels
            )));
        }
        Ok(())
    }

    fn run(
        &self,
        input: &Tensor,
        options: ExecOptions,
        counter: Option<&MaddCounter>,
        observe: &mut dyn FnMut(ActivationSite<'_>),
    ) -> Result<Tensor> {
        self.check_input(input)?;
        let mut x = conv2d_with(input, &self.stem, counter)?;
        relu6_in_place(&mut x);
        observe(ActivationSite {
            layer: 0,
            name: "stem",
            input_dim: INPUT_CHANNELS,
            tensor: &x,
        });

        for (i, block) in self.blocks.iter().enumerate() {
            let layer = i + 1;
            let name = &self.plan[layer].name;
            let split = match options.split {
                Some(t) if i == 0 || !options.first_block_only => {
                    Some(t.min(block.hidden_channels()).max(1))
                }
                _ => None,
            };
            x = match split {
                Some(t) => {
                    let plan = CascadePlan::new(block.hidden_channels(), t)?;
                    cascade_execute_with(&x, block, &plan, counter)?.0
                }
                None => blocks::forward_with(&x, block, counter, &mut |stage, t| {
                    let site = match stage {
                        BlockStage::Expand => "expand",
                        BlockStage::Depthwise => "depthwise",
                    };
                    observe(ActivationSite {
                        layer,
                        name: &format!("{name}.{site}"),
                        input_dim: block.in_channels(),
                        tensor: t,
                    });
                })?,
            };
        }

        let head_layer = self.blocks.len() + 1;
        let mut h = conv2d_with(&x, &self.head, counter)?;
        relu6_in_place(&mut h);
        observe(ActivationSite {
            layer: head_layer,
            name: "head",
            input_dim: self.head.in_channels,
            tensor: &h,
        });
        let pooled = global_avgpool(&h);
        conv2d_with(&pooled, &self.classifier, counter)
    }
}
