use serde::{Deserialize, Serialize};

use crate::blocks::expanded_channels;
use crate::error::{Error, Result};
use crate::kernels::same_padding;

/// One row of the layer table: `n` blocks of expansion `t` producing `c`
/// channels, the first with stride `s` and the rest with stride 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub t: f64,
    pub c: usize,
    pub n: usize,
    pub s: usize,
}

impl StageSpec {
    pub const fn new(t: f64, c: usize, n: usize, s: usize) -> Self {
        Self { t, c, n, s }
    }
}

/// The seven bottleneck rows of MobileNetV2.
pub const MOBILENET_V2_STAGES: [StageSpec; 7] = [
    StageSpec::new(1.0, 16, 1, 1),
    StageSpec::new(6.0, 24, 2, 2),
    StageSpec::new(6.0, 32, 3, 2),
    StageSpec::new(6.0, 64, 4, 2),
    StageSpec::new(6.0, 96, 3, 1),
    StageSpec::new(6.0, 160, 3, 2),
    StageSpec::new(6.0, 320, 1, 1),
];

pub const STEM_CHANNELS: usize = 32;
pub const HEAD_CHANNELS: usize = 1280;
pub const IMAGENET_CLASSES: usize = 1000;
pub const INPUT_CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_resolution: usize,
    pub width_multiplier: f64,
    pub stages: Vec<StageSpec>,
    pub stem_channels: usize,
    pub head_channels: usize,
    pub num_classes: usize,
    /// Skip the expansion conv of blocks whose expanded width equals their
    /// input width (the t=1 first block).
    pub fuse_t1_expand: bool,
}

impl ModelSpec {
    pub fn mobilenet_v2(width_multiplier: f64, input_resolution: usize) -> Self {
        Self {
            input_resolution,
            width_multiplier,
            stages: MOBILENET_V2_STAGES.to_vec(),
            stem_channels: STEM_CHANNELS,
            head_channels: HEAD_CHANNELS,
            num_classes: IMAGENET_CLASSES,
            fuse_t1_expand: true,
        }
    }

    pub fn with_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = num_classes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.width_multiplier;
        if !a.is_finite() || a <= 0.0 {
            return Err(Error::param(
                "alpha",
                format!("width multiplier {a} must be a positive number"),
            ));
        }
        if self.input_resolution == 0 {
            return Err(Error::param(
                "res",
                "input resolution must be at least 1 pixel",
            ));
        }
        if self.num_classes == 0 {
            return Err(Error::param("classes", "need at least one class"));
        }
        if self.stem_channels == 0 || self.head_channels == 0 {
            return Err(Error::param(
                "channels",
                "stem and head widths must be positive",
            ));
        }
        if self.stages.is_empty() {
            return Err(Error::param(
                "stages",
                "at least one bottleneck stage is required",
            ));
        }
        for (i, st) in self.stages.iter().enumerate() {
            if st.n == 0
                || st.c == 0
                || !(st.s == 1 || st.s == 2)
                || !(st.t >= 1.0)
                || !st.t.is_finite()
            {
                return Err(Error::param(
                    "stages",
                    format!("stage {i} is invalid: {st:?}"),
                ));
            }
        }
        Ok(())
    }

    /// Head width: the multiplier is applied only when it exceeds one.
    pub fn scaled_head_channels(&self) -> usize {
        if self.width_multiplier > 1.0 {
            apply_width_multiplier(self.head_channels, self.width_multiplier)
        } else {
            self.head_channels
        }
    }

    /// Per-layer geometry for one image, without allocating weights.
    pub fn plan(&self) -> Result<Vec<LayerPlan>> {
        self.validate()?;
        let a = self.width_multiplier;
        let r = self.input_resolution;
        let mut layers = Vec::new();

        let stem_out = apply_width_multiplier(self.stem_channels, a);
        let mut at = Extent::new(r, r, INPUT_CHANNELS);
        let next = at.strided(3, 2, stem_out);
        layers.push(LayerPlan {
            name: "stem".into(),
            op: LayerOp::Conv {
                kernel: 3,
                stride: 2,
                relu6: true,
            },
            input: at,
            output: next,
        });
        at = next;

        let mut index = 0;
        for (stage, st) in self.stages.iter().enumerate() {
            let c = apply_width_multiplier(st.c, a);
            for rep in 0..st.n {
                let stride = if rep == 0 { st.s } else { 1 };
                let hidden = expanded_channels(at.channels, st.t);
                let next = at.strided(3, stride, c);
                layers.push(LayerPlan {
                    name: format!("blocks.{index}"),
                    op: LayerOp::Bottleneck {
                        stage,
                        expansion: st.t,
                        hidden,
                        stride,
                        fused_expand: self.fuse_t1_expand && hidden == at.channels,
                        shortcut: stride == 1 && at.channels == c,
                    },
                    input: at,
                    output: next,
                });
                at = next;
                index += 1;
            }
        }

        let head = Extent::new(at.height, at.width, self.scaled_head_channels());
        layers.push(LayerPlan {
            name: "head".into(),
            op: LayerOp::Conv {
                kernel: 1,
                stride: 1,
                relu6: true,
            },
            input: at,
            output: head,
        });
        let pooled = Extent::new(1, 1, head.channels);
        layers.push(LayerPlan {
            name: "pool".into(),
            op: LayerOp::GlobalAvgPool,
            input: head,
            output: pooled,
        });
        layers.push(LayerPlan {
            name: "classifier".into(),
            op: LayerOp::Conv {
                kernel: 1,
                stride: 1,
                relu6: false,
            },
            input: pooled,
            output: Extent::new(1, 1, self.num_classes),
        });
        Ok(layers)
    }
}

/// Per-image extent of an activation tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extent {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Extent {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn numel(&self) -> usize {
        self.height * self.width * self.channels
    }

    fn strided(&self, kernel: usize, stride: usize, channels: usize) -> Self {
        Self::new(
            same_padding(self.height, kernel, stride).0,
            same_padding(self.width, kernel, stride).0,
            channels,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerOp {
    Conv {
        kernel: usize,
        stride: usize,
        relu6: bool,
    },
    Bottleneck {
        stage: usize,
        expansion: f64,
        hidden: usize,
        stride: usize,
        fused_expand: bool,
        shortcut: bool,
    },
    GlobalAvgPool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub name: String,
    pub op: LayerOp,
    pub input: Extent,
    pub output: Extent,
}

/// Scale a channel count by `alpha` and round to the nearest multiple of 8,
/// never below 8 and never more than 10% under the exact product.
pub fn apply_width_multiplier(channels: usize, alpha: f64) -> usize {
    const DIVISOR: usize = 8;
    let v = channels as f64 * alpha;
    let mut rounded = DIVISOR.max(((v + DIVISOR as f64 / 2.0) as usize) / DIVISOR * DIVISOR);
    if (rounded as f64) < 0.9 * v {
        rounded += DIVISOR;
    }
    rounded
}
