//! MobileNetV2 topology: layer table, width multiplier, model construction,
//! forward pass and weight files.

mod model;
mod spec;
mod weights;

pub use model::{build_model, ActivationSite, ExecOptions, Model};
pub use spec::{
    apply_width_multiplier, Extent, LayerOp, LayerPlan, ModelSpec, StageSpec, HEAD_CHANNELS,
    IMAGENET_CLASSES, INPUT_CHANNELS, MOBILENET_V2_STAGES, STEM_CHANNELS,
};
pub use weights::{load_weights, save_weights, ManifestEntry, WeightContainer, WEIGHTS_MAGIC};
