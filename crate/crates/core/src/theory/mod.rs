//! Numerical checks of why linear bottlenecks work: ReLU is lossless on
//! the positive orthant, invertible given enough active rows, and a wide
//! enough random embedding keeps almost every point invertible.

mod activations;
mod collapse;
mod relu;
mod spiral;

pub use activations::{
    activation_pattern_stats, calibrate_batch_norm, initialized_model, random_batch,
    ActivationStats, Aggregation, LayerActivation, BN_EPSILON,
};
pub use collapse::{
    collapse_fraction_mc, expected_preserved_fraction, positive_count, CollapseEstimate,
};
pub use relu::{
    gaussian_matrix, invertibility_condition, numerical_rank, recover_input,
    relu_interior_identity_check, relu_vec, sample_interior_points, RANK_TOLERANCE,
};
pub use spiral::{
    spiral_experiment, spiral_points, spiral_reconstruction, SpiralResult, SPIRAL_POINTS,
    SPIRAL_TURNS,
};
