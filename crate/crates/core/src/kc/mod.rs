//! The kernel counter.
//!
//! Feature vectors are standardized per dimension, turned into squared
//! Euclidean distances to a reference vector, and converted into Gaussian
//! weights `exp(-L / eta)` that are normalized to sum to one. A prediction is
//! the weighted mean of the training counts; using a training vector as the
//! reference instead yields the smoothed version of its expert count, and the
//! weighted spread of labels around their smoothed values is the variance.

mod labels;
mod model;
mod standardize;
mod weights;

pub use labels::{
    augment_with_interval_midpoints, flatten_multi_expert, soft_label, Label, LabeledExample,
};
pub use model::{
    Bandwidth, KernelModel, Prediction, Smoothed, StandardizationPolicy,
};
pub use standardize::{squared_distance, standardize, StandardizationStats, Standardized};
pub use weights::compute_weights;
