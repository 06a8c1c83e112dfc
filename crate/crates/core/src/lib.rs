//! Counting stained objects in micrographs with a kernel smoother.
//!
//! The pipeline has two halves. [`imgcore`] turns an RGB image into a
//! feature vector: the image is binarized once per color threshold vector
//! and the connected objects of every binary image are counted. [`kc`] then
//! regresses expert counts on those feature vectors with a Gaussian kernel
//! smoother that also reports a variance for every prediction.
//!
//! Around that core:
//!
//! * [`tune`] picks the bandwidth by leave-one-out cross-validation, or by
//!   the variance-based rule of thumb.
//! * [`synth`] generates synthetic feature/count data from the
//!   fraction-plus-artifacts observation model and runs the convergence
//!   experiments on it.
//! * [`design`] searches threshold space for vectors with a high ratio of
//!   true cells to artifacts.
//! * [`dataset`] owns manifests, caches, model files and CSV outputs.

pub mod dataset;
pub mod design;
mod error;
pub mod imgcore;
pub mod kc;
pub mod rng;
pub mod synth;
pub mod tune;

pub use error::{Error, Result};
pub use imgcore::{
    BinaryImage, ColorHistogram, Connectivity, FeatureExtractor, FeatureVector, RgbImage,
    ThresholdSet, ThresholdVector,
};
pub use kc::{Bandwidth, KernelModel, Label, LabeledExample, Prediction, StandardizationPolicy};

/// Nearest integer, halves rounded away from zero.
pub fn nearest_integer(x: f64) -> f64 {
    x.round()
}
