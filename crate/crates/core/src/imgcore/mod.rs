//! Image-side feature extraction.
//!
//! A pixel passes a [`ThresholdVector`] when every channel is at or below
//! the corresponding bound. Filtering an image with `T` distinct vectors and
//! counting the connected objects of each binary result yields the length-`T`
//! [`FeatureVector`] consumed by the kernel counter.

mod features;
mod filter;
mod histogram;
mod io;
mod label;
mod types;

pub use features::{extract_features, FeatureExtractor, ThresholdSet};
pub use filter::{augment_brightness, filter_image};
pub use histogram::{adapt_thresholds, ColorHistogram, HISTOGRAM_BINS};
pub use io::{decode_image, load_image, load_label_raster, save_rgb8};
pub use label::{count_objects, label_components, Labeling};
pub use types::{BinaryImage, Connectivity, FeatureVector, RgbImage, ThresholdVector};
