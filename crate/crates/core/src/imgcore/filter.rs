use super::{BinaryImage, RgbImage, ThresholdVector};

/// Keeps the pixels whose three channels are all at or below `t`.
pub fn filter_image(img: &RgbImage, t: &ThresholdVector) -> BinaryImage {
    let mask = img.pixels().iter().map(|p| t.admits(p)).collect();
    BinaryImage::new(img.width(), img.height(), mask).expect("mask built from image dimensions")
}

/// Adds `delta` to every channel, clamping to `[0, 1]`.
pub fn augment_brightness(img: &RgbImage, delta: f64) -> RgbImage {
    assert!(delta.is_finite(), "brightness offset must be finite");
    let pixels = img
        .pixels()
        .iter()
        .map(|p| p.map(|c| (c + delta).clamp(0.0, 1.0)))
        .collect();
    RgbImage::from_raw_unchecked(img.width(), img.height(), pixels)
}
