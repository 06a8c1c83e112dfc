use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    adapt_thresholds, filter_image, label_components, ColorHistogram, Connectivity,
    FeatureVector, RgbImage, ThresholdVector,
};
use crate::{Error, Result};

/// A non-empty sequence of pairwise distinct threshold vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ThresholdVector>", into = "Vec<ThresholdVector>")]
pub struct ThresholdSet(Vec<ThresholdVector>);

impl ThresholdSet {
    pub fn new(thresholds: Vec<ThresholdVector>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::invalid("threshold set is empty"));
        }
        let mut seen = HashSet::new();
        for t in &thresholds {
            if !seen.insert(t.bits()) {
                return Err(Error::DuplicateThreshold(t.to_string()));
            }
        }
        Ok(Self(thresholds))
    }

    pub fn as_slice(&self) -> &[ThresholdVector] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Hex SHA-256 of the exact bit patterns, in order.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.0 {
            for b in t.bits() {
                h.update(b.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

impl TryFrom<Vec<ThresholdVector>> for ThresholdSet {
    type Error = Error;

    fn try_from(v: Vec<ThresholdVector>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ThresholdSet> for Vec<ThresholdVector> {
    fn from(s: ThresholdSet) -> Self {
        s.0
    }
}

/// Filters and counts one image against a whole threshold set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    pub thresholds: ThresholdSet,
    pub connectivity: Connectivity,
    /// Objects smaller than this many pixels are not counted.
    pub min_area: usize,
}

impl FeatureExtractor {
    pub fn new(thresholds: ThresholdSet, connectivity: Connectivity) -> Self {
        Self {
            thresholds,
            connectivity,
            min_area: 1,
        }
    }

    pub fn with_min_area(mut self, min_area: usize) -> Self {
        self.min_area = min_area.max(1);
        self
    }

    pub fn extract(&self, img: &RgbImage) -> FeatureVector {
        self.extract_with(img, self.thresholds.as_slice())
    }

    /// Extracts with each threshold adapted from `reference` to this image's
    /// own histogram.
    pub fn extract_adapted(
        &self,
        img: &RgbImage,
        reference: &ColorHistogram,
    ) -> Result<FeatureVector> {
        let target = ColorHistogram::from_image(img);
        let adapted = self
            .thresholds
            .as_slice()
            .iter()
            .map(|t| adapt_thresholds(t, reference, &target))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.extract_with(img, &adapted))
    }

    fn extract_with(&self, img: &RgbImage, thresholds: &[ThresholdVector]) -> FeatureVector {
        let counts = thresholds
            .par_iter()
            .map(|t| {
                let labeling = label_components(&filter_image(img, t), self.connectivity);
                labeling.count_with_min_area(self.min_area) as u32
            })
            .collect();
        FeatureVector::new(counts)
    }
}

/// `counts[k]` is the number of objects left by `thresholds[k]`.
pub fn extract_features(
    img: &RgbImage,
    thresholds: &[ThresholdVector],
    connectivity: Connectivity,
) -> Result<FeatureVector> {
    let set = ThresholdSet::new(thresholds.to_vec())?;
    Ok(FeatureExtractor::new(set, connectivity).extract(img))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(t: f64) -> ThresholdVector {
        ThresholdVector::uniform(t).unwrap()
    }

    #[test]
    fn rejects_duplicates_and_empty() {
        let img = RgbImage::filled(2, 2, [1.0; 3]).unwrap();
        assert!(matches!(
            extract_features(&img, &[uniform(0.3), uniform(0.3)], Connectivity::Eight),
            Err(Error::DuplicateThreshold(_))
        ));
        assert!(extract_features(&img, &[], Connectivity::Eight).is_err());
    }

    #[test]
    fn white_image_is_zero_vector() {
        let img = RgbImage::filled(8, 8, [1.0; 3]).unwrap();
        let f = extract_features(&img, &[uniform(0.3), uniform(0.99)], Connectivity::Four).unwrap();
        assert_eq!(f.counts(), &[0, 0]);
    }

    #[test]
    fn one_square() {
        let img = RgbImage::from_fn(10, 10, |x, y| {
            if (3..7).contains(&x) && (2..6).contains(&y) {
                [0.0; 3]
            } else {
                [1.0; 3]
            }
        })
        .unwrap();
        let f = extract_features(&img, &[uniform(0.5)], Connectivity::Eight).unwrap();
        assert_eq!(f.counts(), &[1]);
    }

    #[test]
    fn min_area_drops_specks() {
        let img = RgbImage::from_fn(6, 6, |x, y| match (x, y) {
            (0, 0) => [0.0; 3],
            (3..=4, 3..=4) => [0.0; 3],
            _ => [1.0; 3],
        })
        .unwrap();
        let set = ThresholdSet::new(vec![uniform(0.5)]).unwrap();
        let ex = FeatureExtractor::new(set, Connectivity::Eight);
        assert_eq!(ex.extract(&img).counts(), &[2]);
        assert_eq!(ex.with_min_area(2).extract(&img).counts(), &[1]);
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = ThresholdSet::new(vec![uniform(0.2), uniform(0.4)]).unwrap();
        let b = ThresholdSet::new(vec![uniform(0.4), uniform(0.2)]).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
    }
}
