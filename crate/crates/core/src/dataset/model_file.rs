//! Self-describing JSON model files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::imgcore::{ColorHistogram, Connectivity, FeatureExtractor, ThresholdSet};
use crate::kc::{Bandwidth, KernelModel, LabeledExample, StandardizationPolicy};
use crate::tune::Loss;
use crate::Result;

pub const MODEL_FORMAT: &str = "kcounter-model";
pub const MODEL_VERSION: u32 = 1;

/// How the bandwidth of a saved model was chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub loss: Loss,
    /// Held-out loss at the chosen bandwidth.
    pub loss_value: f64,
    pub grid_points: usize,
}

/// A trained model plus everything needed to featurize new images the same
/// way the training images were.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub model: KernelModel,
    pub thresholds: ThresholdSet,
    pub connectivity: Connectivity,
    pub min_area: usize,
    /// Pooled color histogram of the training images, for threshold
    /// adaptation.
    pub reference_histogram: Option<ColorHistogram>,
    pub tuning: Option<TuningRecord>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    thresholds: ThresholdSet,
    connectivity: Connectivity,
    min_area: usize,
    bandwidth: Bandwidth,
    standardization: StandardizationPolicy,
    #[serde(default)]
    reference_histogram: Option<ColorHistogram>,
    #[serde(default)]
    tuning: Option<TuningRecord>,
    examples: Vec<LabeledExample>,
}

impl SavedModel {
    pub fn extractor(&self) -> FeatureExtractor {
        FeatureExtractor::new(self.thresholds.clone(), self.connectivity).with_min_area(self.min_area)
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            thresholds: self.thresholds.clone(),
            connectivity: self.connectivity,
            min_area: self.min_area,
            bandwidth: self.model.bandwidth().clone(),
            standardization: self.model.policy(),
            reference_histogram: self.reference_histogram.clone(),
            tuning: self.tuning.clone(),
            examples: self.model.examples().to_vec(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    /// Parses a model file; `origin` names the source in errors.
    pub fn from_json(text: &[u8], origin: &Path) -> Result<Self> {
        let f: ModelFile = super::parse_versioned(text, origin, MODEL_FORMAT, MODEL_VERSION)?;
        let corrupt = |e: crate::Error| crate::Error::Corrupt {
            path: origin.to_path_buf(),
            message: e.to_string(),
        };
        if f.examples.iter().any(|e| e.features.len() != f.thresholds.len()) {
            return Err(corrupt(crate::Error::invalid(
                "feature length differs from the threshold count",
            )));
        }
        let model = KernelModel::with_policy(f.examples, f.bandwidth, f.standardization).map_err(corrupt)?;
        Ok(Self {
            model,
            thresholds: f.thresholds,
            connectivity: f.connectivity,
            min_area: f.min_area.max(1),
            reference_histogram: f.reference_histogram,
            tuning: f.tuning,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| crate::Error::io(path, e))?;
        Self::from_json(&bytes, path)
    }
}
