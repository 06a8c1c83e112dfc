//! Manifests, feature caches, dataset and model files, CSV outputs.
//!
//! Every JSON file written here carries a `format` tag and a `version`
//! number; readers reject other versions with [`Error::Version`] and any
//! structural problem with [`Error::Corrupt`], without partial results.

mod cache;
mod export;
mod manifest;
mod model_file;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::{CacheKey, CachedImage, FeatureCache, CACHE_FORMAT, CACHE_VERSION};
pub use export::{
    read_features_csv, read_predictions_csv, read_smoothing_csv, review_flag, smoothing_rows,
    write_features_csv, write_predictions_csv, write_smoothing_csv, PredictionRow, ReviewFlag,
    SmoothingRow,
};
pub use manifest::{Manifest, ManifestEntry, MANIFEST_HEADER, MANIFEST_VERSION};
pub use model_file::{SavedModel, TuningRecord, MODEL_FORMAT, MODEL_VERSION};

use crate::imgcore::{
    augment_brightness, decode_image, load_image, ColorHistogram, Connectivity, FeatureExtractor,
    FeatureVector, ThresholdSet,
};
use crate::kc::{augment_with_interval_midpoints, LabeledExample};
use crate::{Error, Result};

pub const DATASET_FORMAT: &str = "kcounter-dataset";
pub const DATASET_VERSION: u32 = 1;

/// Writes through a sibling temporary file and a rename, so readers never
/// observe a half-written file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Checks the `format`/`version` envelope, then deserializes the payload.
pub(crate) fn parse_versioned<T: for<'de> Deserialize<'de>>(
    bytes: &[u8],
    path: &Path,
    format: &str,
    version: u32,
) -> Result<T> {
    let corrupt = |message: String| Error::Corrupt {
        path: path.to_path_buf(),
        message,
    };
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| corrupt(e.to_string()))?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some(f) if f == format => {}
        Some(f) => return Err(corrupt(format!("expected a {format} file, found {f}"))),
        None => return Err(corrupt("missing `format` tag".into())),
    }
    let found = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| corrupt("missing `version`".into()))?;
    if found != u64::from(version) {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: version,
        });
    }
    serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))
}

/// Hex SHA-256 of a byte string.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    /// Extraction setup declared by the manifest (8-connectivity and
    /// minimum area 1 unless stated).
    pub fn extractor(&self) -> Result<FeatureExtractor> {
        let set = ThresholdSet::new(self.thresholds.clone())?;
        Ok(FeatureExtractor::new(set, self.connectivity.unwrap_or_default())
            .with_min_area(self.min_area.unwrap_or(1)))
    }
}

/// A manifest entry after its image has been featurized.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedEntry {
    pub entry: ManifestEntry,
    /// Image id used for grouping; entries with identical image bytes share
    /// the id of the first of them.
    pub id: String,
    pub path: PathBuf,
    pub hash: String,
    pub features: FeatureVector,
    pub histogram: ColorHistogram,
}

/// Featurizes every manifest entry with `extractor`, reading and updating
/// the feature cache at `cache` when given.
pub fn extract_entries(
    manifest: &Manifest,
    extractor: &FeatureExtractor,
    cache: Option<&Path>,
) -> Result<Vec<ExtractedEntry>> {
    let mut cache = cache
        .map(|p| FeatureCache::open(p, CacheKey::for_extractor(extractor)))
        .transpose()?;

    let paths: Vec<PathBuf> = manifest.entries.iter().map(|e| manifest.resolve(e)).collect();
    let mut unique: Vec<&PathBuf> = paths.iter().collect();
    unique.sort();
    unique.dedup();
    let hashed: Vec<(PathBuf, String, Vec<u8>)> = unique
        .par_iter()
        .map(|p| {
            let bytes = std::fs::read(p).map_err(|e| Error::io(p.as_path(), e))?;
            Ok(((*p).clone(), content_hash(&bytes), bytes))
        })
        .collect::<Result<_>>()?;

    let mut by_hash: HashMap<&str, (&Path, &[u8])> = HashMap::new();
    for (p, h, b) in &hashed {
        by_hash.entry(h.as_str()).or_insert((p.as_path(), b.as_slice()));
    }
    let mut todo: Vec<(&str, &Path, &[u8])> = by_hash
        .iter()
        .filter(|(h, _)| cache.as_ref().is_none_or(|c| c.get(h).is_none()))
        .map(|(h, (p, b))| (*h, *p, *b))
        .collect();
    todo.sort_by_key(|t| t.0);
    let fresh: Vec<(String, CachedImage)> = todo
        .par_iter()
        .map(|(h, p, b)| {
            let img = decode_image(b, p)?;
            Ok((
                h.to_string(),
                CachedImage {
                    features: extractor.extract(&img),
                    histogram: ColorHistogram::from_image(&img),
                },
            ))
        })
        .collect::<Result<_>>()?;

    let mut computed: HashMap<String, CachedImage> = HashMap::new();
    for (h, c) in fresh {
        if let Some(cache) = cache.as_mut() {
            cache.insert(h.clone(), c.clone());
        }
        computed.insert(h, c);
    }
    if let Some(cache) = cache.as_mut() {
        cache.save()?;
    }

    let hash_of: HashMap<&Path, &str> = hashed.iter().map(|(p, h, _)| (p.as_path(), h.as_str())).collect();
    let mut id_of_hash: HashMap<&str, String> = HashMap::new();
    let mut out = Vec::with_capacity(manifest.entries.len());
    for (entry, path) in manifest.entries.iter().zip(&paths) {
        let hash = hash_of[path.as_path()];
        let id = id_of_hash.entry(hash).or_insert_with(|| entry.display_id().to_string());
        if id != entry.display_id() {
            log::warn!(
                "{} has the same content as {}; treating them as one image",
                entry.display_id(),
                id
            );
        }
        let data = computed
            .get(hash)
            .or_else(|| cache.as_ref().and_then(|c| c.get(hash)))
            .expect("every hash was extracted or cached");
        out.push(ExtractedEntry {
            entry: entry.clone(),
            id: id.clone(),
            path: path.clone(),
            hash: hash.to_string(),
            features: data.features.clone(),
            histogram: data.histogram.clone(),
        });
    }
    Ok(out)
}

/// Labeled examples plus the extraction setup that produced their features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub thresholds: ThresholdSet,
    pub connectivity: Connectivity,
    pub min_area: usize,
    pub examples: Vec<LabeledExample>,
    /// Source image of each example; `None` for derived examples.
    pub sources: Vec<Option<PathBuf>>,
    /// Pooled histogram of the distinct source images.
    pub reference_histogram: Option<ColorHistogram>,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    dataset: Dataset,
}

impl Dataset {
    pub fn extractor(&self) -> FeatureExtractor {
        FeatureExtractor::new(self.thresholds.clone(), self.connectivity).with_min_area(self.min_area)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn to_json(&self) -> String {
        let file = DatasetFile {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            dataset: self.clone(),
        };
        serde_json::to_string_pretty(&file).expect("dataset serializes")
    }

    pub fn from_json(bytes: &[u8], origin: &Path) -> Result<Self> {
        let f: DatasetFile = parse_versioned(bytes, origin, DATASET_FORMAT, DATASET_VERSION)?;
        let d = f.dataset;
        let corrupt = |message: String| Error::Corrupt {
            path: origin.to_path_buf(),
            message,
        };
        if d.sources.len() != d.examples.len() {
            return Err(corrupt("sources and examples differ in length".into()));
        }
        for ex in &d.examples {
            ex.validate().map_err(|e| corrupt(e.to_string()))?;
            if ex.features.len() != d.thresholds.len() {
                return Err(corrupt(format!("{}: feature length differs from the threshold count", ex.id)));
            }
        }
        Ok(d)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes, path)
    }
}

fn pooled_histogram<'a>(hists: impl Iterator<Item = (&'a str, &'a ColorHistogram)>) -> Option<ColorHistogram> {
    let mut seen = std::collections::HashSet::new();
    let mut pooled: Option<ColorHistogram> = None;
    for (hash, h) in hists {
        if seen.insert(hash) {
            pooled.get_or_insert_with(ColorHistogram::new).merge(h);
        }
    }
    pooled
}

/// Labeled dataset from a manifest; every entry must carry a label.
pub fn dataset_from_entries(extractor: &FeatureExtractor, entries: &[ExtractedEntry]) -> Result<Dataset> {
    let mut examples = Vec::with_capacity(entries.len());
    for e in entries {
        let label = e.entry.label.clone().ok_or_else(|| {
            Error::invalid(format!("{} has no label; training data must be labeled", e.entry.display_id()))
        })?;
        let mut ex = LabeledExample::new(e.id.clone(), e.features.clone(), label).with_beta(e.entry.beta.unwrap_or(1.0));
        if let Some((lo, hi)) = e.entry.bounds {
            ex = ex.with_bounds(lo, hi);
        }
        ex.validate()?;
        examples.push(ex);
    }
    Ok(Dataset {
        thresholds: extractor.thresholds.clone(),
        connectivity: extractor.connectivity,
        min_area: extractor.min_area,
        examples,
        sources: entries.iter().map(|e| Some(e.path.clone())).collect(),
        reference_histogram: pooled_histogram(entries.iter().map(|e| (e.hash.as_str(), &e.histogram))),
    })
}

/// Loads a manifest and featurizes its images.
pub fn load_dataset(manifest_path: &Path, cache: Option<&Path>) -> Result<Dataset> {
    let manifest = Manifest::load(manifest_path)?;
    if manifest.entries.is_empty() && manifest.thresholds.is_empty() {
        return Err(Error::invalid(format!("{} declares no thresholds", manifest_path.display())));
    }
    let extractor = manifest.extractor()?;
    let entries = extract_entries(&manifest, &extractor, cache)?;
    dataset_from_entries(&extractor, &entries)
}

fn delta_tag(delta: f64) -> String {
    format!("{delta:+}")
}

/// Appends a brightness-shifted copy of every example that has a source
/// image, once per offset, then the interval-midpoint examples.
///
/// With `adapt`, the shifted copy is featurized with thresholds adapted
/// from the source image's histogram to the shifted image's histogram;
/// otherwise with the dataset's fixed thresholds.
pub fn augment_dataset(dataset: &Dataset, deltas: &[f64], adapt: bool) -> Result<Dataset> {
    if let Some(d) = deltas.iter().find(|d| !d.is_finite()) {
        return Err(Error::invalid(format!("brightness offset {d} is not finite")));
    }
    let extractor = dataset.extractor();
    let mut sources: Vec<&PathBuf> = dataset.sources.iter().flatten().collect();
    sources.sort();
    sources.dedup();
    if !deltas.is_empty() && sources.len() < dataset.sources.iter().flatten().count() {
        log::debug!("some examples share a source image");
    }
    let shifted: HashMap<&PathBuf, Vec<FeatureVector>> = sources
        .par_iter()
        .map(|p| {
            let img = load_image(p)?;
            let reference = ColorHistogram::from_image(&img);
            let feats = deltas
                .iter()
                .map(|&d| {
                    let aug = augment_brightness(&img, d);
                    if adapt {
                        extractor.extract_adapted(&aug, &reference)
                    } else {
                        Ok(extractor.extract(&aug))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((*p, feats))
        })
        .collect::<Result<_>>()?;

    let mut examples = dataset.examples.clone();
    for (k, &d) in deltas.iter().enumerate() {
        for (ex, src) in dataset.examples.iter().zip(&dataset.sources) {
            let Some(src) = src else {
                continue;
            };
            examples.push(LabeledExample {
                id: format!("{}@{}", ex.id, delta_tag(d)),
                features: shifted[src][k].clone(),
                ..ex.clone()
            });
        }
    }
    let examples = augment_with_interval_midpoints(&examples);
    let mut out_sources = dataset.sources.clone();
    out_sources.resize(examples.len(), None);
    Ok(Dataset {
        examples,
        sources: out_sources,
        ..dataset.clone()
    })
}
