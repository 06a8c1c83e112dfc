//! On-disk feature cache.
//!
//! One JSON file holds the features and color histogram of every image seen,
//! keyed by the SHA-256 of the image bytes. The file as a whole is bound to
//! one extraction setup (threshold-set fingerprint, connectivity, minimum
//! area); opening it under a different setup is an error, so stale features
//! can never be served.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::imgcore::{ColorHistogram, Connectivity, FeatureExtractor, FeatureVector};
use crate::{Error, Result};

pub const CACHE_FORMAT: &str = "kcounter-feature-cache";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheKey {
    pub thresholds: String,
    pub connectivity: Connectivity,
    pub min_area: usize,
}

impl CacheKey {
    pub fn for_extractor(ex: &FeatureExtractor) -> Self {
        Self {
            thresholds: ex.thresholds.fingerprint(),
            connectivity: ex.connectivity,
            min_area: ex.min_area,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedImage {
    pub features: FeatureVector,
    pub histogram: ColorHistogram,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheFile {
    format: String,
    version: u32,
    key: CacheKey,
    entries: BTreeMap<String, CachedImage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    path: PathBuf,
    key: CacheKey,
    entries: BTreeMap<String, CachedImage>,
    dirty: bool,
}

impl FeatureCache {
    /// Opens `path`, or starts an empty cache if it does not exist.
    pub fn open(path: &Path, key: CacheKey) -> Result<Self> {
        let entries = match std::fs::read(path) {
            Ok(bytes) => {
                let file: CacheFile = super::parse_versioned(&bytes, path, CACHE_FORMAT, CACHE_VERSION)?;
                if file.key != key {
                    return Err(Error::CacheMismatch {
                        path: path.to_path_buf(),
                    });
                }
                file.entries
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(Error::io(path, e)),
        };
        Ok(Self {
            path: path.to_path_buf(),
            key,
            entries,
            dirty: false,
        })
    }

    pub fn get(&self, hash: &str) -> Option<&CachedImage> {
        self.entries.get(hash)
    }

    pub fn insert(&mut self, hash: String, image: CachedImage) {
        if self.entries.get(&hash) != Some(&image) {
            self.entries.insert(hash, image);
            self.dirty = true;
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes the cache if anything changed since it was opened or saved.
    pub fn save(&mut self) -> Result<()> {
        if !self.dirty && self.path.exists() {
            return Ok(());
        }
        let file = CacheFile {
            format: CACHE_FORMAT.into(),
            version: CACHE_VERSION,
            key: self.key.clone(),
            entries: self.entries.clone(),
        };
        let json = serde_json::to_vec(&file).expect("cache serializes");
        super::write_atomic(&self.path, &json)?;
        self.dirty = false;
        Ok(())
    }
}
