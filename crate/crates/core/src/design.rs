//! Threshold design by Monte Carlo search.
//!
//! For every number of correctly detected cells (#TP) reached by some
//! threshold vector, the search keeps the vector with the fewest artifacts
//! (#FP). The best signal-to-noise entries of that table become the
//! threshold set.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::imgcore::{filter_image, label_components, Connectivity, Labeling, RgbImage, ThresholdVector};
use crate::rng::stream;
use crate::{Error, Result};

/// An image with one ground-truth pixel mask per true cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    image: RgbImage,
    /// Row-major pixel indices of each reference object.
    objects: Vec<Vec<usize>>,
}

impl AnnotatedImage {
    pub fn new(image: RgbImage, objects: Vec<Vec<usize>>) -> Result<Self> {
        let n = image.width() * image.height();
        for (i, obj) in objects.iter().enumerate() {
            if obj.is_empty() {
                return Err(Error::invalid(format!("reference object {i} is empty")));
            }
            if let Some(p) = obj.iter().find(|&&p| p >= n) {
                return Err(Error::invalid(format!(
                    "reference object {i} has pixel {p} outside a {}x{} image",
                    image.width(),
                    image.height()
                )));
            }
        }
        Ok(Self { image, objects })
    }

    /// Objects from a label raster: every distinct non-zero value is one
    /// object, ordered by value.
    pub fn from_label_raster(image: RgbImage, labels: &[u32]) -> Result<Self> {
        let n = image.width() * image.height();
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: labels.len(),
            });
        }
        let mut by_value: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate().filter(|(_, l)| **l != 0) {
            by_value.entry(l).or_default().push(i);
        }
        Self::new(image, by_value.into_values().collect())
    }

    pub fn image(&self) -> &RgbImage {
        &self.image
    }

    pub fn objects(&self) -> &[Vec<usize>] {
        &self.objects
    }

    /// Number of true cells.
    pub fn cell_count(&self) -> usize {
        self.objects.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: u64,
    pub fp: u64,
}

/// One-to-one matching of filtered objects to reference objects.
///
/// Pairs sharing at least one pixel are taken greedily by larger overlap,
/// then lower filtered-object label, then lower reference index. Filtered
/// objects smaller than `min_area` are ignored. Unmatched filtered objects
/// are false positives.
pub fn match_objects(labeling: &Labeling, reference: &[Vec<usize>], min_area: usize) -> MatchCounts {
    let kept = |l: u32| l != 0 && labeling.area(l) >= min_area;
    let mut overlap: HashMap<(u32, usize), u64> = HashMap::new();
    for (r, obj) in reference.iter().enumerate() {
        for &p in obj {
            let l = labeling.labels()[p];
            if kept(l) {
                *overlap.entry((l, r)).or_default() += 1;
            }
        }
    }
    let mut pairs: Vec<((u32, usize), u64)> = overlap.into_iter().collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut used_l = HashSet::new();
    let mut used_r = HashSet::new();
    let mut tp = 0u64;
    for ((l, r), _) in pairs {
        if !used_l.contains(&l) && !used_r.contains(&r) {
            used_l.insert(l);
            used_r.insert(r);
            tp += 1;
        }
    }
    let filtered = labeling.count_with_min_area(min_area.max(1)) as u64;
    MatchCounts { tp, fp: filtered - tp }
}

/// Labeling options used while searching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub connectivity: Connectivity,
    pub min_area: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            connectivity: Connectivity::Eight,
            min_area: 1,
        }
    }
}

/// #TP and #FP of threshold `t`, summed over `images`.
pub fn evaluate_threshold(images: &[AnnotatedImage], t: &ThresholdVector, config: SearchConfig) -> MatchCounts {
    images.iter().fold(MatchCounts::default(), |acc, img| {
        let lab = label_components(&filter_image(&img.image, t), config.connectivity);
        let m = match_objects(&lab, &img.objects, config.min_area);
        MatchCounts {
            tp: acc.tp + m.tp,
            fp: acc.fp + m.fp,
        }
    })
}

/// Best threshold found for one #TP value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub tp: u64,
    pub fp: u64,
    pub threshold: ThresholdVector,
    /// Index of the Monte Carlo sample that produced the entry.
    pub sample: u64,
}

impl TableEntry {
    /// `tp / fp`; infinite when `fp = 0 < tp`, and 0 when `tp = 0`.
    pub fn snr(&self) -> f64 {
        match (self.tp, self.fp) {
            (0, _) => 0.0,
            (_, 0) => f64::INFINITY,
            (tp, fp) => tp as f64 / fp as f64,
        }
    }
}

/// Conditional optima, one entry per achieved #TP, ordered by #TP.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConditionalOptimaTable {
    pub entries: Vec<TableEntry>,
}

impl ConditionalOptimaTable {
    pub fn get(&self, tp: u64) -> Option<&TableEntry> {
        self.entries.iter().find(|e| e.tp == tp)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// `tp,fp,snr,t1,t2,t3`, infinite SNR written as `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tp,fp,snr,t1,t2,t3\n");
        for e in &self.entries {
            let [a, b, c] = e.threshold.channels();
            let _ = writeln!(out, "{},{},{},{a},{b},{c}", e.tp, e.fp, e.snr());
        }
        out
    }
}

const BATCH: usize = 4096;

/// Samples `m_runs` threshold vectors uniformly on `[0,1]^3` and keeps the
/// fewest-FP vector for every achieved #TP, with TP and FP summed over all
/// images.
///
/// Samples are drawn in sequence from one stream, so the first `m` samples
/// are the same for every `m_runs >= m`; equal #FP keeps the earlier sample.
pub fn monte_carlo_search(
    images: &[AnnotatedImage],
    m_runs: u64,
    seed: u64,
    config: SearchConfig,
) -> Result<ConditionalOptimaTable> {
    if m_runs == 0 {
        return Err(Error::invalid("Monte Carlo search needs at least one sample"));
    }
    if images.is_empty() {
        return Err(Error::invalid("no annotated images"));
    }
    let mut rng = stream(seed, &[0]);
    let mut best: BTreeMap<u64, TableEntry> = BTreeMap::new();
    let mut next = 0u64;
    while next < m_runs {
        let n = BATCH.min((m_runs - next) as usize);
        let batch: Vec<ThresholdVector> = (0..n)
            .map(|_| {
                ThresholdVector::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>())
                    .expect("unit-interval sample")
            })
            .collect();
        let scored: Vec<MatchCounts> = batch
            .par_iter()
            .map(|t| evaluate_threshold(images, t, config))
            .collect();
        for (k, (t, m)) in batch.into_iter().zip(scored).enumerate() {
            let entry = TableEntry {
                tp: m.tp,
                fp: m.fp,
                threshold: t,
                sample: next + k as u64,
            };
            best.entry(m.tp)
                .and_modify(|e| {
                    if entry.fp < e.fp {
                        *e = entry;
                    }
                })
                .or_insert(entry);
        }
        next += n as u64;
    }
    Ok(ConditionalOptimaTable {
        entries: best.into_values().collect(),
    })
}

/// Entries ranked for selection: infinite SNR first (larger #TP first),
/// then finite SNR descending, then larger #TP.
pub fn rank_entries(table: &ConditionalOptimaTable) -> Vec<TableEntry> {
    let mut ranked = table.entries.clone();
    ranked.sort_by(|a, b| {
        b.snr()
            .partial_cmp(&a.snr())
            .expect("snr is never NaN")
            .then(b.tp.cmp(&a.tp))
            .then(a.sample.cmp(&b.sample))
    });
    ranked
}

/// The `t` highest-SNR distinct threshold vectors. Returns every distinct
/// vector, with a warning, when the table has fewer than `t`.
pub fn select_thresholds(table: &ConditionalOptimaTable, t: usize) -> Result<Vec<ThresholdVector>> {
    if t == 0 {
        return Err(Error::invalid("must select at least one threshold"));
    }
    if table.is_empty() {
        return Err(Error::invalid("optima table is empty"));
    }
    let mut seen = HashSet::new();
    let chosen: Vec<ThresholdVector> = rank_entries(table)
        .into_iter()
        .map(|e| e.threshold)
        .filter(|v| seen.insert(v.bits()))
        .take(t)
        .collect();
    if chosen.len() < t {
        log::warn!("requested {t} thresholds but the table only has {} distinct entries", chosen.len());
    }
    Ok(chosen)
}
