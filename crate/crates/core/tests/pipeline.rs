use std::fs;
use std::path::Path;

use kcounter::dataset::{
    load_dataset, read_predictions_csv, read_smoothing_csv, smoothing_rows, write_predictions_csv,
    write_smoothing_csv, Dataset, PredictionRow, SavedModel, TuningRecord,
};
use kcounter::imgcore::{load_image, save_rgb8};
use kcounter::tune::{loo_cv, TuneConfig};
use kcounter::{Bandwidth, Error, KernelModel, RgbImage};
use tempfile::TempDir;

/// 24x24 image with `n` dark dots and `n / 2` faint ones.
fn dots(n: usize) -> RgbImage {
    RgbImage::from_fn(24, 24, |x, y| {
        let k = (y / 3) * 8 + x / 3;
        if x % 3 == 0 && y % 3 == 0 {
            if k < n {
                return [0.1, 0.15, 0.2];
            }
            if k < n + n / 2 {
                return [0.5, 0.5, 0.55];
            }
        }
        [0.95, 0.95, 0.95]
    })
    .unwrap()
}

fn write_corpus(dir: &Path, counts: &[usize]) -> std::path::PathBuf {
    let mut text = String::from("kcounter-manifest v1\nconnectivity 4\nthreshold 0.3 0.3 0.3\nthreshold 0.6 0.6 0.6\n");
    for &n in counts {
        let name = format!("d{n}.png");
        save_rgb8(&dots(n), &dir.join(&name)).unwrap();
        text.push_str(&format!("image {name} count:{n} beta=0.9\n"));
    }
    let path = dir.join("corpus.txt");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn manifest_to_model_round_trip() {
    let dir = TempDir::new().unwrap();
    let manifest = write_corpus(dir.path(), &[2, 4, 6, 8, 10, 12, 14]);
    let cache = dir.path().join("features.cache");
    let ds = load_dataset(&manifest, Some(&cache)).unwrap();
    assert_eq!(ds.len(), 7);
    assert_eq!(ds.examples[2].features.counts(), &[6, 9]);
    // a second load comes from the cache and agrees
    assert_eq!(load_dataset(&manifest, Some(&cache)).unwrap(), ds);

    let tuned = loo_cv(&ds.examples, &TuneConfig::default()).unwrap();
    let model = KernelModel::new(ds.examples.clone(), Bandwidth::global(tuned.eta)).unwrap();
    let saved = SavedModel {
        model,
        thresholds: ds.thresholds.clone(),
        connectivity: ds.connectivity,
        min_area: ds.min_area,
        reference_histogram: ds.reference_histogram.clone(),
        tuning: Some(TuningRecord {
            loss: TuneConfig::default().loss,
            loss_value: tuned.loss,
            grid_points: 61,
        }),
    };
    let path = dir.path().join("model.json");
    saved.save(&path).unwrap();
    let loaded = SavedModel::load(&path).unwrap();
    assert_eq!(loaded, saved);

    let probe = load_image(&dir.path().join("d6.png")).unwrap();
    let f = loaded.extractor().extract(&probe);
    let (a, b) = (saved.model.predict(&f).unwrap(), loaded.model.predict(&f).unwrap());
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.variance.to_bits(), b.variance.to_bits());

    let rows = vec![PredictionRow {
        image_id: "d6.png".into(),
        prediction: a.value,
        rounded: a.rounded,
        variance: a.variance,
    }];
    let mut buf = Vec::new();
    write_predictions_csv(&mut buf, &rows).unwrap();
    assert_eq!(read_predictions_csv(buf.as_slice()).unwrap(), rows);

    let smooth = smoothing_rows(&loaded.model, 0.25);
    let mut buf = Vec::new();
    write_smoothing_csv(&mut buf, &smooth).unwrap();
    assert_eq!(read_smoothing_csv(buf.as_slice()).unwrap(), smooth);
}

#[test]
fn changed_thresholds_invalidate_the_cache() {
    let dir = TempDir::new().unwrap();
    let manifest = write_corpus(dir.path(), &[1, 3]);
    let cache = dir.path().join("features.cache");
    load_dataset(&manifest, Some(&cache)).unwrap();
    let text = fs::read_to_string(&manifest).unwrap().replace("0.6 0.6 0.6", "0.7 0.6 0.6");
    fs::write(&manifest, text).unwrap();
    assert!(matches!(load_dataset(&manifest, Some(&cache)), Err(Error::CacheMismatch { .. })));
}

#[test]
fn dataset_file_round_trip() {
    let dir = TempDir::new().unwrap();
    let manifest = write_corpus(dir.path(), &[1, 3, 5]);
    let ds = load_dataset(&manifest, None).unwrap();
    let path = dir.path().join("ds.json");
    ds.save(&path).unwrap();
    assert_eq!(Dataset::load(&path).unwrap(), ds);
}
