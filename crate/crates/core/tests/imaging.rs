mod common;

use common::{flood_fill_labels, mask_of, with_big_stack};
use kcounter::imgcore::{augment_brightness, count_objects, filter_image, label_components};
use kcounter::{BinaryImage, ColorHistogram, Connectivity, FeatureExtractor, RgbImage, ThresholdSet, ThresholdVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mask(w: usize, h: usize, density: f64, seed: u64) -> BinaryImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = (0..w * h).map(|_| rng.gen_bool(density)).collect();
    BinaryImage::new(w, h, mask).unwrap()
}

fn uniform(t: f64) -> ThresholdVector {
    ThresholdVector::uniform(t).unwrap()
}

/// White 64x64 canvas with filled discs of the given gray levels.
fn blobs(discs: &[(usize, usize, usize, f64)]) -> RgbImage {
    RgbImage::from_fn(64, 64, |x, y| {
        for &(cx, cy, r, v) in discs {
            let (dx, dy) = (x as i64 - cx as i64, y as i64 - cy as i64);
            if dx * dx + dy * dy <= (r * r) as i64 {
                return [v, v, v];
            }
        }
        [1.0, 1.0, 1.0]
    })
    .unwrap()
}

#[test]
fn three_dark_and_two_gray_blobs() {
    let img = blobs(&[
        (10, 10, 5, 0.1),
        (40, 12, 6, 0.05),
        (20, 45, 4, 0.15),
        (50, 40, 5, 0.5),
        (30, 28, 3, 0.45),
    ]);
    let set = ThresholdSet::new(vec![uniform(0.2), uniform(0.6)]).unwrap();
    let f = FeatureExtractor::new(set, Connectivity::Eight).extract(&img);
    assert_eq!(f.counts(), &[3, 5]);
    for (t, expect) in [(0.2, 3), (0.6, 5)] {
        let oracle = flood_fill_labels(&mask_of(&img, [t; 3]), 64, 64, Connectivity::Eight);
        assert_eq!(oracle.iter().max().copied(), Some(expect));
    }
}

#[test]
fn white_image_has_zero_features() {
    let img = RgbImage::filled(20, 10, [1.0; 3]).unwrap();
    let set = ThresholdSet::new(vec![uniform(0.0), uniform(0.5), uniform(0.999)]).unwrap();
    let f = FeatureExtractor::new(set, Connectivity::Four).extract(&img);
    assert_eq!(f.counts(), &[0, 0, 0]);
}

#[test]
fn diagonal_pair_depends_on_connectivity() {
    let mut bin = BinaryImage::empty(5, 5);
    bin.set(1, 1, true);
    bin.set(2, 2, true);
    assert_eq!(count_objects(&bin, Connectivity::Eight), 1);
    assert_eq!(count_objects(&bin, Connectivity::Four), 2);
}

#[test]
fn large_serpentine_component() {
    // a single 64x64 snake exercises deep merges in the union-find
    let (w, h) = (64, 64);
    let mut mask = vec![false; w * h];
    for y in (0..h).step_by(2) {
        for x in 0..w {
            mask[y * w + x] = true;
        }
        let link = if (y / 2) % 2 == 0 { w - 1 } else { 0 };
        if y + 1 < h {
            mask[(y + 1) * w + link] = true;
        }
    }
    let bin = BinaryImage::new(w, h, mask.clone()).unwrap();
    let expect = with_big_stack(move || flood_fill_labels(&mask, 64, 64, Connectivity::Four));
    assert_eq!(label_components(&bin, Connectivity::Four).labels(), expect.as_slice());
    assert_eq!(count_objects(&bin, Connectivity::Four), 1);
}

#[test]
fn adapted_features_survive_a_small_brightness_shift() {
    // gray levels on a 0.1 lattice, thresholds between levels
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let levels = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
    let img = RgbImage::from_fn(48, 48, |_, _| {
        let l = levels[rng.gen_range(0..levels.len())];
        [l, l, l]
    })
    .unwrap();
    let set = ThresholdSet::new(vec![uniform(0.25), uniform(0.45), uniform(0.65)]).unwrap();
    let ex = FeatureExtractor::new(set, Connectivity::Eight);
    let reference = ColorHistogram::from_image(&img);
    let original = ex.extract(&img);
    for delta in [-0.1, -0.03, 0.04, 0.1] {
        let shifted = augment_brightness(&img, delta);
        assert_eq!(ex.extract_adapted(&shifted, &reference).unwrap(), original, "delta {delta}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn labeling_matches_flood_fill(w in 1usize..=64, h in 1usize..=64, density in 0.05f64..0.95, seed: u64) {
        let bin = random_mask(w, h, density, seed);
        let mask = bin.mask().to_vec();
        for conn in [Connectivity::Four, Connectivity::Eight] {
            let m = mask.clone();
            let oracle = with_big_stack(move || flood_fill_labels(&m, w, h, conn));
            let got = label_components(&bin, conn);
            prop_assert_eq!(got.labels(), oracle.as_slice());
            prop_assert_eq!(got.count(), oracle.iter().copied().max().unwrap_or(0) as usize);
        }
    }

    #[test]
    fn eight_connectivity_never_counts_more(w in 1usize..=40, h in 1usize..=40, density in 0.0f64..1.0, seed: u64) {
        let bin = random_mask(w, h, density, seed);
        prop_assert!(count_objects(&bin, Connectivity::Eight) <= count_objects(&bin, Connectivity::Four));
    }

    #[test]
    fn filter_is_monotone(a in prop::array::uniform3(0.0f64..=1.0), b in prop::array::uniform3(0.0f64..=1.0), seed: u64) {
        let lo = [a[0].min(b[0]), a[1].min(b[1]), a[2].min(b[2])];
        let hi = [a[0].max(b[0]), a[1].max(b[1]), a[2].max(b[2])];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = RgbImage::from_fn(16, 16, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap();
        let m_lo = filter_image(&img, &ThresholdVector::try_from(lo).unwrap());
        let m_hi = filter_image(&img, &ThresholdVector::try_from(hi).unwrap());
        for (l, h) in m_lo.mask().iter().zip(m_hi.mask()) {
            prop_assert!(!l || *h);
        }
    }
}
