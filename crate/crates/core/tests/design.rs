mod common;

use std::collections::BTreeMap;

use common::{flood_fill_labels, match_oracle, tp_fp_oracle};
use kcounter::design::{
    match_objects, monte_carlo_search, select_thresholds, AnnotatedImage, ConditionalOptimaTable, SearchConfig,
};
use kcounter::imgcore::label_components;
use kcounter::{BinaryImage, Connectivity, RgbImage};

/// Pixel value on the 0.05 lattice, built the same way as the grid oracle's
/// thresholds so that `p <= t` is exact at lattice points.
fn lattice(k: [u32; 3]) -> [f64; 3] {
    k.map(|k| f64::from(k) * 0.05)
}

fn rect(w: usize, x0: usize, y0: usize, rw: usize, rh: usize) -> Vec<usize> {
    (y0..y0 + rh).flat_map(|y| (x0..x0 + rw).map(move |x| y * w + x)).collect()
}

/// 16x16 white image with colored rectangles; the first `cells` of them are
/// annotated as true cells, the rest are artifacts.
fn scene(rects: &[(usize, usize, usize, usize, [u32; 3])], cells: usize) -> (RgbImage, Vec<Vec<usize>>) {
    let mut px = vec![[1.0; 3]; 256];
    let mut refs = Vec::new();
    for (i, &(x, y, w, h, c)) in rects.iter().enumerate() {
        let pixels = rect(16, x, y, w, h);
        for &p in &pixels {
            px[p] = lattice(c);
        }
        if i < cells {
            refs.push(pixels);
        }
    }
    (RgbImage::new(16, 16, px).unwrap(), refs)
}

/// Minimum #FP for every #TP over the 0.05 threshold lattice.
fn grid_oracle(images: &[(RgbImage, Vec<Vec<usize>>)], conn: Connectivity) -> BTreeMap<u64, u64> {
    let mut best = BTreeMap::new();
    for a in 0..=20 {
        for b in 0..=20 {
            for c in 0..=20 {
                let (tp, fp) = tp_fp_oracle(images, lattice([a, b, c]), conn);
                let e = best.entry(tp).or_insert(fp);
                *e = (*e).min(fp);
            }
        }
    }
    best
}

fn annotated(images: &[(RgbImage, Vec<Vec<usize>>)]) -> Vec<AnnotatedImage> {
    images
        .iter()
        .map(|(i, r)| AnnotatedImage::new(i.clone(), r.clone()).unwrap())
        .collect()
}

fn as_map(table: &ConditionalOptimaTable) -> BTreeMap<u64, u64> {
    table.entries.iter().map(|e| (e.tp, e.fp)).collect()
}

#[test]
fn monte_carlo_matches_exhaustive_grid_on_two_cells_and_an_artifact() {
    let images = vec![scene(
        &[
            (2, 2, 3, 3, [2, 6, 4]),
            (10, 3, 3, 4, [6, 4, 8]),
            (6, 11, 2, 2, [4, 12, 2]),
        ],
        2,
    )];
    let oracle = grid_oracle(&images, Connectivity::Eight);
    let table = monte_carlo_search(&annotated(&images), 100_000, 5, SearchConfig::default()).unwrap();
    let mc = as_map(&table);
    assert!(!mc.is_empty());
    for (tp, fp) in &mc {
        assert_eq!(oracle.get(tp), Some(fp), "tp {tp}: oracle {oracle:?}, search {mc:?}");
    }
    assert!(mc.contains_key(&2) && mc[&2] == 0);
}

#[test]
fn larger_searches_never_worsen_an_optimum() {
    let images = vec![scene(
        &[
            (1, 1, 4, 2, [3, 3, 3]),
            (8, 1, 2, 5, [5, 2, 7]),
            (3, 9, 3, 3, [9, 9, 1]),
            (11, 11, 2, 2, [4, 8, 6]),
            (12, 6, 1, 1, [2, 2, 2]),
        ],
        3,
    )];
    let ann = annotated(&images);
    let mut prev: Option<BTreeMap<u64, u64>> = None;
    for m in [10, 100, 1000, 10_000] {
        let cur = as_map(&monte_carlo_search(&ann, m, 77, SearchConfig::default()).unwrap());
        if let Some(p) = &prev {
            for (tp, fp) in p {
                assert!(cur.get(tp).is_some_and(|f| f <= fp), "m={m} tp={tp}");
            }
        }
        prev = Some(cur);
    }
}

#[test]
fn single_sample_and_blank_image() {
    let images = vec![scene(&[(2, 2, 3, 3, [2, 6, 4])], 1)];
    let t = monte_carlo_search(&annotated(&images), 1, 1, SearchConfig::default()).unwrap();
    assert_eq!(t.len(), 1);

    let blank = AnnotatedImage::new(RgbImage::filled(16, 16, [1.0; 3]).unwrap(), vec![]).unwrap();
    let t = monte_carlo_search(&[blank], 500, 1, SearchConfig::default()).unwrap();
    assert_eq!(as_map(&t), BTreeMap::from([(0, 0)]));
}

#[test]
fn two_fragments_on_one_cell() {
    let w = 10;
    let mut bin = BinaryImage::empty(w, 10);
    for x in [2, 3, 6, 7] {
        bin.set(x, 4, true);
    }
    let cell = rect(w, 2, 3, 6, 3);
    let labeling = label_components(&bin, Connectivity::Eight);
    let m = match_objects(&labeling, std::slice::from_ref(&cell), 1);
    assert_eq!((m.tp, m.fp), (1, 1));
    let oracle = flood_fill_labels(bin.mask(), w, 10, Connectivity::Eight);
    assert_eq!(match_oracle(&oracle, &[cell]), (1, 1));
}

#[test]
fn selected_thresholds_are_distinct() {
    let images = vec![scene(
        &[(1, 1, 4, 2, [3, 3, 3]), (8, 1, 2, 5, [5, 2, 7]), (3, 9, 3, 3, [9, 9, 1])],
        2,
    )];
    let table = monte_carlo_search(&annotated(&images), 2000, 3, SearchConfig::default()).unwrap();
    let chosen = select_thresholds(&table, 10).unwrap();
    for (i, a) in chosen.iter().enumerate() {
        for b in &chosen[i + 1..] {
            assert_ne!(a, b);
        }
    }
}
