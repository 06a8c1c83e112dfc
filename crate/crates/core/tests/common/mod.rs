//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::HashMap;

use kcounter::{Connectivity, LabeledExample, RgbImage};

/// Recursive flood fill; labels components 1.. in raster order of their
/// first pixel.
pub fn flood_fill_labels(mask: &[bool], w: usize, h: usize, conn: Connectivity) -> Vec<u32> {
    #[allow(clippy::too_many_arguments)]
    fn fill(mask: &[bool], labels: &mut [u32], w: usize, h: usize, x: usize, y: usize, id: u32, eight: bool) {
        let i = y * w + x;
        if !mask[i] || labels[i] != 0 {
            return;
        }
        labels[i] = id;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if (dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0) {
                    continue;
                }
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                    fill(mask, labels, w, h, nx as usize, ny as usize, id, eight);
                }
            }
        }
    }
    let mut labels = vec![0u32; w * h];
    let mut next = 0;
    for y in 0..h {
        for x in 0..w {
            if mask[y * w + x] && labels[y * w + x] == 0 {
                next += 1;
                fill(mask, &mut labels, w, h, x, y, next, conn == Connectivity::Eight);
            }
        }
    }
    labels
}

/// Runs `f` on a thread with a large stack, for the recursive oracle.
pub fn with_big_stack<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    std::thread::Builder::new()
        .stack_size(256 << 20)
        .spawn(f)
        .unwrap()
        .join()
        .unwrap()
}

pub fn mask_of(img: &RgbImage, t: [f64; 3]) -> Vec<bool> {
    img.pixels()
        .iter()
        .map(|p| p[0] <= t[0] && p[1] <= t[1] && p[2] <= t[2])
        .collect()
}

/// `(row, label, beta)` per flattened target.
type Target = (usize, f64, f64);

/// Distinct image rows (by id, first occurrence) and `(row, label)` for
/// every flattened target.
fn groups(examples: &[LabeledExample]) -> (Vec<Vec<f64>>, Vec<Target>) {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for ex in examples {
        let g = *index.entry(&ex.id).or_insert_with(|| {
            rows.push(ex.features.counts().iter().map(|&c| f64::from(c)).collect());
            rows.len() - 1
        });
        for v in ex.label.outputs() {
            points.push((g, v, ex.beta));
        }
    }
    (rows, points)
}

/// z-scores with the `n - 1` divisor; zero-spread dimensions map to 0.
fn zscore(pool: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = pool.len();
    let dim = pool[0].len();
    let mut out = vec![vec![0.0; dim]; n];
    if n < 2 {
        return out;
    }
    for k in 0..dim {
        let mean = pool.iter().map(|r| r[k]).sum::<f64>() / n as f64;
        let var = pool.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        if var > 0.0 {
            let sd = var.sqrt();
            for (o, r) in out.iter_mut().zip(pool) {
                o[k] = (r[k] - mean) / sd;
            }
        }
    }
    out
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Standardized squared distance from `test` to every flattened point,
/// pooling the distinct training images with the test vector.
pub fn point_distances(examples: &[LabeledExample], test: &[u32]) -> Vec<(f64, f64, f64)> {
    let (mut rows, points) = groups(examples);
    rows.push(test.iter().map(|&c| f64::from(c)).collect());
    let z = zscore(&rows);
    let t = z.last().unwrap();
    points.iter().map(|&(g, v, b)| (sq(&z[g], t), v, b)).collect()
}

/// Kernel prediction with global bandwidth `eta`, computed from scratch.
pub fn predict_oracle(examples: &[LabeledExample], test: &[u32], eta: f64) -> f64 {
    let pts = point_distances(examples, test);
    let min = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = pts.iter().map(|p| (-(p.0 - min) / eta).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter().zip(&pts).map(|(w, p)| w * p.1).sum::<f64>() / total
}

/// Labels of the points nearest to `test`, and the mean of those labels.
pub fn nearest_labels(examples: &[LabeledExample], test: &[u32]) -> Vec<f64> {
    let pts = point_distances(examples, test);
    let min = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    // integer features: distinct distances differ far more than rounding noise
    let tol = 1e-12 * min.max(f64::MIN_POSITIVE);
    pts.iter().filter(|p| p.0 - min <= tol).map(|p| p.1).collect()
}

/// Greedy one-to-one matching by larger overlap, then lower component label,
/// then lower reference index. Returns `(tp, fp)`.
pub fn match_oracle(labels: &[u32], reference: &[Vec<usize>]) -> (u64, u64) {
    let n_components = labels.iter().copied().max().unwrap_or(0) as usize;
    let mut pairs = Vec::new();
    for (r, obj) in reference.iter().enumerate() {
        let mut overlap: HashMap<u32, usize> = HashMap::new();
        for &p in obj {
            if labels[p] != 0 {
                *overlap.entry(labels[p]).or_default() += 1;
            }
        }
        for (l, o) in overlap {
            pairs.push((o, l, r));
        }
    }
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_label = vec![false; n_components + 1];
    let mut used_ref = vec![false; reference.len()];
    let mut tp = 0u64;
    for (_, l, r) in pairs {
        if !used_label[l as usize] && !used_ref[r] {
            used_label[l as usize] = true;
            used_ref[r] = true;
            tp += 1;
        }
    }
    (tp, n_components as u64 - tp)
}

/// `(tp, fp)` summed over annotated images for threshold `t`.
pub fn tp_fp_oracle(images: &[(RgbImage, Vec<Vec<usize>>)], t: [f64; 3], conn: Connectivity) -> (u64, u64) {
    images.iter().fold((0, 0), |(tp, fp), (img, refs)| {
        let labels = flood_fill_labels(&mask_of(img, t), img.width(), img.height(), conn);
        let (a, b) = match_oracle(&labels, refs);
        (tp + a, fp + b)
    })
}
