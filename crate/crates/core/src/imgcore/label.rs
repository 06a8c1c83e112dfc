//! Two-pass connected-component labeling with a union-find forest.

use super::{BinaryImage, Connectivity};

/// Component label per pixel (0 = background, components numbered from 1 in
/// raster order of their first pixel) plus per-component pixel areas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    areas: Vec<usize>,
}

impl Labeling {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Number of components.
    pub fn count(&self) -> usize {
        self.areas.len()
    }

    /// Pixel area of component `label` (1-based).
    pub fn area(&self, label: u32) -> usize {
        self.areas[label as usize - 1]
    }

    pub fn areas(&self) -> &[usize] {
        &self.areas
    }

    /// Number of components with at least `min_area` pixels.
    pub fn count_with_min_area(&self, min_area: usize) -> usize {
        self.areas.iter().filter(|&&a| a >= min_area).count()
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) -> u32 {
    let ra = find(parent, a);
    let rb = find(parent, b);
    let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
    parent[hi as usize] = lo;
    lo
}

pub fn label_components(bin: &BinaryImage, connectivity: Connectivity) -> Labeling {
    let (w, h) = (bin.width(), bin.height());
    let mask = bin.mask();
    let mut labels = vec![0u32; w * h];
    // parent[0] is the background sentinel
    let mut parent: Vec<u32> = vec![0];

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !mask[i] {
                continue;
            }
            let mut current = 0u32;
            let mut visit = |n: u32, parent: &mut Vec<u32>| {
                if n == 0 {
                    return;
                }
                current = if current == 0 { find(parent, n) } else { union(parent, current, n) };
            };
            if x > 0 {
                visit(labels[i - 1], &mut parent);
            }
            if y > 0 {
                let up = i - w;
                visit(labels[up], &mut parent);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        visit(labels[up - 1], &mut parent);
                    }
                    if x + 1 < w {
                        visit(labels[up + 1], &mut parent);
                    }
                }
            }
            if current == 0 {
                current = parent.len() as u32;
                parent.push(current);
            }
            labels[i] = current;
        }
    }

    // Resolve provisional labels to consecutive final ones.
    let mut remap = vec![0u32; parent.len()];
    let mut areas = Vec::new();
    for l in labels.iter_mut().filter(|l| **l != 0) {
        let root = find(&mut parent, *l);
        if remap[root as usize] == 0 {
            areas.push(0);
            remap[root as usize] = areas.len() as u32;
        }
        let fin = remap[root as usize];
        areas[fin as usize - 1] += 1;
        *l = fin;
    }

    Labeling {
        width: w,
        height: h,
        labels,
        areas,
    }
}

/// Number of maximal connected groups of set pixels.
pub fn count_objects(bin: &BinaryImage, connectivity: Connectivity) -> usize {
    label_components(bin, connectivity).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(rows: &[&str]) -> BinaryImage {
        let h = rows.len();
        let w = rows[0].len();
        let m = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        BinaryImage::new(w, h, m).unwrap()
    }

    #[test]
    fn empty_and_single() {
        let e = BinaryImage::empty(5, 5);
        assert_eq!(count_objects(&e, Connectivity::Eight), 0);
        let mut one = BinaryImage::empty(5, 5);
        one.set(2, 3, true);
        assert_eq!(count_objects(&one, Connectivity::Four), 1);
    }

    #[test]
    fn diagonal_pair() {
        let m = mask(&[".....", ".#...", "..#..", ".....", "....."]);
        assert_eq!(count_objects(&m, Connectivity::Eight), 1);
        assert_eq!(count_objects(&m, Connectivity::Four), 2);
    }

    #[test]
    fn u_shape_merges_late() {
        let m = mask(&["#...#", "#...#", "#####"]);
        let l = label_components(&m, Connectivity::Four);
        assert_eq!(l.count(), 1);
        assert_eq!(l.area(1), 9);
        assert!(l.labels().iter().all(|&v| v <= 1));
    }

    #[test]
    fn anti_diagonal_merges_under_eight() {
        let m = mask(&["..#", ".#.", "#.."]);
        assert_eq!(count_objects(&m, Connectivity::Eight), 1);
        assert_eq!(count_objects(&m, Connectivity::Four), 3);
    }

    #[test]
    fn min_area_filter() {
        let m = mask(&["##..#", "##...", "....."]);
        let l = label_components(&m, Connectivity::Eight);
        assert_eq!(l.count(), 2);
        assert_eq!(l.count_with_min_area(2), 1);
    }
}
