use crate::imgcore::FeatureVector;
use crate::{Error, Result};

/// Per-dimension location and scale of a pool of feature vectors.
///
/// The scale uses the `n - 1` divisor for a pool of `n` vectors. Dimensions
/// with zero spread (and every dimension of a single-vector pool) standardize
/// to 0, so they add nothing to distances.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizationStats {
    pub fn from_rows<'a, I>(rows: I, dim: usize) -> Self
    where
        I: IntoIterator<Item = &'a [f64]> + Clone,
    {
        let mut mean = vec![0.0; dim];
        let mut n = 0usize;
        for row in rows.clone() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
            n += 1;
        }
        if n == 0 {
            return Self {
                mean,
                std: vec![0.0; dim],
            };
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut ss = vec![0.0; dim];
        for row in rows {
            for ((s, v), m) in ss.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = if n < 2 {
            vec![0.0; dim]
        } else {
            ss.iter().map(|s| (s / (n - 1) as f64).sqrt()).collect()
        };
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_degenerate(&self, k: usize) -> bool {
        self.std[k] == 0.0
    }

    /// `1 / std` per dimension, 0 where the dimension is degenerate.
    pub fn inverse_scales(&self) -> Vec<f64> {
        self.std.iter().map(|&s| if s == 0.0 { 0.0 } else { 1.0 / s }).collect()
    }

    /// Squared distance between the standardized images of two raw rows,
    /// computed as `sum(((a - b) / std)^2)` so that equal per-dimension gaps
    /// give bitwise-equal terms.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        scaled_distance(a, b, &self.inverse_scales())
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(k, v)| {
                if self.is_degenerate(k) {
                    0.0
                } else {
                    (v - self.mean[k]) / self.std[k]
                }
            })
            .collect()
    }
}

/// Output of [`standardize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub train: Vec<Vec<f64>>,
    pub test: Option<Vec<f64>>,
    pub stats: StandardizationStats,
}

/// Standardizes the training vectors, pooling the test vector into the
/// statistics when one is given.
pub fn standardize(train: &[FeatureVector], test: Option<&FeatureVector>) -> Result<Standardized> {
    let first = train.first().ok_or(Error::EmptyModel)?;
    let dim = first.len();
    for v in train.iter().chain(test) {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
    }
    let rows: Vec<Vec<f64>> = train.iter().chain(test).map(FeatureVector::to_f64).collect();
    let stats = StandardizationStats::from_rows(rows.iter().map(Vec::as_slice), dim);
    let mut std_rows: Vec<Vec<f64>> = rows.iter().map(|r| stats.apply(r)).collect();
    let test_std = test.map(|_| std_rows.pop().expect("test row present"));
    Ok(Standardized {
        train: std_rows,
        test: test_std,
        stats,
    })
}

/// `sum(((a - b) * inv)^2)`.
pub(crate) fn scaled_distance(a: &[f64], b: &[f64], inv: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(inv)
        .map(|((x, y), s)| {
            let d = (x - y) * s;
            d * d
        })
        .sum()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
