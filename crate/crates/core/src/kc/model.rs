use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::labels::LabeledExample;
use super::standardize::StandardizationStats;
use super::weights::normalized_weights_with;
use crate::imgcore::FeatureVector;
use crate::{nearest_integer, Error, Result};

/// Kernel bandwidth: one `eta` for all examples or one per example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bandwidth {
    Global { eta: f64 },
    PerExample { etas: Vec<f64> },
}

impl Bandwidth {
    pub fn global(eta: f64) -> Self {
        Bandwidth::Global { eta }
    }

    fn validate(&self, n_examples: usize) -> Result<()> {
        let ok = |e: &f64| e.is_finite() && *e > 0.0;
        match self {
            Bandwidth::Global { eta } if !ok(eta) => {
                Err(Error::invalid(format!("bandwidth {eta} must be positive and finite")))
            }
            Bandwidth::PerExample { etas } if etas.len() != n_examples => {
                Err(Error::DimensionMismatch {
                    expected: n_examples,
                    found: etas.len(),
                })
            }
            Bandwidth::PerExample { etas } if !etas.iter().all(ok) => {
                Err(Error::invalid("per-example bandwidths must be positive and finite"))
            }
            _ => Ok(()),
        }
    }

    fn for_example(&self, i: usize) -> f64 {
        match self {
            Bandwidth::Global { eta } => *eta,
            Bandwidth::PerExample { etas } => etas[i],
        }
    }
}

/// Which vectors feed the per-dimension mean and scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardizationPolicy {
    /// The training images plus the vector being predicted.
    #[default]
    PooledWithTest,
    /// The training images only.
    TrainingOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub value: f64,
    pub rounded: u64,
    pub variance: f64,
    /// Normalized weight of every training point (after flattening
    /// multi-valued labels), in model order.
    pub weights: Vec<f64>,
}

/// Smoothed label of one training point and its variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothed {
    pub value: f64,
    pub variance: f64,
}

/// One regression target after flattening.
#[derive(Debug, Clone, Copy)]
struct Point {
    value: f64,
    beta: f64,
    eta: f64,
    group: usize,
}

/// An immutable trained kernel counter.
///
/// Multi-valued labels are flattened into one point per output. Points that
/// come from the same image id share one feature vector, and only distinct
/// images enter the standardization statistics.
#[derive(Debug)]
pub struct KernelModel {
    examples: Vec<LabeledExample>,
    bandwidth: Bandwidth,
    policy: StandardizationPolicy,
    points: Vec<Point>,
    group_rows: Vec<Vec<f64>>,
    smoothed: OnceLock<Vec<Smoothed>>,
}

impl Clone for KernelModel {
    fn clone(&self) -> Self {
        Self {
            examples: self.examples.clone(),
            bandwidth: self.bandwidth.clone(),
            policy: self.policy,
            points: self.points.clone(),
            group_rows: self.group_rows.clone(),
            smoothed: OnceLock::new(),
        }
    }
}

impl PartialEq for KernelModel {
    fn eq(&self, other: &Self) -> bool {
        self.examples == other.examples
            && self.bandwidth == other.bandwidth
            && self.policy == other.policy
    }
}

impl KernelModel {
    pub fn new(examples: Vec<LabeledExample>, bandwidth: Bandwidth) -> Result<Self> {
        Self::with_policy(examples, bandwidth, StandardizationPolicy::default())
    }

    pub fn with_policy(
        examples: Vec<LabeledExample>,
        bandwidth: Bandwidth,
        policy: StandardizationPolicy,
    ) -> Result<Self> {
        let first = examples.first().ok_or(Error::EmptyModel)?;
        let dim = first.features.len();
        bandwidth.validate(examples.len())?;

        let mut group_of: HashMap<&str, usize> = HashMap::new();
        let mut group_rows: Vec<Vec<f64>> = Vec::new();
        let mut group_features: Vec<&FeatureVector> = Vec::new();
        let mut points = Vec::new();
        for (i, ex) in examples.iter().enumerate() {
            ex.validate()?;
            if ex.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: ex.features.len(),
                });
            }
            let group = match group_of.get(ex.id.as_str()) {
                Some(&g) => {
                    if group_features[g] != &ex.features {
                        return Err(Error::invalid(format!(
                            "examples with id `{}` carry different features",
                            ex.id
                        )));
                    }
                    g
                }
                None => {
                    group_of.insert(&ex.id, group_rows.len());
                    group_rows.push(ex.features.to_f64());
                    group_features.push(&ex.features);
                    group_rows.len() - 1
                }
            };
            let eta = bandwidth.for_example(i);
            for value in ex.label.outputs() {
                points.push(Point {
                    value,
                    beta: ex.beta,
                    eta,
                    group,
                });
            }
        }
        if points.is_empty() {
            return Err(Error::EmptyModel);
        }

        Ok(Self {
            examples,
            bandwidth,
            policy,
            points,
            group_rows,
            smoothed: OnceLock::new(),
        })
    }

    /// Same examples, different bandwidth.
    pub fn rebandwidth(&self, bandwidth: Bandwidth) -> Result<Self> {
        Self::with_policy(self.examples.clone(), bandwidth, self.policy)
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn bandwidth(&self) -> &Bandwidth {
        &self.bandwidth
    }

    pub fn policy(&self) -> StandardizationPolicy {
        self.policy
    }

    pub fn dim(&self) -> usize {
        self.group_rows[0].len()
    }

    /// Number of flattened training points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of distinct images.
    pub fn image_count(&self) -> usize {
        self.group_rows.len()
    }

    /// Flattened regression targets, in model order.
    pub fn labels(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    /// Index of the source example for every flattened point.
    pub fn point_sources(&self) -> Vec<usize> {
        self.examples
            .iter()
            .enumerate()
            .flat_map(|(i, ex)| std::iter::repeat_n(i, ex.label.outputs().len()))
            .collect()
    }

    fn check_dim(&self, features: &FeatureVector) -> Result<()> {
        if features.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: features.len(),
            });
        }
        Ok(())
    }

    /// Sum over points, accumulated per image first and then across images
    /// in image order. Duplicated points therefore scale every partial sum
    /// by an exact factor, leaving ratios bit-identical.
    fn grouped_sum(&self, terms: impl Iterator<Item = f64>) -> f64 {
        let mut partial = vec![0.0; self.group_rows.len()];
        for (p, t) in self.points.iter().zip(terms) {
            partial[p.group] += t;
        }
        partial.iter().sum()
    }

    /// Normalized weights of every point given the distance of every image.
    fn point_weights(&self, group_dist: &[f64]) -> Vec<f64> {
        let dist: Vec<f64> = self.points.iter().map(|p| group_dist[p.group]).collect();
        normalized_weights_with(&dist, |i| self.points[i].eta, |w| self.grouped_sum(w.iter().copied()))
    }

    /// Normalized weights of every training point for `features`.
    pub fn weights(&self, features: &FeatureVector) -> Result<Vec<f64>> {
        self.check_dim(features)?;
        let test = features.to_f64();
        let rows = self.group_rows.iter().map(Vec::as_slice);
        let stats = match self.policy {
            StandardizationPolicy::PooledWithTest => {
                StandardizationStats::from_rows(rows.chain(std::iter::once(test.as_slice())), self.dim())
            }
            StandardizationPolicy::TrainingOnly => StandardizationStats::from_rows(rows, self.dim()),
        };
        let group_dist: Vec<f64> = self.group_rows.iter().map(|r| stats.distance(r, &test)).collect();
        Ok(self.point_weights(&group_dist))
    }

    fn finish(&self, weights: Vec<f64>, value: f64) -> Prediction {
        let smoothed = self.smooth();
        let variance = self.grouped_sum(
            weights
                .iter()
                .zip(&self.points)
                .zip(smoothed)
                .map(|((w, p), s)| w * (p.value - s.value).powi(2)),
        );
        Prediction {
            value,
            rounded: nearest_integer(value) as u64,
            variance,
            weights,
        }
    }

    /// Weighted mean of the training labels with its variance estimate.
    pub fn predict(&self, features: &FeatureVector) -> Result<Prediction> {
        let weights = self.weights(features)?;
        let (lo, hi) = self.label_range();
        let value = self.grouped_sum(weights.iter().zip(&self.points).map(|(w, p)| w * p.value));
        Ok(self.finish(weights, value.clamp(lo, hi)))
    }

    /// Like [`predict`](Self::predict) but every label is scaled by its
    /// expert confidence. Weights are not renormalized afterwards, so low
    /// confidence pulls the estimate toward zero.
    pub fn predict_confidence_weighted(&self, features: &FeatureVector) -> Result<Prediction> {
        let weights = self.weights(features)?;
        let value = self.grouped_sum(weights.iter().zip(&self.points).map(|(w, p)| w * p.beta * p.value));
        Ok(self.finish(weights, value.max(0.0)))
    }

    pub fn predict_batch(&self, features: &[FeatureVector]) -> Result<Vec<Prediction>> {
        features.par_iter().map(|f| self.predict(f)).collect()
    }

    fn label_range(&self) -> (f64, f64) {
        self.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.value), hi.max(p.value))
        })
    }

    fn group_distances(&self) -> Vec<Vec<f64>> {
        let stats =
            StandardizationStats::from_rows(self.group_rows.iter().map(Vec::as_slice), self.dim());
        let rows = &self.group_rows;
        rows.iter()
            .map(|a| rows.iter().map(|b| stats.distance(a, b)).collect())
            .collect()
    }

    /// Smoothed labels and their variances, one per training point.
    ///
    /// Every training point serves in turn as the reference vector; its own
    /// weight is included. Statistics pool the training images only.
    pub fn smooth(&self) -> &[Smoothed] {
        self.smoothed.get_or_init(|| {
            let dist = self.group_distances();
            let group_weights = |g: usize| self.point_weights(&dist[g]);
            let n_groups = self.group_rows.len();
            // a convex combination; clamping only removes rounding drift
            let (lo, hi) = self.label_range();
            let values: Vec<f64> = (0..n_groups)
                .into_par_iter()
                .map(|g| {
                    let w = group_weights(g);
                    self.grouped_sum(w.iter().zip(&self.points).map(|(w, p)| w * p.value))
                        .clamp(lo, hi)
                })
                .collect();
            let variances: Vec<f64> = (0..n_groups)
                .into_par_iter()
                .map(|g| {
                    let w = group_weights(g);
                    self.grouped_sum(
                        w.iter().zip(&self.points).map(|(w, p)| w * (p.value - values[p.group]).powi(2)),
                    )
                })
                .collect();
            self.points
                .iter()
                .map(|p| Smoothed {
                    value: values[p.group],
                    variance: variances[p.group],
                })
                .collect()
        })
    }

    /// Unnormalized smoothing kernel `rho[k][j] = exp(-L_kj / eta_k)` over
    /// the training points.
    pub fn kernel_matrix(&self) -> Vec<Vec<f64>> {
        let dist = self.group_distances();
        self.points
            .iter()
            .map(|pk| {
                self.points
                    .iter()
                    .map(|pj| (-dist[pk.group][pj.group] / pk.eta).exp())
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kc::{flatten_multi_expert, Label};

    fn ex(id: &str, f: &[u32], n: u64) -> LabeledExample {
        LabeledExample::new(id, FeatureVector::new(f.to_vec()), Label::count(n))
    }

    fn fv(v: &[u32]) -> FeatureVector {
        FeatureVector::new(v.to_vec())
    }

    #[test]
    fn empty_model_is_rejected() {
        assert!(matches!(
            KernelModel::new(vec![], Bandwidth::global(1.0)),
            Err(Error::EmptyModel)
        ));
    }

    #[test]
    fn bad_bandwidths() {
        let e = vec![ex("a", &[1], 1)];
        assert!(KernelModel::new(e.clone(), Bandwidth::global(0.0)).is_err());
        assert!(KernelModel::new(e.clone(), Bandwidth::global(f64::NAN)).is_err());
        assert!(KernelModel::new(e, Bandwidth::PerExample { etas: vec![1.0, 2.0] }).is_err());
    }

    #[test]
    fn single_example() {
        let m = KernelModel::new(vec![ex("a", &[3, 4], 17)], Bandwidth::global(0.5)).unwrap();
        let p = m.predict(&fv(&[100, 0])).unwrap();
        assert_eq!(p.value, 17.0);
        assert_eq!(p.variance, 0.0);
        assert_eq!(p.rounded, 17);
    }

    #[test]
    fn huge_bandwidth_gives_mean() {
        let e = vec![ex("a", &[1, 9], 10), ex("b", &[5, 2], 20), ex("c", &[7, 7], 40)];
        let m = KernelModel::new(e, Bandwidth::global(1e12)).unwrap();
        let p = m.predict(&fv(&[3, 3])).unwrap();
        assert!((p.value - 70.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn constant_labels() {
        let e = vec![ex("a", &[1], 6), ex("b", &[4], 6), ex("c", &[9], 6)];
        let m = KernelModel::new(e, Bandwidth::global(0.3)).unwrap();
        let p = m.predict(&fv(&[2])).unwrap();
        assert_eq!(p.value, 6.0);
        assert_eq!(p.variance, 0.0);
        assert!(m.smooth().iter().all(|s| s.value == 6.0 && s.variance == 0.0));
    }

    #[test]
    fn dimension_checked() {
        let m = KernelModel::new(vec![ex("a", &[1, 2], 1)], Bandwidth::global(1.0)).unwrap();
        assert!(m.predict(&fv(&[1])).is_err());
    }

    #[test]
    fn smoothing_tiny_bandwidth_returns_labels() {
        let e = vec![ex("a", &[1, 0], 3), ex("b", &[4, 2], 8), ex("c", &[9, 1], 30)];
        let m = KernelModel::new(e, Bandwidth::global(1e-12)).unwrap();
        let s: Vec<f64> = m.smooth().iter().map(|s| s.value).collect();
        assert_eq!(s, vec![3.0, 8.0, 30.0]);
    }

    #[test]
    fn smoothing_two_points_closed_form() {
        let e = vec![ex("a", &[0], 10), ex("b", &[2], 30)];
        let eta = 0.8;
        let m = KernelModel::new(e, Bandwidth::global(eta)).unwrap();
        // training-only pool {0, 2}: mean 1, std sqrt(2), standardized distance 2
        let l: f64 = 2.0;
        let r = (-l / eta).exp();
        let expected = (10.0 + r * 30.0) / (1.0 + r);
        assert!((m.smooth()[0].value - expected).abs() < 1e-12);
    }

    #[test]
    fn confidence_weighting() {
        // symmetric layout gives equal weights
        let e = vec![
            ex("a", &[0], 10).with_beta(1.0),
            ex("b", &[2], 20).with_beta(0.0),
        ];
        let m = KernelModel::new(e.clone(), Bandwidth::global(1.0)).unwrap();
        let p = m.predict_confidence_weighted(&fv(&[1])).unwrap();
        assert!((p.weights[0] - 0.5).abs() < 1e-15);
        assert!((p.value - 5.0).abs() < 1e-12);

        let ones: Vec<_> = e.iter().cloned().map(|x| x.with_beta(1.0)).collect();
        let m1 = KernelModel::new(ones, Bandwidth::global(1.0)).unwrap();
        let q = fv(&[3]);
        assert_eq!(
            m1.predict_confidence_weighted(&q).unwrap().value,
            m1.predict(&q).unwrap().value
        );

        let zeros: Vec<_> = e.into_iter().map(|x| x.with_beta(0.0)).collect();
        let m0 = KernelModel::new(zeros, Bandwidth::global(1.0)).unwrap();
        assert_eq!(m0.predict_confidence_weighted(&q).unwrap().value, 0.0);
    }

    #[test]
    fn same_id_must_share_features() {
        let e = vec![ex("a", &[1], 1), ex("a", &[2], 2)];
        assert!(KernelModel::new(e, Bandwidth::global(1.0)).is_err());
    }

    #[test]
    fn experts_flatten_inside_model() {
        let multi = vec![
            LabeledExample::new("a", fv(&[1, 5]), Label::Experts { counts: vec![4.0, 6.0] }),
            LabeledExample::new("b", fv(&[3, 2]), Label::Experts { counts: vec![9.0, 11.0] }),
        ];
        let m = KernelModel::new(multi.clone(), Bandwidth::global(0.9)).unwrap();
        let f = KernelModel::new(flatten_multi_expert(&multi), Bandwidth::global(0.9)).unwrap();
        assert_eq!(m.len(), 4);
        assert_eq!(m.image_count(), 2);
        let q = fv(&[2, 2]);
        assert_eq!(m.predict(&q).unwrap(), f.predict(&q).unwrap());
        assert_eq!(m.point_sources(), vec![0, 0, 1, 1]);
    }

    #[test]
    fn per_example_bandwidth() {
        let e = vec![ex("a", &[0], 0), ex("b", &[4], 100)];
        let m = KernelModel::new(
            e.clone(),
            Bandwidth::PerExample { etas: vec![1.0, 1.0] },
        )
        .unwrap();
        let g = KernelModel::new(e.clone(), Bandwidth::global(1.0)).unwrap();
        let q = fv(&[1]);
        assert_eq!(m.predict(&q).unwrap().value, g.predict(&q).unwrap().value);
        // wider kernel on b pulls the estimate toward 100
        let wide = KernelModel::new(e, Bandwidth::PerExample { etas: vec![1.0, 50.0] }).unwrap();
        assert!(wide.predict(&q).unwrap().value > g.predict(&q).unwrap().value);
    }
}
