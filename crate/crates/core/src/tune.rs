//! Bandwidth selection.
//!
//! [`loo_cv`] scores every candidate bandwidth by leave-one-image-out
//! prediction. Holding out one image and pooling it back into the
//! standardization leaves the pool equal to the full training set, so the
//! standardized distance matrix is computed once and shared by every fold
//! and every candidate; [`LooEngine`] exposes that machinery directly for
//! the synthetic experiments.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kc::{squared_distance, LabeledExample, StandardizationStats};
use crate::{nearest_integer, Error, Result};

/// Scoring rule for held-out predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// Mean absolute error.
    L1,
    /// Maximum absolute error.
    LInf,
    #[default]
    Mse,
    /// One minus the coefficient of determination of the least-squares
    /// line through (prediction, label) pairs.
    NegR2,
}

impl Loss {
    pub fn evaluate(&self, predictions: &[f64], labels: &[f64]) -> f64 {
        debug_assert_eq!(predictions.len(), labels.len());
        let n = labels.len() as f64;
        let abs = predictions.iter().zip(labels).map(|(p, y)| (p - y).abs());
        match self {
            Loss::L1 => abs.sum::<f64>() / n,
            Loss::LInf => abs.fold(0.0, f64::max),
            Loss::Mse => predictions
                .iter()
                .zip(labels)
                .map(|(p, y)| (p - y) * (p - y))
                .sum::<f64>()
                / n,
            Loss::NegR2 => 1.0 - r_squared(predictions, labels),
        }
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Loss::L1),
            "linf" => Ok(Loss::LInf),
            "mse" => Ok(Loss::Mse),
            "neg-r2" => Ok(Loss::NegR2),
            other => Err(Error::invalid(format!(
                "unknown loss `{other}` (expected l1, linf, mse or neg-r2)"
            ))),
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Loss::L1 => "l1",
            Loss::LInf => "linf",
            Loss::Mse => "mse",
            Loss::NegR2 => "neg-r2",
        })
    }
}

/// Coefficient of determination of the simple linear regression of `y` on
/// `x` (the squared Pearson correlation).
///
/// Degenerate inputs with zero spread score 1 when the pairs coincide and 0
/// otherwise.
pub fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return if x.iter().zip(y).all(|(a, b)| a == b) { 1.0 } else { 0.0 };
    }
    (sxy * sxy) / (sxx * syy)
}

/// `points` bandwidths whose reciprocals are log-spaced over
/// `[inv_min, inv_max]`, ordered by increasing `1/eta`.
pub fn log_grid(inv_min: f64, inv_max: f64, points: usize) -> Result<Vec<f64>> {
    if !(inv_min > 0.0 && inv_max >= inv_min && inv_max.is_finite()) || points == 0 {
        return Err(Error::invalid("grid needs 0 < min <= max and at least one point"));
    }
    if points == 1 {
        return Ok(vec![1.0 / inv_min]);
    }
    let (a, b) = (inv_min.log10(), inv_max.log10());
    Ok((0..points)
        .map(|i| {
            let t = i as f64 / (points - 1) as f64;
            1.0 / 10f64.powf(a + t * (b - a))
        })
        .collect())
}

/// 61 bandwidths with `1/eta` log-spaced over `[1e-3, 1e3]`.
pub fn default_grid() -> Vec<f64> {
    log_grid(1e-3, 1e3, 61).expect("static grid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    /// Candidate bandwidths.
    pub grid: Vec<f64>,
    pub loss: Loss,
    /// Round predictions to the nearest integer before scoring.
    pub round: bool,
    /// Golden-section steps in `log(eta)` between the grid neighbors of the
    /// grid minimizer; 0 returns the grid minimizer itself.
    #[serde(default)]
    pub refine: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            grid: default_grid(),
            loss: Loss::default(),
            round: false,
            refine: 0,
        }
    }
}

impl TuneConfig {
    pub fn new(grid: Vec<f64>, loss: Loss, round: bool) -> Result<Self> {
        let cfg = Self {
            grid,
            loss,
            round,
            refine: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_refinement(mut self, steps: usize) -> Self {
        self.refine = steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::invalid("bandwidth grid is empty"));
        }
        if let Some(e) = self.grid.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(Error::invalid(format!("grid bandwidth {e} must be positive")));
        }
        Ok(())
    }

    /// Smallest candidate, used when a rule of thumb degenerates to zero.
    pub fn smallest(&self) -> f64 {
        self.grid.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub eta: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub eta: f64,
    pub loss: f64,
    /// Loss at every grid point, in grid order.
    pub curve: Vec<CurvePoint>,
}

/// Grid minimizer; exact ties go to the larger bandwidth.
pub fn select_minimum(curve: &[CurvePoint]) -> Option<CurvePoint> {
    curve
        .iter()
        .filter(|c| !c.loss.is_nan())
        .fold(None, |best: Option<CurvePoint>, &c| match best {
            Some(b) if c.loss > b.loss || (c.loss == b.loss && c.eta <= b.eta) => Some(b),
            _ => Some(c),
        })
}

/// Grid neighbors of `eta` (itself at the ends of the grid).
pub fn bracket(grid: &[f64], eta: f64) -> (f64, f64) {
    let below = grid.iter().copied().filter(|&g| g < eta).fold(eta, |b, g| if b == eta || g > b { g } else { b });
    let above = grid.iter().copied().filter(|&g| g > eta).fold(eta, |b, g| if b == eta || g < b { g } else { b });
    (below, above)
}

/// Golden-section search for a minimum of `f` over `log(eta)` in
/// `[lo, hi]`. Returns the best probed point; ties go to the larger `eta`.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, steps: usize) -> Option<CurvePoint> {
    if steps == 0 || lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
        return None;
    }
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c.exp());
    let mut fd = f(d.exp());
    let mut probes = vec![CurvePoint { eta: c.exp(), loss: fc }, CurvePoint { eta: d.exp(), loss: fd }];
    for _ in 2..steps.max(2) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c.exp());
            probes.push(CurvePoint { eta: c.exp(), loss: fc });
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d.exp());
            probes.push(CurvePoint { eta: d.exp(), loss: fd });
        }
    }
    select_minimum(&probes)
}

/// Standardized pairwise distances between a fixed set of images.
///
/// Statistics pool every row (divisor `n - 1`). Only the strict upper
/// triangle is stored.
#[derive(Debug, Clone)]
pub struct LooEngine {
    n: usize,
    upper: Vec<f64>,
    /// Distance from each row to its nearest other row.
    nearest: Vec<f64>,
}

/// Per-image outputs of one bandwidth evaluation for one label set.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSweep {
    /// Prediction for each image from all other images.
    pub held_out: Vec<f64>,
    /// Smoothed value for each image (its own weight included).
    pub smoothed: Vec<f64>,
}

/// Label totals per image: `sums[g]` adds the targets of image `g` and
/// `counts[g]` says how many there are.
#[derive(Debug, Clone, Copy)]
pub struct GroupTargets<'a> {
    pub sums: &'a [f64],
    pub counts: &'a [f64],
}

// exp(-745.2) is below the smallest subnormal
const EXP_CUTOFF: f64 = 745.2;
// rows whose best weight is below this are recomputed with a shift
const SHIFT_BELOW: f64 = 690.0;
// weights below exp(-40) of a row's largest weight are dropped from it
const RELATIVE_CUTOFF: f64 = 40.0;

/// `sum(((a - b) * inv)^2)` with four interleaved accumulators.
fn row_distance(a: &[f64], b: &[f64], inv: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    let mut cs = inv.chunks_exact(4);
    for ((x, y), s) in (&mut ca).zip(&mut cb).zip(&mut cs) {
        for k in 0..4 {
            let d = (x[k] - y[k]) * s[k];
            acc[k] += d * d;
        }
    }
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .zip(cs.remainder())
        .map(|((x, y), s)| {
            let d = (x - y) * s;
            d * d
        })
        .sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl LooEngine {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("rows have different lengths"));
        }
        let stats = StandardizationStats::from_rows(rows.iter().map(Vec::as_slice), dim);
        let inv = stats.inverse_scales();
        let inv = inv.as_slice();
        let upper: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| (i + 1..n).map(move |j| row_distance(&rows[i], &rows[j], inv)))
            .collect();
        let mut engine = Self {
            n,
            upper,
            nearest: vec![f64::INFINITY; n],
        };
        for i in 0..n {
            for j in i + 1..n {
                let d = engine.get(i, j);
                engine.nearest[i] = engine.nearest[i].min(d);
                engine.nearest[j] = engine.nearest[j].min(d);
            }
        }
        Ok(engine)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn offset(&self, i: usize) -> usize {
        i * self.n - i * (i + 1) / 2
    }

    /// Squared standardized distance between images `i` and `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.upper[self.offset(i) + (j - i - 1)],
            std::cmp::Ordering::Greater => self.get(j, i),
        }
    }

    /// Held-out predictions and smoothed values at bandwidth `eta` for
    /// several label sets sharing the same kernel.
    pub fn evaluate(&self, eta: f64, targets: &[GroupTargets<'_>]) -> Vec<KernelSweep> {
        let n = self.n;
        let s = targets.len();
        let counts = targets.first().map(|t| t.counts).unwrap_or(&[]);
        let mut num = vec![0.0; n * s];
        let mut den = vec![0.0; n];
        let inv = 1.0 / eta;
        // a pair is kept while it matters to either endpoint's held-out row
        let keep: Vec<f64> = self
            .nearest
            .iter()
            .map(|&m| (m * inv + RELATIVE_CUTOFF).min(EXP_CUTOFF))
            .collect();
        for i in 0..n {
            let row = &self.upper[self.offset(i)..self.offset(i) + (n - i - 1)];
            let (mut den_i, base) = (0.0, i * s);
            for (k, &d) in row.iter().enumerate() {
                let x = d * inv;
                let j = i + 1 + k;
                if x > keep[i] && x > keep[j] {
                    continue;
                }
                let e = (-x).exp();
                den_i += e * counts[j];
                den[j] += e * counts[i];
                for (t, tg) in targets.iter().enumerate() {
                    num[base + t] += e * tg.sums[j];
                    num[j * s + t] += e * tg.sums[i];
                }
            }
            den[i] += den_i;
        }

        let mut out: Vec<KernelSweep> = (0..s)
            .map(|_| KernelSweep {
                held_out: vec![0.0; n],
                smoothed: vec![0.0; n],
            })
            .collect();
        for i in 0..n {
            for (t, tg) in targets.iter().enumerate() {
                out[t].smoothed[i] = (num[i * s + t] + tg.sums[i]) / (den[i] + tg.counts[i]);
            }
            if self.nearest[i] * inv < SHIFT_BELOW {
                for (t, o) in out.iter_mut().enumerate() {
                    o.held_out[i] = num[i * s + t] / den[i];
                }
            } else {
                self.shifted_row(i, inv, targets, &mut out);
            }
        }
        out
    }

    fn shifted_row(&self, i: usize, inv: f64, targets: &[GroupTargets<'_>], out: &mut [KernelSweep]) {
        let shift = self.nearest[i];
        let mut num = vec![0.0; targets.len()];
        let mut den = 0.0;
        for j in (0..self.n).filter(|&j| j != i) {
            let x = (self.get(i, j) - shift) * inv;
            if x >= EXP_CUTOFF {
                continue;
            }
            let e = (-x).exp();
            den += e * targets[0].counts[j];
            for (t, tg) in targets.iter().enumerate() {
                num[t] += e * tg.sums[j];
            }
        }
        for (t, o) in out.iter_mut().enumerate() {
            o.held_out[i] = num[t] / den;
        }
    }
}

/// Leave-one-image-out cross-validation over `config.grid`.
///
/// Every image is predicted from all the others; all targets of a
/// multi-valued label are scored against that one prediction.
pub fn loo_cv(examples: &[LabeledExample], config: &TuneConfig) -> Result<TuneResult> {
    config.validate()?;
    let mut group_of: HashMap<&str, usize> = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    let mut point_groups = Vec::new();
    let mut labels = Vec::new();
    for ex in examples {
        ex.validate()?;
        let g = *group_of.entry(ex.id.as_str()).or_insert_with(|| {
            rows.push(ex.features.to_f64());
            sums.push(0.0);
            counts.push(0.0);
            rows.len() - 1
        });
        if rows[g] != ex.features.to_f64() {
            return Err(Error::invalid(format!(
                "examples with id `{}` carry different features",
                ex.id
            )));
        }
        for v in ex.label.outputs() {
            sums[g] += v;
            counts[g] += 1.0;
            point_groups.push(g);
            labels.push(v);
        }
    }
    if rows.len() < 2 {
        return Err(Error::invalid(
            "leave-one-out needs at least two distinct images",
        ));
    }
    let engine = LooEngine::from_rows(&rows)?;
    let targets = [GroupTargets {
        sums: &sums,
        counts: &counts,
    }];
    let curve: Vec<CurvePoint> = config
        .grid
        .par_iter()
        .map(|&eta| {
            let sweep = &engine.evaluate(eta, &targets)[0];
            let preds: Vec<f64> = point_groups
                .iter()
                .map(|&g| {
                    let p = sweep.held_out[g];
                    if config.round {
                        nearest_integer(p)
                    } else {
                        p
                    }
                })
                .collect();
            CurvePoint {
                eta,
                loss: config.loss.evaluate(&preds, &labels),
            }
        })
        .collect();
    let mut best = select_minimum(&curve).ok_or_else(|| Error::invalid("every grid loss is NaN"))?;
    let (lo, hi) = bracket(&config.grid, best.eta);
    let score = |eta: f64| {
        let sweep = &engine.evaluate(eta, &targets)[0];
        let preds: Vec<f64> = point_groups
            .iter()
            .map(|&g| if config.round { nearest_integer(sweep.held_out[g]) } else { sweep.held_out[g] })
            .collect();
        config.loss.evaluate(&preds, &labels)
    };
    if let Some(p) = golden_section(score, lo, hi, config.refine) {
        if p.loss < best.loss {
            best = p;
        }
    }
    Ok(TuneResult {
        eta: best.eta,
        loss: best.loss,
        curve,
    })
}

/// Global rule of thumb: twice the mean squared standardized difference
/// between the training vectors and the test vector. A zero result is
/// replaced by `fallback`.
pub fn rule_of_thumb_eta(train_std: &[Vec<f64>], test_std: &[f64], fallback: f64) -> f64 {
    let d = train_std.len() as f64;
    let t = test_std.len() as f64;
    let total: f64 = train_std.iter().map(|r| squared_distance(r, test_std)).sum();
    let eta = 2.0 * total / (d * t);
    if eta > 0.0 {
        eta
    } else {
        fallback
    }
}

/// Per-example rule of thumb; averages to [`rule_of_thumb_eta`] before
/// zeros are replaced by `fallback`.
pub fn rule_of_thumb_eta_per_datum(
    train_std: &[Vec<f64>],
    test_std: &[f64],
    fallback: f64,
) -> Vec<f64> {
    let t = test_std.len() as f64;
    train_std
        .iter()
        .map(|r| {
            let eta = 2.0 * squared_distance(r, test_std) / t;
            if eta > 0.0 {
                eta
            } else {
                fallback
            }
        })
        .collect()
}
