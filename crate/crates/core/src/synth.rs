//! Synthetic data from the fraction-plus-artifacts observation model.
//!
//! Filtered image `k` of image `d` shows `r_kd = round(alpha_k N_d + F_kd)`
//! objects: a fraction `alpha_k` of the `N_d` true cells plus an artifact
//! count `F_kd` uniform on `{v_k..s_k}`. Expert labels are `N_d` plus
//! integer noise uniform on `{-gamma..gamma}`.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::imgcore::FeatureVector;
use crate::rng::{derive_seed, stream};
use crate::tune::{bracket, default_grid, golden_section, select_minimum, CurvePoint, GroupTargets, LooEngine, Loss};
use crate::{nearest_integer, Error, Result};

/// Evenly spaced fractions from 0 to 1.
pub fn alpha_schedule(t: usize) -> Result<Vec<f64>> {
    if t < 2 {
        return Err(Error::invalid("alpha schedule needs T >= 2"));
    }
    Ok((0..t).map(|i| i as f64 / (t - 1) as f64).collect())
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Artifact support `(v, s)` for a capture fraction `alpha`.
pub fn vi_si(alpha: f64) -> Result<(u32, u32)> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    let v = nearest_integer(24.0 * logistic(3.0 * alpha) - 12.0);
    let s = nearest_integer(1.0 + 40.0 * logistic(3.5 * alpha) - 20.0);
    // s - v >= 1 on all of [0, 1]
    debug_assert!(s > v && v >= 0.0);
    Ok((v as u32, s as u32))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModelParams {
    pub alphas: Vec<f64>,
    pub v: Vec<u32>,
    pub s: Vec<u32>,
    pub n_max: u32,
    pub gamma: u32,
}

impl SyntheticModelParams {
    pub fn new(alphas: Vec<f64>, v: Vec<u32>, s: Vec<u32>, n_max: u32, gamma: u32) -> Result<Self> {
        let p = Self {
            alphas,
            v,
            s,
            n_max,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    /// `T` evenly spaced fractions with their default artifact supports and
    /// at most 200 cells per image.
    pub fn standard(t: usize, gamma: u32) -> Result<Self> {
        let alphas = alpha_schedule(t)?;
        let (v, s) = alphas.iter().map(|&a| vi_si(a)).collect::<Result<Vec<_>>>()?.into_iter().unzip();
        Self::new(alphas, v, s, 200, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.alphas.len();
        if t == 0 || self.v.len() != t || self.s.len() != t {
            return Err(Error::invalid("alphas, v and s must be non-empty and equally long"));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::invalid(format!("alpha {a} outside [0, 1]")));
        }
        if let Some(k) = (0..t).find(|&k| self.s[k] <= self.v[k]) {
            return Err(Error::invalid(format!(
                "artifact support at k={k} needs s > v (got v={}, s={})",
                self.v[k], self.s[k]
            )));
        }
        Ok(())
    }

    pub fn t(&self) -> usize {
        self.alphas.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub features: Vec<FeatureVector>,
    pub true_counts: Vec<u32>,
    /// Noisy expert labels; may be negative.
    pub observed_counts: Vec<i64>,
}

/// Draws true counts for `d` images.
pub fn draw_counts(n_max: u32, d: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    (0..d).map(|_| rng.gen_range(0..=n_max)).collect()
}

/// Observed object counts for the given true counts.
pub fn draw_features(params: &SyntheticModelParams, counts: &[u32], rng: &mut ChaCha8Rng) -> Vec<FeatureVector> {
    counts
        .iter()
        .map(|&n| {
            let r = (0..params.t())
                .map(|k| {
                    let f = rng.gen_range(params.v[k]..=params.s[k]);
                    nearest_integer(params.alphas[k] * f64::from(n) + f64::from(f)) as u32
                })
                .collect();
            FeatureVector::new(r)
        })
        .collect()
}

/// Adds integer noise uniform on `{-gamma..gamma}`; no clipping.
pub fn add_label_noise(counts: &[u32], gamma: u32, rng: &mut ChaCha8Rng) -> Vec<i64> {
    let g = i64::from(gamma);
    counts
        .iter()
        .map(|&n| i64::from(n) + if g == 0 { 0 } else { rng.gen_range(-g..=g) })
        .collect()
}

/// Seeded draw of a whole dataset.
///
/// True counts and label noise come from streams that do not depend on the
/// model, so datasets with different `T` or `gamma` under one seed share
/// their true counts.
pub fn generate(params: &SyntheticModelParams, d: usize, seed: u64) -> Result<SyntheticDataset> {
    params.validate()?;
    if d == 0 {
        return Err(Error::invalid("dataset size must be positive"));
    }
    let true_counts = draw_counts(params.n_max, d, &mut stream(seed, &[0]));
    let features = draw_features(params, &true_counts, &mut stream(seed, &[1, params.t() as u64]));
    let observed_counts = add_label_noise(&true_counts, params.gamma, &mut stream(seed, &[2]));
    Ok(SyntheticDataset {
        features,
        true_counts,
        observed_counts,
    })
}

/// Mean squared error.
pub fn mse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            found: predictions.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::invalid("mse of empty sequences"));
    }
    Ok(predictions.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / truths.len() as f64)
}

/// Bounds on the true count implied by one observed count `r`.
///
/// `lower = max(0, floor((r - s) / alpha))`, `upper = ceil((r - v) / alpha)`
/// (also floored at 0).
/// These ignore the rounding of the observation, so they only contain the
/// true count for every draw when `alpha > 1/2`; see
/// [`model_bounds_with_rounding`].
pub fn model_bounds(r: u64, alpha: f64, v: u32, s: u32) -> Result<(u64, u64)> {
    bounds_impl(r as f64, r as f64, alpha, v, s)
}

/// Like [`model_bounds`] but widened by the half-unit lost to rounding:
/// `floor((r - 1/2 - s) / alpha)` and `ceil((r + 1/2 - v) / alpha)`.
/// Contains the true count for every draw and every `alpha > 0`.
pub fn model_bounds_with_rounding(r: u64, alpha: f64, v: u32, s: u32) -> Result<(u64, u64)> {
    bounds_impl(r as f64 - 0.5, r as f64 + 0.5, alpha, v, s)
}

fn bounds_impl(r_low: f64, r_high: f64, alpha: f64, v: u32, s: u32) -> Result<(u64, u64)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("bounds need 0 < alpha <= 1 (got {alpha})")));
    }
    if s <= v {
        return Err(Error::invalid(format!("bounds need s > v (got v={v}, s={s})")));
    }
    let lower = ((r_low - f64::from(s)) / alpha).floor().max(0.0);
    let upper = ((r_high - f64::from(v)) / alpha).ceil().max(lower);
    Ok((lower as u64, upper as u64))
}

/// How the bandwidth of each experiment run is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum EtaPolicy {
    /// Leave-one-out over `grid`, scored by `loss` against the noisy labels,
    /// then `refine` golden-section steps around the grid minimizer.
    Loo {
        grid: Vec<f64>,
        loss: Loss,
        #[serde(default)]
        refine: usize,
    },
    Fixed { eta: f64 },
}

impl Default for EtaPolicy {
    fn default() -> Self {
        EtaPolicy::Loo {
            grid: default_grid(),
            loss: Loss::Mse,
            refine: 0,
        }
    }
}

/// Which estimate is compared with the true counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentMode {
    /// Smoothed labels (each image's own label included).
    #[default]
    Smoothing,
    /// Held-out prediction of each image from all the others.
    Prediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub t_values: Vec<usize>,
    pub d: usize,
    pub runs: usize,
    pub gammas: Vec<u32>,
    pub seed: u64,
    pub n_max: u32,
    pub eta: EtaPolicy,
    pub mode: ExperimentMode,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_values.is_empty() || self.t_values.iter().any(|&t| t < 2) {
            return Err(Error::invalid("every T must be at least 2"));
        }
        if self.d < 2 {
            return Err(Error::invalid("experiments need D >= 2"));
        }
        if self.runs == 0 {
            return Err(Error::invalid("experiments need at least one run"));
        }
        if self.gammas.is_empty() {
            return Err(Error::invalid("no gamma values given"));
        }
        match &self.eta {
            EtaPolicy::Fixed { eta } if !(eta.is_finite() && *eta > 0.0) => {
                Err(Error::invalid(format!("fixed bandwidth {eta} must be positive")))
            }
            EtaPolicy::Loo { grid, .. } if grid.is_empty() || grid.iter().any(|e| !(e.is_finite() && *e > 0.0)) => {
                Err(Error::invalid("bandwidth grid must be non-empty and positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Averaged error for one `(T, gamma)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub t: usize,
    pub gamma: u32,
    pub mse_mean: f64,
    pub mse_stderr: f64,
    pub runs: usize,
    pub d: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentTable {
    pub fn get(&self, t: usize, gamma: u32) -> Option<&ExperimentRow> {
        self.rows.iter().find(|r| r.t == t && r.gamma == gamma)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("T,gamma,mse_mean,mse_stderr,runs,D,seed\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.t, r.gamma, r.mse_mean, r.mse_stderr, r.runs, r.d, r.seed
            );
        }
        out
    }
}

/// Errors of one run for every `(T, gamma)` cell, indexed `[t][gamma]`.
fn single_run(config: &ExperimentConfig, run: usize) -> Result<Vec<Vec<f64>>> {
    let run_seed = derive_seed(config.seed, &[run as u64]);
    let truths = draw_counts(config.n_max, config.d, &mut stream(run_seed, &[0]));
    let truths_f: Vec<f64> = truths.iter().map(|&n| f64::from(n)).collect();
    let noisy: Vec<Vec<f64>> = config
        .gammas
        .iter()
        .map(|&g| {
            add_label_noise(&truths, g, &mut stream(run_seed, &[2]))
                .into_iter()
                .map(|x| x as f64)
                .collect()
        })
        .collect();
    let counts = vec![1.0; config.d];
    let targets: Vec<GroupTargets<'_>> = noisy
        .iter()
        .map(|sums| GroupTargets { sums, counts: &counts })
        .collect();

    let mut out = Vec::with_capacity(config.t_values.len());
    for &t in &config.t_values {
        let mut params = SyntheticModelParams::standard(t, 0)?;
        params.n_max = config.n_max;
        let features = draw_features(&params, &truths, &mut stream(run_seed, &[1, t as u64]));
        let rows: Vec<Vec<f64>> = features.iter().map(FeatureVector::to_f64).collect();
        let engine = LooEngine::from_rows(&rows)?;

        let pick = |sweep: &crate::tune::KernelSweep| -> Vec<f64> {
            match config.mode {
                ExperimentMode::Smoothing => sweep.smoothed.clone(),
                ExperimentMode::Prediction => sweep.held_out.clone(),
            }
        };
        let estimates: Vec<Vec<f64>> = match &config.eta {
            EtaPolicy::Fixed { eta } => engine.evaluate(*eta, &targets).iter().map(pick).collect(),
            EtaPolicy::Loo { grid, loss, refine } => {
                let mut curves = vec![Vec::with_capacity(grid.len()); targets.len()];
                for &eta in grid {
                    for (g, sweep) in engine.evaluate(eta, &targets).iter().enumerate() {
                        curves[g].push(CurvePoint {
                            eta,
                            loss: loss.evaluate(&sweep.held_out, &noisy[g]),
                        });
                    }
                }
                let mut estimates = Vec::with_capacity(targets.len());
                for (g, curve) in curves.iter().enumerate() {
                    let mut best = select_minimum(curve).ok_or_else(|| Error::invalid("every grid loss is NaN"))?;
                    let (lo, hi) = bracket(grid, best.eta);
                    let one = [targets[g]];
                    let score = |eta: f64| loss.evaluate(&engine.evaluate(eta, &one)[0].held_out, &noisy[g]);
                    if let Some(p) = golden_section(score, lo, hi, *refine) {
                        if p.loss < best.loss {
                            best = p;
                        }
                    }
                    estimates.push(pick(&engine.evaluate(best.eta, &one)[0]));
                }
                estimates
            }
        };
        out.push(
            estimates
                .iter()
                .map(|e| mse(e, &truths_f))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    Ok(out)
}

/// Averages the estimation error over independent runs for every `T` and
/// `gamma` in `config`.
///
/// Within a run, every `(T, gamma)` cell shares the true counts, and every
/// `T` shares the label noise, so differences between cells are not masked
/// by independent sampling noise. Results do not depend on thread count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentTable> {
    config.validate()?;
    let per_run: Vec<Vec<Vec<f64>>> = (0..config.runs)
        .into_par_iter()
        .map(|run| single_run(config, run))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (ti, &t) in config.t_values.iter().enumerate() {
        for (gi, &gamma) in config.gammas.iter().enumerate() {
            let vals: Vec<f64> = per_run.iter().map(|r| r[ti][gi]).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let stderr = if vals.len() > 1 {
                (vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0) / n).sqrt()
            } else {
                0.0
            };
            rows.push(ExperimentRow {
                t,
                gamma,
                mse_mean: mean,
                mse_stderr: stderr,
                runs: config.runs,
                d: config.d,
                seed: config.seed,
            });
        }
    }
    Ok(ExperimentTable { rows })
}
