//! Color histograms and quantile-based threshold adaptation.
//!
//! Each channel is binned into [`HISTOGRAM_BINS`] uniform bins on `[0, 1]`.
//! The empirical CDF is treated as piecewise linear inside every bin and is
//! clamped by the exact per-channel minimum and maximum, which the histogram
//! keeps alongside the counts.

use serde::{Deserialize, Serialize};

use super::{RgbImage, ThresholdVector};
use crate::{Error, Result};

pub const HISTOGRAM_BINS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorHistogram {
    bins: [Vec<u64>; 3],
    total: u64,
    min: [f64; 3],
    max: [f64; 3],
}

fn bin_of(c: f64) -> usize {
    ((c * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)
}

impl Default for ColorHistogram {
    fn default() -> Self {
        Self::new()
    }
}

impl ColorHistogram {
    pub fn new() -> Self {
        Self {
            bins: std::array::from_fn(|_| vec![0; HISTOGRAM_BINS]),
            total: 0,
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        }
    }

    pub fn from_image(img: &RgbImage) -> Self {
        let mut h = Self::new();
        h.add_image(img);
        h
    }

    pub fn add_image(&mut self, img: &RgbImage) {
        for p in img.pixels() {
            for (k, &c) in p.iter().enumerate() {
                self.bins[k][bin_of(c)] += 1;
                self.min[k] = self.min[k].min(c);
                self.max[k] = self.max[k].max(c);
            }
        }
        self.total += img.pixels().len() as u64;
    }

    /// Pools another histogram into this one (weighting by pixel count).
    pub fn merge(&mut self, other: &ColorHistogram) {
        for k in 0..3 {
            for (a, b) in self.bins[k].iter_mut().zip(&other.bins[k]) {
                *a += b;
            }
            self.min[k] = self.min[k].min(other.min[k]);
            self.max[k] = self.max[k].max(other.max[k]);
        }
        self.total += other.total;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn bins(&self, channel: usize) -> &[u64] {
        &self.bins[channel]
    }

    pub fn min(&self) -> [f64; 3] {
        self.min
    }

    pub fn max(&self) -> [f64; 3] {
        self.max
    }

    /// Approximate fraction of pixels whose `channel` value is `<= t`.
    pub fn fraction_at_or_below(&self, channel: usize, t: f64) -> Result<f64> {
        if self.total == 0 {
            return Err(Error::EmptyHistogram);
        }
        if t < self.min[channel] {
            return Ok(0.0);
        }
        if t >= self.max[channel] {
            return Ok(1.0);
        }
        let bins = &self.bins[channel];
        let b = bin_of(t);
        let below: u64 = bins[..b].iter().sum();
        let within = t * HISTOGRAM_BINS as f64 - b as f64;
        let f = (below as f64 + bins[b] as f64 * within) / self.total as f64;
        Ok(f.clamp(0.0, 1.0))
    }

    /// Smallest `x` whose approximate CDF reaches `a` (clamped to the
    /// channel maximum).
    pub fn quantile(&self, channel: usize, a: f64) -> Result<f64> {
        if self.total == 0 {
            return Err(Error::EmptyHistogram);
        }
        if a <= 0.0 {
            return Ok(0.0);
        }
        let target = a.min(1.0) * self.total as f64;
        let bins = &self.bins[channel];
        let mut below = 0u64;
        for (b, &count) in bins.iter().enumerate() {
            let upto = below + count;
            if count > 0 && upto as f64 >= target {
                let within = ((target - below as f64) / count as f64).clamp(0.0, 1.0);
                let x = (b as f64 + within) / HISTOGRAM_BINS as f64;
                return Ok(x.clamp(self.min[channel], self.max[channel]));
            }
            below = upto;
        }
        Ok(self.max[channel])
    }
}

/// Re-expresses `t` as per-channel probabilities under `reference`, then
/// maps those probabilities to quantiles of `target`.
pub fn adapt_thresholds(
    t: &ThresholdVector,
    reference: &ColorHistogram,
    target: &ColorHistogram,
) -> Result<ThresholdVector> {
    let c = t.channels();
    let mut out = [0.0; 3];
    for k in 0..3 {
        let a = reference.fraction_at_or_below(k, c[k])?;
        out[k] = target.quantile(k, a)?;
    }
    ThresholdVector::try_from(out)
}
