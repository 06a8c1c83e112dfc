use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-major RGB raster with every channel in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                found: pixels.len(),
            });
        }
        if let Some(p) = pixels
            .iter()
            .find(|p| p.iter().any(|c| !(0.0..=1.0).contains(c)))
        {
            return Err(Error::invalid(format!(
                "pixel {p:?} has a channel outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, pixel: [f64; 3]) -> Result<Self> {
        Self::new(width, height, vec![pixel; width * height])
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }
}

/// Per-channel upper bounds `[t1, t2, t3]`, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct ThresholdVector([f64; 3]);

impl ThresholdVector {
    pub fn new(t1: f64, t2: f64, t3: f64) -> Result<Self> {
        Self::try_from([t1, t2, t3])
    }

    pub fn uniform(t: f64) -> Result<Self> {
        Self::new(t, t, t)
    }

    pub fn channels(&self) -> [f64; 3] {
        self.0
    }

    /// True when every channel of `p` is at or below the bound.
    #[inline]
    pub fn admits(&self, p: &[f64; 3]) -> bool {
        p[0] <= self.0[0] && p[1] <= self.0[1] && p[2] <= self.0[2]
    }

    pub(crate) fn bits(&self) -> [u64; 3] {
        self.0.map(f64::to_bits)
    }
}

impl TryFrom<[f64; 3]> for ThresholdVector {
    type Error = Error;

    fn try_from(t: [f64; 3]) -> Result<Self> {
        if t.iter().all(|c| (0.0..=1.0).contains(c)) {
            Ok(Self(t))
        } else {
            Err(Error::invalid(format!(
                "threshold vector {t:?} has a component outside [0, 1]"
            )))
        }
    }
}

impl From<ThresholdVector> for [f64; 3] {
    fn from(t: ThresholdVector) -> Self {
        t.0
    }
}

impl fmt::Display for ThresholdVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}]", self.0[0], self.0[1], self.0[2])
    }
}

impl FromStr for ThresholdVector {
    type Err = Error;

    /// Parses `t1,t2,t3` (commas or whitespace).
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .collect();
        if parts.len() != 3 {
            return Err(Error::invalid(format!(
                "threshold vector `{s}` needs three components"
            )));
        }
        let mut t = [0.0; 3];
        for (slot, part) in t.iter_mut().zip(&parts) {
            *slot = part
                .parse()
                .map_err(|_| Error::invalid(format!("bad threshold component `{part}`")))?;
        }
        Self::try_from(t)
    }
}

/// Pixel adjacency used when grouping foreground pixels into objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[default]
    #[serde(rename = "8")]
    Eight,
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Connectivity::Four => f.write_str("4"),
            Connectivity::Eight => f.write_str("8"),
        }
    }
}

impl FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "4" | "four" => Ok(Connectivity::Four),
            "8" | "eight" => Ok(Connectivity::Eight),
            other => Err(Error::invalid(format!(
                "connectivity must be 4 or 8, got `{other}`"
            ))),
        }
    }
}

/// Filtered image; `true` marks a pixel kept by the threshold ("black").
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                found: mask.len(),
            });
        }
        Ok(Self {
            width,
            height,
            mask,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            mask: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.mask[y * self.width + x] = value;
    }

    pub fn count_set(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

/// Object counts, one per threshold vector of the extraction set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<u32>);

impl FeatureVector {
    pub fn new(counts: Vec<u32>) -> Self {
        Self(counts)
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&c| f64::from(c)).collect()
    }
}

impl From<Vec<u32>> for FeatureVector {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}
