//! CSV outputs. Floats are written in shortest round-trip form, so reading a
//! file back yields the exact values that were written.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::imgcore::FeatureVector;
use crate::kc::KernelModel;
use crate::{Error, Result};

/// `image_id,r_1,...,r_T`.
pub fn write_features_csv<W: Write>(out: W, rows: &[(String, FeatureVector)]) -> Result<()> {
    let t = rows.first().map_or(0, |r| r.1.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["image_id".to_string()];
    header.extend((1..=t).map(|k| format!("r_{k}")));
    w.write_record(&header)?;
    for (id, f) in rows {
        if f.len() != t {
            return Err(Error::DimensionMismatch {
                expected: t,
                found: f.len(),
            });
        }
        let mut rec = vec![id.clone()];
        rec.extend(f.counts().iter().map(u32::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_features_csv<R: Read>(input: R) -> Result<Vec<(String, FeatureVector)>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let counts = rec
            .iter()
            .skip(1)
            .map(|c| c.parse::<u32>().map_err(|_| Error::invalid(format!("bad count `{c}` for {id}"))))
            .collect::<Result<Vec<u32>>>()?;
        out.push((id, FeatureVector::new(counts)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub image_id: String,
    pub prediction: f64,
    pub rounded: u64,
    pub variance: f64,
}

fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// `image_id,prediction,rounded,variance`.
pub fn write_predictions_csv<W: Write>(out: W, rows: &[PredictionRow]) -> Result<()> {
    if rows.is_empty() {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["image_id", "prediction", "rounded", "variance"])?;
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        return Ok(());
    }
    write_rows(out, rows)
}

pub fn read_predictions_csv<R: Read>(input: R) -> Result<Vec<PredictionRow>> {
    read_rows(input)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ReviewFlag {
    Ok,
    Review,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingRow {
    pub image_id: String,
    pub label: f64,
    pub smoothed: f64,
    pub variance: f64,
    pub flag: ReviewFlag,
}

/// `REVIEW` when two standard deviations exceed `fraction` of the smoothed
/// value.
pub fn review_flag(smoothed: f64, variance: f64, fraction: f64) -> ReviewFlag {
    if 2.0 * variance.sqrt() > fraction * smoothed.abs() {
        ReviewFlag::Review
    } else {
        ReviewFlag::Ok
    }
}

/// One row per training point of `model`.
pub fn smoothing_rows(model: &KernelModel, fraction: f64) -> Vec<SmoothingRow> {
    let sources = model.point_sources();
    model
        .labels()
        .into_iter()
        .zip(model.smooth())
        .zip(sources)
        .map(|((label, s), src)| SmoothingRow {
            image_id: model.examples()[src].id.clone(),
            label,
            smoothed: s.value,
            variance: s.variance,
            flag: review_flag(s.value, s.variance, fraction),
        })
        .collect()
}

/// `image_id,label,smoothed,variance,flag`.
pub fn write_smoothing_csv<W: Write>(out: W, rows: &[SmoothingRow]) -> Result<()> {
    write_rows(out, rows)
}

pub fn read_smoothing_csv<R: Read>(input: R) -> Result<Vec<SmoothingRow>> {
    read_rows(input)
}
