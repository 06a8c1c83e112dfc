use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::imgcore::FeatureVector;
use crate::{Error, Result};

/// Expert annotation of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Label {
    Count { n: u64 },
    /// Real-valued count, e.g. a sum of per-object probabilities.
    Soft { n: f64 },
    /// Expert-stated lower and upper bound.
    Interval { low: f64, high: f64 },
    /// One count per expert.
    Experts { counts: Vec<f64> },
}

impl Label {
    pub fn count(n: u64) -> Self {
        Label::Count { n }
    }

    /// A single-valued label: `Count` when `v` is a whole number.
    pub fn single(v: f64) -> Self {
        if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
            Label::Count { n: v as u64 }
        } else {
            Label::Soft { n: v }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| {
            Err(Error::MalformedLabel {
                spec: self.to_string(),
                message: msg.to_string(),
            })
        };
        match self {
            Label::Count { .. } => Ok(()),
            Label::Soft { n } if !(n.is_finite() && *n >= 0.0) => bad("soft count must be >= 0"),
            Label::Soft { .. } => Ok(()),
            Label::Interval { low, high } => {
                if !(low.is_finite() && high.is_finite() && *low >= 0.0) {
                    bad("interval bounds must be finite and >= 0")
                } else if low > high {
                    bad("interval lower bound exceeds upper bound")
                } else {
                    Ok(())
                }
            }
            Label::Experts { counts } if counts.is_empty() => bad("no expert counts"),
            Label::Experts { counts } if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) => {
                bad("expert counts must be >= 0")
            }
            Label::Experts { .. } => Ok(()),
        }
    }

    /// The regression targets this label contributes: one for point labels,
    /// both bounds for an interval, every opinion for several experts.
    pub fn outputs(&self) -> Vec<f64> {
        match self {
            Label::Count { n } => vec![*n as f64],
            Label::Soft { n } => vec![*n],
            Label::Interval { low, high } => vec![*low, *high],
            Label::Experts { counts } => counts.clone(),
        }
    }

    /// A single representative value: the count itself, the interval
    /// midpoint, or the mean expert opinion.
    pub fn value(&self) -> f64 {
        match self {
            Label::Count { n } => *n as f64,
            Label::Soft { n } => *n,
            Label::Interval { low, high } => 0.5 * (low + high),
            Label::Experts { counts } => counts.iter().sum::<f64>() / counts.len() as f64,
        }
    }
}

fn parse_f64(spec: &str, part: &str) -> Result<f64> {
    part.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::MalformedLabel {
            spec: spec.to_string(),
            message: format!("`{part}` is not a number"),
        })
}

impl FromStr for Label {
    type Err = Error;

    /// Grammar: `count:N`, `soft:p1,p2,...`, `interval:low,high`,
    /// `experts:n1|n2|...`.
    fn from_str(spec: &str) -> Result<Self> {
        let malformed = |message: &str| Error::MalformedLabel {
            spec: spec.to_string(),
            message: message.to_string(),
        };
        let (kind, body) = spec
            .split_once(':')
            .ok_or_else(|| malformed("expected `kind:value`"))?;
        let label = match kind.trim() {
            "count" => Label::Count {
                n: body
                    .trim()
                    .parse()
                    .map_err(|_| malformed("count must be a non-negative integer"))?,
            },
            "soft" => {
                let probs = if body.trim().is_empty() {
                    Vec::new()
                } else {
                    body.split(',')
                        .map(|p| parse_f64(spec, p))
                        .collect::<Result<Vec<_>>>()?
                };
                Label::Soft {
                    n: soft_label(&probs).map_err(|_| malformed("probabilities must lie in [0, 1]"))?,
                }
            }
            "interval" => {
                let parts: Vec<&str> = body.split(',').collect();
                if parts.len() != 2 {
                    return Err(malformed("interval needs `low,high`"));
                }
                Label::Interval {
                    low: parse_f64(spec, parts[0])?,
                    high: parse_f64(spec, parts[1])?,
                }
            }
            "experts" => Label::Experts {
                counts: body
                    .split('|')
                    .map(|p| parse_f64(spec, p))
                    .collect::<Result<Vec<_>>>()?,
            },
            _ => return Err(malformed("unknown label kind")),
        };
        label.validate().map_err(|e| match e {
            Error::MalformedLabel { message, .. } => malformed(&message),
            other => other,
        })?;
        Ok(label)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Count { n } => write!(f, "count:{n}"),
            Label::Soft { n } => {
                // whole units as probability one, then the remainder
                let whole = n.floor();
                let frac = n - whole;
                let mut parts: Vec<String> = (0..whole as u64).map(|_| "1".to_string()).collect();
                if frac > 0.0 || parts.is_empty() {
                    parts.push(frac.to_string());
                }
                write!(f, "soft:{}", parts.join(","))
            }
            Label::Interval { low, high } => write!(f, "interval:{low},{high}"),
            Label::Experts { counts } => {
                f.write_str("experts:")?;
                for (i, c) in counts.iter().enumerate() {
                    if i > 0 {
                        f.write_str("|")?;
                    }
                    write!(f, "{c}")?;
                }
                Ok(())
            }
        }
    }
}

/// Sum of per-object membership probabilities.
pub fn soft_label(probabilities: &[f64]) -> Result<f64> {
    if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
    }
    Ok(probabilities.iter().sum())
}

/// One image of the training set with its expert annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    /// Image identity. Examples sharing an id are opinions about the same
    /// image and must carry the same features.
    pub id: String,
    pub features: FeatureVector,
    pub label: Label,
    /// Expert confidence in `[0, 1]`.
    #[serde(default = "one")]
    pub beta: f64,
    /// Optional expert-stated bounds around a point label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<(f64, f64)>,
}

fn one() -> f64 {
    1.0
}

impl LabeledExample {
    pub fn new(id: impl Into<String>, features: FeatureVector, label: Label) -> Self {
        Self {
            id: id.into(),
            features,
            label,
            beta: 1.0,
            bounds: None,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_bounds(mut self, low: f64, high: f64) -> Self {
        self.bounds = Some((low, high));
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.label.validate()?;
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid(format!(
                "{}: confidence {} outside [0, 1]",
                self.id, self.beta
            )));
        }
        if let Some((lo, hi)) = self.bounds {
            Label::Interval { low: lo, high: hi }.validate()?;
        }
        Ok(())
    }

    /// The interval this example carries, either as its label or as bounds.
    fn interval(&self) -> Option<(f64, f64)> {
        match (&self.label, self.bounds) {
            (Label::Interval { low, high }, _) => Some((*low, *high)),
            (_, b) => b,
        }
    }
}

/// Splits every multi-valued label into single-valued examples that keep
/// the image id, so `E` opinions on `D` images become `E * D` examples.
pub fn flatten_multi_expert(examples: &[LabeledExample]) -> Vec<LabeledExample> {
    examples
        .iter()
        .flat_map(|ex| {
            ex.label.outputs().into_iter().map(move |v| LabeledExample {
                label: Label::single(v),
                bounds: None,
                ..ex.clone()
            })
        })
        .collect()
}

/// Appends a copy of every interval-carrying example labeled with the
/// interval midpoint, unless the midpoint is already one of its outputs.
/// The copies get the id `<id>#mid`, so they count as new data points.
pub fn augment_with_interval_midpoints(examples: &[LabeledExample]) -> Vec<LabeledExample> {
    let mut out = examples.to_vec();
    for ex in examples {
        let Some((lo, hi)) = ex.interval() else {
            continue;
        };
        let mid = 0.5 * (lo + hi);
        if ex.label.outputs().contains(&mid) {
            continue;
        }
        out.push(LabeledExample {
            id: format!("{}#mid", ex.id),
            features: ex.features.clone(),
            label: Label::single(mid),
            beta: ex.beta,
            bounds: None,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[u32]) -> FeatureVector {
        FeatureVector::new(v.to_vec())
    }

    #[test]
    fn soft_labels() {
        assert_eq!(soft_label(&[]).unwrap(), 0.0);
        assert_eq!(soft_label(&[1.0; 7]).unwrap(), 7.0);
        assert_eq!(soft_label(&[0.5, 0.5]).unwrap(), 1.0);
        assert!(soft_label(&[0.5, 1.5]).is_err());
    }

    #[test]
    fn label_grammar() {
        assert_eq!("count:12".parse::<Label>().unwrap(), Label::count(12));
        assert_eq!(
            "soft:1,0.5,0.25".parse::<Label>().unwrap(),
            Label::Soft { n: 1.75 }
        );
        assert_eq!(
            "interval:8,12".parse::<Label>().unwrap(),
            Label::Interval { low: 8.0, high: 12.0 }
        );
        assert_eq!(
            "experts:10|11|12.5".parse::<Label>().unwrap(),
            Label::Experts { counts: vec![10.0, 11.0, 12.5] }
        );
        for bad in ["count:-1", "interval:5,3", "soft:2", "nope:1", "count", "experts:", "interval:1"] {
            assert!(bad.parse::<Label>().is_err(), "{bad}");
        }
    }

    #[test]
    fn label_display_round_trips() {
        for s in ["count:3", "interval:1.5,4", "experts:1|2|3", "soft:1,1,0.75", "soft:0"] {
            assert_eq!(s.parse::<Label>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn flatten_counts() {
        let one = vec![LabeledExample::new("a", fv(&[1]), Label::count(4))];
        assert_eq!(flatten_multi_expert(&one), one);
        let many: Vec<_> = (0..2)
            .map(|d| {
                LabeledExample::new(
                    format!("img{d}"),
                    fv(&[d]),
                    Label::Experts { counts: vec![1.0, 2.0, 3.0] },
                )
            })
            .collect();
        let flat = flatten_multi_expert(&many);
        assert_eq!(flat.len(), 6);
        assert_eq!(flat[4].id, "img1");
        let iv = vec![LabeledExample::new("b", fv(&[2]), Label::Interval { low: 3.0, high: 9.0 })];
        let flat = flatten_multi_expert(&iv);
        assert_eq!(flat.iter().map(|e| e.label.value()).collect::<Vec<_>>(), vec![3.0, 9.0]);
    }

    #[test]
    fn midpoints() {
        let plain = vec![LabeledExample::new("a", fv(&[1]), Label::count(4))];
        assert_eq!(augment_with_interval_midpoints(&plain), plain);

        let centered = vec![LabeledExample::new("a", fv(&[1]), Label::count(10)).with_bounds(8.0, 12.0)];
        assert_eq!(augment_with_interval_midpoints(&centered).len(), 1);

        let skewed = vec![LabeledExample::new("a", fv(&[1]), Label::count(10)).with_bounds(9.0, 12.0)];
        let out = augment_with_interval_midpoints(&skewed);
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].label, Label::Soft { n: 10.5 });
        assert_eq!(out[1].features, out[0].features);

        let iv = vec![LabeledExample::new("a", fv(&[1]), Label::Interval { low: 2.0, high: 6.0 })];
        let out = augment_with_interval_midpoints(&iv);
        assert_eq!(out[1].label, Label::count(4));
    }

    #[test]
    fn beta_range_is_checked() {
        let ex = LabeledExample::new("a", fv(&[1]), Label::count(1)).with_beta(1.5);
        assert!(ex.validate().is_err());
    }
}
