//! Line-oriented dataset manifest.
//!
//! ```text
//! kcounter-manifest v1
//! # comments and blank lines are ignored
//! connectivity 8
//! min-area 1
//! threshold 0.35 0.30 0.40
//! threshold 0.50,0.45,0.55
//! image slides/a.png count:41
//! image "slides/b c.png" experts:30|34 beta=0.9
//! image slides/d.png count:17 expert=ann bounds=15,20
//! image slides/e.png -
//! ```
//!
//! Image paths are relative to the manifest's directory. `-` marks an
//! unlabeled image (usable for prediction only).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::imgcore::{Connectivity, ThresholdVector};
use crate::kc::Label;
use crate::{Error, Result};

pub const MANIFEST_HEADER: &str = "kcounter-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// Path as written in the manifest.
    pub path: String,
    pub label: Option<Label>,
    pub beta: Option<f64>,
    pub expert: Option<String>,
    pub bounds: Option<(f64, f64)>,
    /// Display id; defaults to `path`.
    pub id: Option<String>,
}

impl ManifestEntry {
    pub fn new(path: impl Into<String>, label: Option<Label>) -> Self {
        Self {
            path: path.into(),
            label,
            beta: None,
            expert: None,
            bounds: None,
            id: None,
        }
    }

    pub fn display_id(&self) -> &str {
        self.id.as_deref().unwrap_or(&self.path)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub thresholds: Vec<ThresholdVector>,
    pub connectivity: Option<Connectivity>,
    pub min_area: Option<usize>,
    pub entries: Vec<ManifestEntry>,
    /// Directory that relative image paths resolve against.
    pub base_dir: PathBuf,
}

fn tokenize(line: &str) -> std::result::Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut tok = String::new();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some('\\') => tok.extend(chars.next()),
                    Some(ch) => tok.push(ch),
                    None => return Err("unterminated quote".into()),
                }
            }
            out.push(tok);
        } else {
            let mut tok = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() {
                    break;
                }
                tok.push(ch);
                chars.next();
            }
            out.push(tok);
        }
    }
    Ok(out)
}

fn quote(s: &str) -> String {
    if s.is_empty() || s.chars().any(|c| c.is_whitespace() || c == '"' || c == '\\') {
        format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
    } else {
        s.to_string()
    }
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, path, base)
    }

    /// Parses manifest text; `origin` names the source in errors.
    pub fn parse(text: &str, origin: &Path, base_dir: PathBuf) -> Result<Self> {
        let err = |line: usize, message: String| Error::Manifest {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut m = Manifest {
            base_dir,
            ..Manifest::default()
        };
        let mut seen_header = false;
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks = tokenize(line).map_err(|e| err(n, e))?;
            if !seen_header {
                match toks.as_slice() {
                    [h, v] if h == MANIFEST_HEADER => {
                        let found: u32 = v
                            .strip_prefix('v')
                            .and_then(|x| x.parse().ok())
                            .ok_or_else(|| err(n, format!("bad version tag `{v}`")))?;
                        if found != MANIFEST_VERSION {
                            return Err(Error::Version {
                                path: origin.to_path_buf(),
                                found,
                                expected: MANIFEST_VERSION,
                            });
                        }
                        seen_header = true;
                        continue;
                    }
                    _ => return Err(err(n, format!("expected `{MANIFEST_HEADER} v{MANIFEST_VERSION}` header"))),
                }
            }
            match toks[0].as_str() {
                "connectivity" => {
                    let [_, c] = toks.as_slice() else {
                        return Err(err(n, "usage: connectivity 4|8".into()));
                    };
                    m.connectivity = Some(c.parse().map_err(|e: Error| err(n, e.to_string()))?);
                }
                "min-area" => {
                    let [_, a] = toks.as_slice() else {
                        return Err(err(n, "usage: min-area N".into()));
                    };
                    let a: usize = a.parse().map_err(|_| err(n, format!("bad min-area `{a}`")))?;
                    if a == 0 {
                        return Err(err(n, "min-area must be at least 1".into()));
                    }
                    m.min_area = Some(a);
                }
                "threshold" => {
                    let t: ThresholdVector = toks[1..]
                        .join(" ")
                        .parse()
                        .map_err(|e: Error| err(n, e.to_string()))?;
                    m.thresholds.push(t);
                }
                "image" => m.entries.push(parse_entry(&toks[1..]).map_err(|e| err(n, e))?),
                other => return Err(err(n, format!("unknown directive `{other}`"))),
            }
        }
        if !seen_header {
            return Err(err(0, "missing manifest header".into()));
        }
        Ok(m)
    }

    /// Absolute or base-relative location of an entry's image.
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_atomic(path, self.to_string().as_bytes())
    }
}

fn parse_entry(toks: &[String]) -> std::result::Result<ManifestEntry, String> {
    let [path, label, attrs @ ..] = toks else {
        return Err("usage: image PATH LABEL [beta=B] [expert=NAME] [bounds=LO,HI] [id=ID]".into());
    };
    let label = if label == "-" {
        None
    } else {
        Some(Label::from_str(label).map_err(|e| e.to_string())?)
    };
    let mut e = ManifestEntry::new(path.clone(), label);
    for a in attrs {
        let (k, v) = a.split_once('=').ok_or_else(|| format!("expected key=value, got `{a}`"))?;
        match k {
            "beta" => {
                let b: f64 = v.parse().map_err(|_| format!("bad beta `{v}`"))?;
                if !(0.0..=1.0).contains(&b) {
                    return Err(format!("beta {b} outside [0, 1]"));
                }
                e.beta = Some(b);
            }
            "expert" => e.expert = Some(v.to_string()),
            "id" => e.id = Some(v.to_string()),
            "bounds" => {
                let (lo, hi) = v.split_once(',').ok_or_else(|| format!("bounds need LO,HI, got `{v}`"))?;
                let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound `{lo}`"))?;
                let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound `{hi}`"))?;
                Label::Interval { low: lo, high: hi }.validate().map_err(|e| e.to_string())?;
                e.bounds = Some((lo, hi));
            }
            other => return Err(format!("unknown attribute `{other}`")),
        }
    }
    Ok(e)
}

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{MANIFEST_HEADER} v{MANIFEST_VERSION}")?;
        if let Some(c) = self.connectivity {
            writeln!(f, "connectivity {c}")?;
        }
        if let Some(a) = self.min_area {
            writeln!(f, "min-area {a}")?;
        }
        for t in &self.thresholds {
            let [a, b, c] = t.channels();
            writeln!(f, "threshold {a} {b} {c}")?;
        }
        for e in &self.entries {
            let label = e.label.as_ref().map_or_else(|| "-".to_string(), Label::to_string);
            write!(f, "image {} {}", quote(&e.path), quote(&label))?;
            if let Some(b) = e.beta {
                write!(f, " beta={b}")?;
            }
            if let Some(x) = &e.expert {
                write!(f, " {}", quote(&format!("expert={x}")))?;
            }
            if let Some((lo, hi)) = e.bounds {
                write!(f, " bounds={lo},{hi}")?;
            }
            if let Some(id) = &e.id {
                write!(f, " {}", quote(&format!("id={id}")))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
