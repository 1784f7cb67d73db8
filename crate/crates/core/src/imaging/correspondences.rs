//! Symmetric pixel pairs and their text format.
//!
//! One pair per line: `p_col p_row q_col q_row [score]`. Blank lines and
//! anything after `#` are ignored. The optional fifth column carries a
//! matching score.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::PixelCoord;

/// A pixel `p` and its mirror counterpart `q`, both on the original image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub p: PixelCoord,
    pub q: PixelCoord,
    pub score: Option<f64>,
}

impl Correspondence {
    pub fn new(p: PixelCoord, q: PixelCoord) -> Self {
        Correspondence { p, q, score: None }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }
}

/// Ordered set of correspondences. Pairs with `p == q` are never stored.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrespondenceSet {
    pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a pair; returns `false` (and drops it) when `p == q`.
    pub fn push(&mut self, c: Correspondence) -> bool {
        if c.p == c.q {
            return false;
        }
        self.pairs.push(c);
        true
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Correspondence> {
        self.pairs.iter()
    }

    pub fn as_slice(&self) -> &[Correspondence] {
        &self.pairs
    }

    /// Drops pairs with an endpoint outside the pixel area of a
    /// `width x height` image. Returns the number removed.
    pub fn retain_in_bounds(&mut self, width: usize, height: usize) -> usize {
        let before = self.pairs.len();
        self.pairs
            .retain(|c| c.p.in_bounds(width, height) && c.q.in_bounds(width, height));
        before - self.pairs.len()
    }

    pub fn all_in_bounds(&self, width: usize, height: usize) -> bool {
        self.pairs
            .iter()
            .all(|c| c.p.in_bounds(width, height) && c.q.in_bounds(width, height))
    }
}

impl FromIterator<Correspondence> for CorrespondenceSet {
    fn from_iter<I: IntoIterator<Item = Correspondence>>(iter: I) -> Self {
        let mut set = CorrespondenceSet::new();
        for c in iter {
            set.push(c);
        }
        set
    }
}

impl<'a> IntoIterator for &'a CorrespondenceSet {
    type Item = &'a Correspondence;
    type IntoIter = std::slice::Iter<'a, Correspondence>;

    fn into_iter(self) -> Self::IntoIter {
        self.pairs.iter()
    }
}

pub fn parse_correspondences(text: &str, name: &str) -> Result<CorrespondenceSet> {
    let mut set = CorrespondenceSet::new();
    for (i, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: name.to_string(),
            line: i + 1,
            message,
        };
        let values = content
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("not a finite number: {t:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != 4 && values.len() != 5 {
            return Err(err(format!("expected 4 or 5 values, found {}", values.len())));
        }
        let mut c = Correspondence::new(
            PixelCoord::new(values[0], values[1]),
            PixelCoord::new(values[2], values[3]),
        );
        c.score = values.get(4).copied();
        set.push(c);
    }
    Ok(set)
}

/// Serializes with shortest round-trip float formatting.
pub fn format_correspondences(set: &CorrespondenceSet) -> String {
    let mut out = String::new();
    for c in set {
        let _ = write!(out, "{} {} {} {}", c.p.col, c.p.row, c.q.col, c.q.row);
        if let Some(s) = c.score {
            let _ = write!(out, " {s}");
        }
        out.push('\n');
    }
    out
}

pub fn read_correspondences(path: impl AsRef<Path>) -> Result<CorrespondenceSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_correspondences(&text, &path.display().to_string())
}

pub fn write_correspondences(path: impl AsRef<Path>, set: &CorrespondenceSet) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_correspondences(set)).map_err(|e| Error::io(path, e))
}
