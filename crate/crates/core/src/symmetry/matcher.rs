//! Scanline matching of mirrored patches on a rectified image.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{Flow1D, IntensityImage, Mask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherConfig {
    pub patch_radius: usize,
    /// Maximum horizontal displacement; `None` searches the whole row.
    pub search_radius: Option<usize>,
    /// Minimum standard deviation of the reference patch.
    pub min_contrast: f64,
    pub zncc_accept: f64,
    pub lr_tolerance: f64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            patch_radius: 5,
            search_radius: None,
            min_contrast: 0.02,
            zncc_accept: 0.8,
            lr_tolerance: 1.5,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_radius < 1 {
            return Err(Error::schema("matcher.patch_radius", "must be at least 1"));
        }
        if self.search_radius == Some(0) {
            return Err(Error::schema("matcher.search_radius", "must be at least 1"));
        }
        for (name, v) in [
            ("matcher.min_contrast", self.min_contrast),
            ("matcher.zncc_accept", self.zncc_accept),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::schema(name, "must lie in (0, 1]"));
            }
        }
        if !(self.lr_tolerance > 0.0) || !self.lr_tolerance.is_finite() {
            return Err(Error::schema("matcher.lr_tolerance", "must be positive"));
        }
        Ok(())
    }

    pub fn search_radius_for(&self, width: usize) -> usize {
        self.search_radius.unwrap_or(width.saturating_sub(1)).max(1)
    }
}

/// Centered patch statistics of every pixel whose patch fits the image.
pub(crate) struct PatchStats {
    pub mean: Vec<f64>,
    /// `sqrt(sum (v - mean)^2)`; zero when the patch does not fit.
    pub norm: Vec<f64>,
    pub fits: Vec<bool>,
    pub n: usize,
}

pub(crate) fn patch_stats(image: &IntensityImage, radius: usize) -> PatchStats {
    let (w, h) = (image.width(), image.height());
    let n = (2 * radius + 1) * (2 * radius + 1);
    let mut stats = PatchStats {
        mean: vec![0.0; w * h],
        norm: vec![0.0; w * h],
        fits: vec![false; w * h],
        n,
    };
    for r in radius..h.saturating_sub(radius) {
        for c in radius..w.saturating_sub(radius) {
            let mut sum = 0.0;
            for y in r - radius..=r + radius {
                for x in c - radius..=c + radius {
                    sum += image.get(x, y);
                }
            }
            let mean = sum / n as f64;
            let mut ss = 0.0;
            for y in r - radius..=r + radius {
                for x in c - radius..=c + radius {
                    let d = image.get(x, y) - mean;
                    ss += d * d;
                }
            }
            let i = image.index(c, r);
            stats.mean[i] = mean;
            stats.norm[i] = ss.sqrt();
            stats.fits[i] = true;
        }
    }
    stats
}

/// ZNCC between the horizontally flipped patch at `(a, row)` and the patch
/// at `(b, row)`. Both patches must fit and have non-zero spread.
pub(crate) fn mirrored_zncc(
    image: &IntensityImage,
    stats: &PatchStats,
    radius: usize,
    row: usize,
    a: usize,
    b: usize,
) -> f64 {
    let (ia, ib) = (image.index(a, row), image.index(b, row));
    let (ma, mb) = (stats.mean[ia], stats.mean[ib]);
    let r = radius as isize;
    let mut num = 0.0;
    for dy in -r..=r {
        let y = (row as isize + dy) as usize;
        for dx in -r..=r {
            let va = image.get((a as isize - dx) as usize, y) - ma;
            let vb = image.get((b as isize + dx) as usize, y) - mb;
            num += va * vb;
        }
    }
    num / (stats.norm[ia] * stats.norm[ib])
}

struct RowScores {
    /// `score[x][k]` for candidate `x - radius + k`; NaN where not computed.
    scores: Vec<Vec<f64>>,
    best: Vec<Option<usize>>,
}

fn score_row(
    image: &IntensityImage,
    mask: &Mask,
    stats: &PatchStats,
    cfg: &MatcherConfig,
    search: usize,
    row: usize,
) -> RowScores {
    let w = image.width();
    let radius = cfg.patch_radius;
    let eligible: Vec<bool> = (0..w)
        .map(|c| {
            let i = image.index(c, row);
            *mask.get(c, row) && stats.fits[i] && stats.norm[i] > 0.0
        })
        .collect();
    let span = 2 * search + 1;
    let mut scores = vec![vec![f64::NAN; span]; w];
    for a in 0..w {
        if !eligible[a] {
            continue;
        }
        // each unordered pair is scored once, with the left pixel as reference
        for b in a..(a + search + 1).min(w) {
            if !eligible[b] {
                continue;
            }
            let s = mirrored_zncc(image, stats, radius, row, a, b);
            scores[a][b + search - a] = s;
            scores[b][a + search - b] = s;
        }
    }
    let best = scores
        .iter()
        .map(|cands| {
            let mut arg: Option<usize> = None;
            for (k, &s) in cands.iter().enumerate() {
                if !s.is_nan() && arg.is_none_or(|j| s > cands[j]) {
                    arg = Some(k);
                }
            }
            arg
        })
        .zip(0..w)
        .map(|(k, x)| k.map(|k| x + k - search))
        .collect();
    RowScores { scores, best }
}

/// Offset of the peak of the parabola through three equally spaced samples,
/// clamped to half a pixel.
pub fn parabola_peak(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if !(denom < 0.0) {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// Dense mirrored-patch matching along the rows of a rectified image.
///
/// For every masked pixel the best mirrored match on its row is kept when
/// its ZNCC reaches `zncc_accept`, the reference patch has enough contrast,
/// and matching back from the partner lands within `lr_tolerance`.
pub fn match_scanlines(
    rectified: &IntensityImage,
    rectified_mask: &Mask,
    cfg: &MatcherConfig,
) -> Result<Flow1D> {
    cfg.validate()?;
    if !rectified.same_size(rectified_mask) {
        return Err(Error::invalid("rectified image and mask differ in size"));
    }
    let (w, h) = (rectified.width(), rectified.height());
    let search = cfg.search_radius_for(w);
    let stats = patch_stats(rectified, cfg.patch_radius);
    let min_norm = cfg.min_contrast * (stats.n as f64).sqrt();

    let rows: Vec<Vec<(usize, f64, f64)>> = (0..h)
        .into_par_iter()
        .map(|row| {
            let rs = score_row(rectified, rectified_mask, &stats, cfg, search, row);
            let mut out = Vec::new();
            for x in 0..w {
                let Some(b) = rs.best[x] else { continue };
                if stats.norm[rectified.index(x, row)] < min_norm {
                    continue;
                }
                let k = b + search - x;
                let s = rs.scores[x][k];
                if s < cfg.zncc_accept {
                    continue;
                }
                let Some(back) = rs.best[b] else { continue };
                if (back as f64 - x as f64).abs() > cfg.lr_tolerance {
                    continue;
                }
                let sample = |k: Option<usize>| k.and_then(|k| rs.scores[x].get(k).copied());
                let offset = match (sample(k.checked_sub(1)), sample(Some(k + 1))) {
                    (Some(l), Some(r)) if !l.is_nan() && !r.is_nan() => parabola_peak(l, s, r),
                    _ => 0.0,
                };
                out.push((x, b as f64 + offset - x as f64, s));
            }
            out
        })
        .collect();

    let mut flow = Flow1D::empty(w, h);
    for (row, matches) in rows.into_iter().enumerate() {
        for (x, f, s) in matches {
            flow.set(x, row, f, s);
        }
    }
    Ok(flow)
}
