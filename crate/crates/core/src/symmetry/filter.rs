//! Cycle-consistency filtering and spatial thinning of correspondences.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PixelCoord;
use crate::imaging::{Correspondence, CorrespondenceSet};

/// Search radius for "the pair whose source is b".
pub const CHAIN_LOOKUP_RADIUS: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Maximum distance between `a` and the end of the chain `a -> b -> c`.
    pub cycle_threshold: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            cycle_threshold: 7.0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cycle_threshold > 0.0) || !self.cycle_threshold.is_finite() {
            return Err(Error::schema("filter.cycle_threshold", "must be positive"));
        }
        Ok(())
    }
}

/// Spatial hash over pair sources with unit cells.
pub struct SourceIndex<'a> {
    pairs: &'a [Correspondence],
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> SourceIndex<'a> {
    pub fn new(pairs: &'a [Correspondence]) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, c) in pairs.iter().enumerate() {
            cells.entry(cell(c.p)).or_default().push(i);
        }
        SourceIndex { pairs, cells }
    }

    /// Index of the pair whose source is nearest to `at`, within
    /// [`CHAIN_LOOKUP_RADIUS`]. Ties go to the earlier pair.
    pub fn nearest(&self, at: PixelCoord) -> Option<usize> {
        let (cx, cy) = cell(at);
        let mut best: Option<(f64, usize)> = None;
        for dy in -1..=1 {
            for dx in -1..=1 {
                let Some(ids) = self.cells.get(&(cx + dx, cy + dy)) else {
                    continue;
                };
                for &i in ids {
                    let d = self.pairs[i].p.distance(&at);
                    if d > CHAIN_LOOKUP_RADIUS {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bd, bi)) => d < bd || (d == bd && i < bi),
                    };
                    if better {
                        best = Some((d, i));
                    }
                }
            }
        }
        best.map(|(_, i)| i)
    }
}

fn cell(p: PixelCoord) -> (i64, i64) {
    (p.col.floor() as i64, p.row.floor() as i64)
}

/// Closing error `|a - c|` of the chain `a -> b -> c` for every pair, or
/// `None` when `b` has no outgoing pair.
pub fn cycle_errors(pairs: &CorrespondenceSet) -> Vec<Option<f64>> {
    let index = SourceIndex::new(pairs.as_slice());
    pairs
        .iter()
        .map(|ab| index.nearest(ab.q).map(|j| ab.p.distance(&pairs.as_slice()[j].q)))
        .collect()
}

/// Keeps a pair `(a, b)` when the pair leaving `b` returns within
/// `cycle_threshold` pixels of `a`. Pairs without a chain are dropped.
pub fn consistency_filter(pairs: &CorrespondenceSet, cfg: &FilterConfig) -> Result<CorrespondenceSet> {
    cfg.validate()?;
    Ok(pairs
        .iter()
        .zip(cycle_errors(pairs))
        .filter(|(_, e)| e.is_some_and(|e| e <= cfg.cycle_threshold))
        .map(|(c, _)| *c)
        .collect())
}

/// Keeps at most one pair per 2x2 block of source pixels, the one with the
/// highest score (the earliest on ties or without scores). Input order is
/// preserved among the survivors.
pub fn subsample_blocks(pairs: &CorrespondenceSet) -> CorrespondenceSet {
    let mut winner: HashMap<(i64, i64), usize> = HashMap::new();
    let score = |c: &Correspondence| c.score.unwrap_or(f64::NEG_INFINITY);
    for (i, c) in pairs.iter().enumerate() {
        let key = (
            (c.p.col / 2.0).floor() as i64,
            (c.p.row / 2.0).floor() as i64,
        );
        winner
            .entry(key)
            .and_modify(|w| {
                if score(c) > score(&pairs.as_slice()[*w]) {
                    *w = i;
                }
            })
            .or_insert(i);
    }
    let mut keep: Vec<usize> = winner.into_values().collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| pairs.as_slice()[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(a: (f64, f64), b: (f64, f64)) -> Correspondence {
        Correspondence::new(PixelCoord::new(a.0, a.1), PixelCoord::new(b.0, b.1))
    }

    #[test]
    fn two_pair_chain_keeps_the_closing_pair() {
        let set: CorrespondenceSet =
            [pair((10.0, 5.0), (100.0, 5.0)), pair((100.0, 5.0), (12.0, 5.0))].into_iter().collect();
        let out = consistency_filter(&set, &FilterConfig::default()).unwrap();
        // the second pair has no chain: (12, 5) is not a source
        assert_eq!(out.as_slice(), &[set.as_slice()[0]]);
    }

    #[test]
    fn long_cycles_and_dangling_targets_are_dropped() {
        let set: CorrespondenceSet =
            [pair((10.0, 5.0), (100.0, 5.0)), pair((100.0, 5.0), (30.0, 5.0))].into_iter().collect();
        assert!(consistency_filter(&set, &FilterConfig::default()).unwrap().is_empty());
        let lone: CorrespondenceSet = [pair((1.0, 1.0), (50.0, 1.0))].into_iter().collect();
        assert!(consistency_filter(&lone, &FilterConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn chain_lookup_uses_the_nearest_source_within_one_pixel() {
        let set: CorrespondenceSet = [
            pair((10.0, 5.0), (100.0, 5.0)),
            pair((100.9, 5.0), (40.0, 5.0)),
            pair((100.3, 5.2), (11.0, 5.0)),
            pair((99.0, 3.0), (10.0, 5.0)),
        ]
        .into_iter()
        .collect();
        let errs = cycle_errors(&set);
        assert_eq!(errs[0], Some(1.0));
        let far: CorrespondenceSet =
            [pair((10.0, 5.0), (100.0, 5.0)), pair((101.2, 5.0), (10.0, 5.0))].into_iter().collect();
        assert_eq!(cycle_errors(&far)[0], None);
    }

    #[test]
    fn subsampling_keeps_the_strongest_pair_per_block() {
        let set: CorrespondenceSet = [
            pair((0.0, 0.0), (9.0, 0.0)).with_score(0.8),
            pair((1.0, 1.0), (8.0, 1.0)).with_score(0.95),
            pair((2.0, 0.0), (7.0, 0.0)).with_score(0.5),
            pair((1.5, 0.5), (6.0, 0.0)).with_score(0.95),
        ]
        .into_iter()
        .collect();
        let out = subsample_blocks(&set);
        assert_eq!(out.as_slice(), &[set.as_slice()[1], set.as_slice()[2]]);
    }

    #[test]
    fn invalid_threshold() {
        assert!(FilterConfig { cycle_threshold: 0.0 }.validate().is_err());
        assert!(FilterConfig { cycle_threshold: f64::NAN }.validate().is_err());
    }

    fn arb_pairs() -> impl Strategy<Value = CorrespondenceSet> {
        prop::collection::vec((0.0..60.0f64, 0.0..20.0f64, 0.0..60.0f64, 0.0..20.0f64), 0..80)
            .prop_map(|v| v.into_iter().map(|(a, b, c, d)| pair((a, b), (c, d))).collect())
    }

    proptest! {
        #[test]
        fn output_is_an_ordered_subset(set in arb_pairs(), t in 0.5..20.0f64) {
            let out = consistency_filter(&set, &FilterConfig { cycle_threshold: t }).unwrap();
            let mut it = set.iter();
            for c in &out {
                prop_assert!(it.any(|d| d == c));
            }
        }

        #[test]
        fn exact_mirror_sets_pass_untouched(cols in prop::collection::vec((0u32..30, 0u32..20), 1..40)) {
            // integer pixels mirrored about column 40: every chain closes exactly
            let mut set = CorrespondenceSet::new();
            for &(c, r) in &cols {
                let p = PixelCoord::new(c as f64, r as f64);
                let q = PixelCoord::new(80.0 - c as f64, r as f64);
                set.push(Correspondence::new(p, q));
                set.push(Correspondence::new(q, p));
            }
            let out = consistency_filter(&set, &FilterConfig::default()).unwrap();
            prop_assert_eq!(out.len(), set.len());
        }

        #[test]
        fn subsampling_leaves_one_pair_per_block(set in arb_pairs()) {
            let out = subsample_blocks(&set);
            let mut seen = std::collections::HashSet::new();
            for c in &out {
                prop_assert!(seen.insert(((c.p.col / 2.0).floor() as i64, (c.p.row / 2.0).floor() as i64)));
            }
        }
    }
}
