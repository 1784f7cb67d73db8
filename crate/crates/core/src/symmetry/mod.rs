//! Symmetric correspondences: a mirrored-patch scanline matcher for
//! rectified images and the cycle-consistency filter.

mod filter;
mod matcher;

pub use filter::{
    consistency_filter, cycle_errors, subsample_blocks, FilterConfig, SourceIndex,
    CHAIN_LOOKUP_RADIUS,
};
pub use matcher::{match_scanlines, parabola_peak, MatcherConfig};
