//! Refinement of single-view depth maps of mirror-symmetric objects.
//!
//! The crate rectifies an image so that symmetric pixel pairs share a
//! scanline, matches and filters those pairs, and then jointly refines
//! per-pixel depth and the camera with a robust reweighted Gauss-Newton
//! solver. A ray-casting scene generator with configurable noise provides
//! ground truth for every stage.

pub mod error;
pub mod geometry;
pub mod imaging;
pub mod metrics;
pub mod pipeline;
pub mod rectify;
pub mod rng;
pub mod solver;
pub mod symmetry;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{
    back_project, exp_map, quat_to_rotation, ray_depth, reflect, CameraPose, ImageFrame,
    NormalizedCoord, PixelCoord, Quaternion, Rotation, Vec3,
};
pub use imaging::{
    Correspondence, CorrespondenceSet, DepthMap, Flow1D, Grid, IntensityImage, Mask, NormalMap,
    SceneRecord,
};
pub use metrics::{DepthReport, NormalReport, PoseReport, SymReport};
pub use rectify::{build_transform, vanishing_points, RectifyTransform};
pub use solver::{refine, RefineReport, SolverConfig, Tradeoffs};
pub use symmetry::{consistency_filter, match_scanlines, FilterConfig, MatcherConfig};
pub use synth::{corrupt, render, NoiseSpec, Scene, SceneSpec};
