//! Per-pixel grids and the on-disk formats shared by every pipeline stage.

mod correspondences;
mod grid;
mod manifest;
mod pfm;
mod pgm;

pub use correspondences::{
    format_correspondences, parse_correspondences, read_correspondences, write_correspondences,
    Correspondence, CorrespondenceSet,
};
pub use grid::{
    bilinear, masked_stats, DepthMap, Flow1D, Grid, IntensityImage, Mask, MaskedStats, NormalMap,
    Stencil,
};
pub use manifest::{
    read_manifest, write_manifest, CameraRecord, LoadedManifest, SceneFiles, SceneRecord,
};
pub use pfm::{
    decode_pfm, encode_pfm, read_depth, read_intensity, read_normals, read_pfm, read_scalar,
    write_depth, write_intensity, write_normals, write_pfm, write_scalar, PfmImage,
};
pub use pgm::{decode_mask, encode_mask, read_mask, write_mask};
