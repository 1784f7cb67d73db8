//! Synthetic ground truth: mirror-symmetric solids, ray-cast scenes,
//! noise models and dataset directories.

mod dataset;
mod noise;
mod render;
mod shapes;
mod standard;

pub use dataset::{
    read_dataset, read_scene, write_dataset_index, write_scene, DatasetIndex, DATASET_INDEX,
    MANIFEST_NAME,
};
pub use noise::{corrupt, corrupt_correspondences, corrupt_pose, inject_outliers, NoiseSpec};
pub use render::{
    albedo, generate, render, CameraRanges, RaySample, SceneSpec, SceneView, ShapeFamily,
};
pub use shapes::{Hit, Primitive, Shape};
pub use standard::{generate_scenes, GeneratorSpec};

use crate::geometry::{CameraPose, Vec3};
use crate::imaging::{CorrespondenceSet, DepthMap, IntensityImage, Mask, NormalMap};

/// One view of an object: the grids every pipeline stage consumes.
#[derive(Clone, Debug)]
pub struct Scene {
    pub camera: CameraPose,
    pub depth: DepthMap,
    /// Camera frame.
    pub normals: NormalMap,
    pub mask: Mask,
    pub intensity: IntensityImage,
    pub correspondences: CorrespondenceSet,
    /// Bounding-box diagonal of the visible surface.
    pub object_size: f64,
    pub seed: u64,
    /// Set on degraded scenes.
    pub noise: Option<NoiseSpec>,
    /// Generator input, when the scene came from [`generate`].
    pub spec: Option<SceneSpec>,
    /// Object placement used with `spec`.
    pub origin: Option<Vec3>,
}

impl Scene {
    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }

    /// Rebuilds the ray caster, if the generator input is known.
    pub fn view(&self) -> Option<SceneView> {
        let spec = self.spec.as_ref()?;
        SceneView::new(spec, self.camera, self.origin?).ok()
    }
}
