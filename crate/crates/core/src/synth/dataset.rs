//! Dataset directories: one sub-directory per scene holding a manifest and
//! its grids, plus an index document at the root.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{NoiseSpec, Scene, SceneSpec};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::imaging::{
    read_correspondences, read_depth, read_intensity, read_manifest, read_mask, read_normals,
    write_correspondences, write_depth, write_intensity, write_manifest, write_mask,
    write_normals, CameraRecord, SceneFiles, SceneRecord,
};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const DATASET_INDEX: &str = "dataset.json";

/// Root document of a dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    /// Manifest paths relative to the dataset root, in scene order.
    pub scenes: Vec<String>,
    pub size: [usize; 2],
    pub seed: u64,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
}

/// Writes the scene's grids and manifest into `dir` (created if needed).
/// Returns the manifest path.
pub fn write_scene(dir: &Path, scene: &Scene, ground_truth: Option<&str>) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = SceneFiles::default();
    write_depth(dir.join(&files.depth), &scene.depth, Some(&scene.mask))?;
    write_normals(dir.join(&files.normals), &scene.normals)?;
    write_mask(dir.join(&files.mask), &scene.mask)?;
    write_intensity(dir.join(&files.intensity), &scene.intensity)?;
    write_correspondences(dir.join(&files.correspondences), &scene.correspondences)?;

    let mut extra = Map::new();
    if let Some(spec) = &scene.spec {
        extra.insert(
            "shape".into(),
            serde_json::to_value(spec).expect("scene spec serializes"),
        );
    }
    if let Some(o) = scene.origin {
        extra.insert("origin".into(), serde_json::json!([o.x, o.y, o.z]));
    }
    let record = SceneRecord {
        width: scene.width(),
        height: scene.height(),
        camera: CameraRecord::from_pose(&scene.camera),
        files,
        noise: scene.noise.clone(),
        seed: scene.seed,
        ground_truth: ground_truth.map(str::to_string),
        object_size: Some(scene.object_size),
        extra,
    };
    let path = dir.join(MANIFEST_NAME);
    write_manifest(&path, &record)?;
    Ok(path)
}

/// Loads a scene from its manifest.
pub fn read_scene(manifest: impl AsRef<Path>) -> Result<Scene> {
    let loaded = read_manifest(manifest.as_ref())?;
    let rec = &loaded.record;
    let mask = read_mask(loaded.resolve(&rec.files.mask))?;
    if mask.width() != rec.width || mask.height() != rec.height {
        return Err(Error::schema("size", "does not match the mask dimensions"));
    }
    let depth = read_depth(loaded.resolve(&rec.files.depth), Some(&mask))?;
    let normals = read_normals(loaded.resolve(&rec.files.normals))?;
    let intensity = read_intensity(loaded.resolve(&rec.files.intensity))?;
    for (name, w, h) in [
        ("files.depth", depth.width(), depth.height()),
        ("files.normals", normals.width(), normals.height()),
        ("files.intensity", intensity.width(), intensity.height()),
    ] {
        if w != rec.width || h != rec.height {
            return Err(Error::schema(name, "grid size does not match the manifest"));
        }
    }
    let correspondences = read_correspondences(loaded.resolve(&rec.files.correspondences))?;
    let spec = match rec.extra.get("shape") {
        Some(v) => Some(
            serde_json::from_value::<SceneSpec>(v.clone())
                .map_err(|e| Error::schema("shape", e.to_string()))?,
        ),
        None => None,
    };
    let origin = match rec.extra.get("origin") {
        Some(Value::Array(a)) if a.len() == 3 => {
            let v: Option<Vec<f64>> = a.iter().map(Value::as_f64).collect();
            v.map(|v| Vec3::new(v[0], v[1], v[2]))
        }
        _ => None,
    };
    let object_size = match rec.object_size {
        Some(s) => s,
        None => {
            let cam = rec.camera_pose()?;
            super::super::metrics::object_size(&depth, &mask, &cam)?
        }
    };
    Ok(Scene {
        camera: rec.camera_pose()?,
        depth,
        normals,
        mask,
        intensity,
        correspondences,
        object_size,
        seed: rec.seed,
        noise: rec.noise.clone(),
        spec,
        origin,
    })
}

pub fn write_dataset_index(root: &Path, index: &DatasetIndex) -> Result<()> {
    let path = root.join(DATASET_INDEX);
    let mut text = serde_json::to_string_pretty(index).expect("index serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Reads the index of a dataset directory and returns it with the
/// absolute manifest paths.
pub fn read_dataset(root: &Path) -> Result<(DatasetIndex, Vec<PathBuf>)> {
    let path = root.join(DATASET_INDEX);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: DatasetIndex = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.display().to_string(),
        offset: None,
        message: e.to_string(),
    })?;
    let manifests = index.scenes.iter().map(|s| root.join(s)).collect();
    Ok((index, manifests))
}
