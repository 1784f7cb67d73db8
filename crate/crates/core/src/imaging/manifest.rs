//! Per-scene manifest documents (JSON).
//!
//! ```json
//! {
//!   "camera": { "quaternion": [1, 0, 0, 0], "s": 0.4, "t_x": 0.0 },
//!   "files": { "correspondences": "corr.txt", "depth": "depth.pfm",
//!              "intensity": "intensity.pfm", "mask": "mask.pgm",
//!              "normals": "normals.pfm" },
//!   "noise": null,
//!   "seed": 7,
//!   "size": [128, 128]
//! }
//! ```
//!
//! Optional keys: `ground_truth` (path of the clean scene's manifest) and
//! `object_size`. Unknown top-level keys are kept and written back. File
//! paths are relative to the manifest's directory.

use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::geometry::{CameraPose, Quaternion};
use crate::synth::NoiseSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct CameraRecord {
    pub quaternion: Quaternion,
    pub t_x: f64,
    pub s: f64,
}

impl CameraRecord {
    pub fn from_pose(cam: &CameraPose) -> Self {
        CameraRecord {
            quaternion: cam.quaternion(),
            t_x: cam.t_x,
            s: cam.s,
        }
    }

    pub fn pose(&self) -> Result<CameraPose> {
        CameraPose::from_quaternion(&self.quaternion, self.t_x, self.s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneFiles {
    pub depth: String,
    pub normals: String,
    pub mask: String,
    pub intensity: String,
    pub correspondences: String,
}

impl Default for SceneFiles {
    fn default() -> Self {
        SceneFiles {
            depth: "depth.pfm".into(),
            normals: "normals.pfm".into(),
            mask: "mask.pgm".into(),
            intensity: "intensity.pfm".into(),
            correspondences: "corr.txt".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneRecord {
    pub width: usize,
    pub height: usize,
    pub camera: CameraRecord,
    pub files: SceneFiles,
    pub noise: Option<NoiseSpec>,
    pub seed: u64,
    pub ground_truth: Option<String>,
    pub object_size: Option<f64>,
    /// Top-level keys this version does not interpret.
    pub extra: Map<String, Value>,
}

const KNOWN: [&str; 7] = [
    "size",
    "camera",
    "files",
    "noise",
    "seed",
    "ground_truth",
    "object_size",
];

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::schema(path, "missing required field"))
}

fn as_f64(v: &Value, path: &str) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::schema(path, "expected a finite number"))
}

fn as_str(v: &Value, path: &str) -> Result<String> {
    v.as_str()
        .map(str::to_string)
        .ok_or_else(|| Error::schema(path, "expected a string"))
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| Error::schema(path, "expected an object"))
}

impl SceneRecord {
    pub fn from_value(v: &Value) -> Result<Self> {
        let root = as_object(v, "$")?;
        let size = field(root, "size", "size")?
            .as_array()
            .filter(|a| a.len() == 2)
            .ok_or_else(|| Error::schema("size", "expected [width, height]"))?;
        let dim = |v: &Value, p: &str| {
            v.as_u64()
                .filter(|&d| d > 0)
                .map(|d| d as usize)
                .ok_or_else(|| Error::schema(p, "expected a positive integer"))
        };
        let width = dim(&size[0], "size[0]")?;
        let height = dim(&size[1], "size[1]")?;

        let cam = as_object(field(root, "camera", "camera")?, "camera")?;
        let q = field(cam, "quaternion", "camera.quaternion")?
            .as_array()
            .filter(|a| a.len() == 4)
            .ok_or_else(|| Error::schema("camera.quaternion", "expected [w, x, y, z]"))?;
        let mut qa = [0.0; 4];
        for (i, c) in q.iter().enumerate() {
            qa[i] = as_f64(c, &format!("camera.quaternion[{i}]"))?;
        }
        let t_x = as_f64(field(cam, "t_x", "camera.t_x")?, "camera.t_x")?;
        let s = as_f64(field(cam, "s", "camera.s")?, "camera.s")?;
        if s <= 0.0 {
            return Err(Error::schema("camera.s", "must be positive"));
        }
        let quaternion = Quaternion::from_array(qa);
        if quaternion.norm() == 0.0 {
            return Err(Error::schema("camera.quaternion", "zero quaternion"));
        }

        let files = as_object(field(root, "files", "files")?, "files")?;
        let file = |k: &str| -> Result<String> {
            let p = format!("files.{k}");
            as_str(field(files, k, &p)?, &p)
        };
        let files = SceneFiles {
            depth: file("depth")?,
            normals: file("normals")?,
            mask: file("mask")?,
            intensity: file("intensity")?,
            correspondences: file("correspondences")?,
        };

        let noise = match root.get("noise") {
            None | Some(Value::Null) => None,
            Some(v) => Some(
                serde_json::from_value(v.clone())
                    .map_err(|e| Error::schema("noise", e.to_string()))?,
            ),
        };
        let seed = field(root, "seed", "seed")?
            .as_u64()
            .ok_or_else(|| Error::schema("seed", "expected a non-negative integer"))?;
        let ground_truth = match root.get("ground_truth") {
            None | Some(Value::Null) => None,
            Some(v) => Some(as_str(v, "ground_truth")?),
        };
        let object_size = match root.get("object_size") {
            None | Some(Value::Null) => None,
            Some(v) => Some(as_f64(v, "object_size")?),
        };
        let extra = root
            .iter()
            .filter(|(k, _)| !KNOWN.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();

        Ok(SceneRecord {
            width,
            height,
            camera: CameraRecord {
                quaternion,
                t_x,
                s,
            },
            files,
            noise,
            seed,
            ground_truth,
            object_size,
            extra,
        })
    }

    pub fn to_value(&self) -> Value {
        let mut root = self.extra.clone();
        root.insert("size".into(), json!([self.width, self.height]));
        root.insert(
            "camera".into(),
            json!({
                "quaternion": self.camera.quaternion.to_array(),
                "t_x": self.camera.t_x,
                "s": self.camera.s,
            }),
        );
        root.insert(
            "files".into(),
            json!({
                "depth": self.files.depth,
                "normals": self.files.normals,
                "mask": self.files.mask,
                "intensity": self.files.intensity,
                "correspondences": self.files.correspondences,
            }),
        );
        root.insert(
            "noise".into(),
            match &self.noise {
                Some(n) => serde_json::to_value(n).expect("noise spec serializes"),
                None => Value::Null,
            },
        );
        root.insert("seed".into(), json!(self.seed));
        if let Some(g) = &self.ground_truth {
            root.insert("ground_truth".into(), json!(g));
        }
        if let Some(o) = self.object_size {
            root.insert("object_size".into(), json!(o));
        }
        Value::Object(root)
    }

    /// Canonical text form: pretty JSON with sorted keys and a trailing newline.
    pub fn to_canonical_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_value()).expect("value serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Format {
            path: "manifest".into(),
            offset: None,
            message: e.to_string(),
        })?;
        Self::from_value(&v)
    }

    pub fn camera_pose(&self) -> Result<CameraPose> {
        self.camera.pose()
    }
}

/// A manifest together with the directory its relative paths refer to.
#[derive(Clone, Debug)]
pub struct LoadedManifest {
    pub record: SceneRecord,
    pub dir: PathBuf,
}

impl LoadedManifest {
    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<LoadedManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let record = SceneRecord::parse(&text).map_err(|e| match e {
        Error::Format { message, .. } => Error::Format {
            path: path.display().to_string(),
            offset: None,
            message,
        },
        other => other,
    })?;
    let dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(LoadedManifest { record, dir })
}

pub fn write_manifest(path: impl AsRef<Path>, record: &SceneRecord) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, record.to_canonical_string()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "size": [4, 3],
        "camera": {"quaternion": [1, 0, 0, 0], "t_x": 0.0, "s": 1.0},
        "files": {"depth": "d.pfm", "normals": "n.pfm", "mask": "m.pgm",
                  "intensity": "i.pfm", "correspondences": "c.txt"},
        "seed": 3
    }"#;

    #[test]
    fn minimal_manifest_has_identity_camera() {
        let r = SceneRecord::parse(MINIMAL).unwrap();
        assert_eq!((r.width, r.height, r.seed), (4, 3, 3));
        let cam = r.camera_pose().unwrap();
        assert_eq!(cam.rotation.orthonormality_error(), 0.0);
        assert_eq!(*cam.rotation.matrix(), nalgebra::Matrix3::identity());
        assert!(r.noise.is_none());
    }

    #[test]
    fn missing_scale_names_the_field() {
        let text = MINIMAL.replace(r#", "s": 1.0"#, "");
        match SceneRecord::parse(&text) {
            Err(Error::Schema { field, .. }) => assert_eq!(field, "camera.s"),
            other => panic!("unexpected {other:?}"),
        }
        let text = MINIMAL.replace(r#""mask": "m.pgm","#, "");
        match SceneRecord::parse(&text) {
            Err(Error::Schema { field, .. }) => assert_eq!(field, "files.mask"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_survive_and_form_is_canonical() {
        let text = MINIMAL.replace(r#""seed": 3"#, r#""seed": 3, "comment": {"by": "hand"}"#);
        let r = SceneRecord::parse(&text).unwrap();
        let canonical = r.to_canonical_string();
        assert!(canonical.contains("\"comment\""));
        let again = SceneRecord::parse(&canonical).unwrap();
        assert_eq!(again, r);
        assert_eq!(again.to_canonical_string(), canonical);
    }

    #[test]
    fn noise_spec_round_trips() {
        let mut r = SceneRecord::parse(MINIMAL).unwrap();
        r.noise = Some(NoiseSpec::default());
        r.ground_truth = Some("../clean/manifest.json".into());
        r.object_size = Some(1.75);
        let again = SceneRecord::parse(&r.to_canonical_string()).unwrap();
        assert_eq!(again, r);
    }
}
