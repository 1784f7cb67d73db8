//! Ray-cast rendering of symmetric scenes.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::shapes::{Primitive, Shape};
use super::{NoiseSpec, Scene};
use crate::error::{Error, Result};
use crate::geometry::{exp_map, reflect, CameraPose, ImageFrame, PixelCoord, Rotation, Vec3};
use crate::imaging::{Correspondence, CorrespondenceSet, Grid};
use crate::rng::{lattice_hash, substream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeFamily {
    BoxUnion,
    MirroredExtrusion,
    MirroredSuperellipsoidUnion,
}

impl ShapeFamily {
    pub const ALL: [ShapeFamily; 3] = [
        ShapeFamily::BoxUnion,
        ShapeFamily::MirroredExtrusion,
        ShapeFamily::MirroredSuperellipsoidUnion,
    ];

    /// Families whose surfaces are piecewise planar.
    pub const PLANAR: [ShapeFamily; 2] = [ShapeFamily::BoxUnion, ShapeFamily::MirroredExtrusion];
}

/// Ranges the camera is sampled from. Angles in degrees.
///
/// The view direction is given by an azimuth about the world y axis (its
/// magnitude is drawn from `azimuth_deg` and its sign at random) and an
/// elevation. The camera then looks at the object centre, is rolled about
/// its optical axis and finally jittered by a small random rotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraRanges {
    pub azimuth_deg: [f64; 2],
    pub elevation_deg: [f64; 2],
    pub roll_deg: [f64; 2],
    pub jitter_deg: f64,
    pub s: [f64; 2],
    /// Projected object radius as a fraction of the half image extent.
    pub fill: f64,
}

impl Default for CameraRanges {
    fn default() -> Self {
        CameraRanges {
            azimuth_deg: [10.0, 40.0],
            elevation_deg: [5.0, 25.0],
            roll_deg: [-10.0, 10.0],
            jitter_deg: 2.0,
            s: [0.4, 0.6],
            fill: 0.8,
        }
    }
}

/// Everything needed to regenerate a scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub family: ShapeFamily,
    pub parts: Vec<Primitive>,
    #[serde(default)]
    pub camera: CameraRanges,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Direction towards the light, world frame. Keeping `x = 0` makes the
    /// shading mirror-consistent.
    #[serde(default = "default_light")]
    pub light: [f64; 3],
    #[serde(default = "default_ambient")]
    pub ambient: f64,
    /// Albedo texture frequency in cycles per object unit.
    #[serde(default = "default_texture")]
    pub texture_frequency: f64,
}

fn default_light() -> [f64; 3] {
    [0.0, 0.5, -1.0]
}

fn default_ambient() -> f64 {
    0.3
}

fn default_texture() -> f64 {
    6.0
}

fn uniform(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

impl SceneSpec {
    /// Random object of `family` drawn from the `(seed, "shape", index)` stream.
    pub fn random(family: ShapeFamily, width: usize, height: usize, seed: u64, index: u64) -> Self {
        let mut rng = substream(seed, "shape", index);
        let mut u = |a: f64, b: f64| rng.random_range(a..b);
        let parts = match family {
            ShapeFamily::BoxUnion => {
                let mut parts = vec![Primitive::Box {
                    center: [0.0, 0.0, 0.0],
                    half_extents: [u(0.2, 0.4), u(0.2, 0.4), u(0.2, 0.4)],
                    yaw: 0.0,
                }];
                let wings = if u(0.0, 1.0) < 0.5 { 1 } else { 2 };
                for _ in 0..wings {
                    parts.push(Primitive::Box {
                        center: [u(0.25, 0.5), u(-0.3, 0.3), u(-0.25, 0.25)],
                        half_extents: [u(0.1, 0.25), u(0.08, 0.2), u(0.1, 0.25)],
                        yaw: u(-0.5, 0.5),
                    });
                }
                parts
            }
            ShapeFamily::MirroredExtrusion => {
                // right half of a convex outline; its mirror closes it
                let n = 3 + (u(0.0, 3.0) as usize);
                let mut angles: Vec<f64> = (0..n).map(|_| u(-1.3, 1.3)).collect();
                angles.sort_by(f64::total_cmp);
                let mut poly = vec![[0.0, -u(0.3, 0.5)]];
                for a in angles {
                    let r = u(0.35, 0.6);
                    poly.push([r * a.cos(), r * a.sin()]);
                }
                poly.push([0.0, u(0.3, 0.5)]);
                let poly = convex_hull(&poly);
                let depth = u(0.15, 0.35);
                let mut parts = vec![Primitive::Extrusion {
                    polygon: poly,
                    z_min: -depth,
                    z_max: depth,
                }];
                if u(0.0, 1.0) < 0.6 {
                    let (cx, cy) = (u(0.35, 0.55), u(-0.2, 0.2));
                    let r = u(0.1, 0.2);
                    let poly = (0..5)
                        .map(|k| {
                            let a = std::f64::consts::TAU * k as f64 / 5.0 + 0.3;
                            [cx + r * a.cos(), cy + r * a.sin()]
                        })
                        .collect();
                    let z0 = u(-0.3, 0.0);
                    parts.push(Primitive::Extrusion {
                        polygon: poly,
                        z_min: z0,
                        z_max: z0 + u(0.15, 0.3),
                    });
                }
                parts
            }
            ShapeFamily::MirroredSuperellipsoidUnion => {
                let mut parts = vec![Primitive::Superellipsoid {
                    center: [0.0, 0.0, 0.0],
                    radii: [u(0.25, 0.4), u(0.25, 0.4), u(0.25, 0.4)],
                    e1: u(0.5, 1.2),
                    e2: u(0.5, 1.2),
                }];
                parts.push(Primitive::Superellipsoid {
                    center: [u(0.3, 0.5), u(-0.25, 0.25), u(-0.2, 0.2)],
                    radii: [u(0.12, 0.25), u(0.1, 0.2), u(0.12, 0.25)],
                    e1: u(0.5, 1.2),
                    e2: u(0.5, 1.2),
                });
                parts
            }
        };
        SceneSpec {
            family,
            parts,
            camera: CameraRanges::default(),
            width,
            height,
            seed: crate::rng::derive_seed(seed, "scene", index),
            light: default_light(),
            ambient: default_ambient(),
            texture_frequency: default_texture(),
        }
    }

    pub fn frame(&self) -> ImageFrame {
        ImageFrame::new(self.width, self.height)
    }

    /// Object radius used for camera placement.
    pub fn object_radius(&self) -> f64 {
        self.parts
            .iter()
            .map(Primitive::bounding_radius)
            .fold(0.0, f64::max)
    }

    /// Camera and object origin for sampling attempt `attempt`.
    pub fn sample_camera(&self, attempt: u64) -> Result<(CameraPose, Vec3)> {
        let mut rng = substream(self.seed, "camera", attempt);
        let c = &self.camera;
        let deg = std::f64::consts::PI / 180.0;
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let az = sign * uniform(&mut rng, c.azimuth_deg) * deg;
        let el = uniform(&mut rng, c.elevation_deg) * deg;
        let roll = uniform(&mut rng, c.roll_deg) * deg;
        let s = uniform(&mut rng, c.s);
        if !(s > 0.0) || !(c.fill > 0.0) {
            return Err(Error::invalid("camera ranges need s > 0 and fill > 0"));
        }
        let dist = self.object_radius() / (c.fill * s);
        let v = Vec3::new(az.sin() * el.cos(), el.sin(), -az.cos() * el.cos());
        let t_x = dist * v.x;
        let origin = Vec3::new(0.0, -dist * v.y, -dist * v.z);

        let f = -v;
        let right = Vec3::new(0.0, 1.0, 0.0).cross(&f).normalize();
        let up = f.cross(&right);
        let look = nalgebra::Matrix3::from_columns(&[right, up, f]);
        let rolled = look * exp_map(&Vec3::new(0.0, 0.0, roll)).matrix();
        let jitter = if c.jitter_deg > 0.0 {
            let n = Normal::new(0.0, c.jitter_deg * deg).expect("finite sigma");
            Vec3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng))
        } else {
            Vec3::zeros()
        };
        let r = exp_map(&jitter).matrix() * rolled;
        let rotation = Rotation::from_matrix(r, 1e-9)?;
        Ok((CameraPose::new(rotation, t_x, s)?, origin))
    }
}

fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<[f64; 2]> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 1e-12
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// A placed shape seen by a camera: answers per-ray questions at
/// fractional pixel positions.
#[derive(Clone, Debug)]
pub struct SceneView {
    pub shape: Shape,
    pub camera: CameraPose,
    pub frame: ImageFrame,
}

/// Surface sample along one pixel ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RaySample {
    pub z: f64,
    pub point: Vec3,
    pub normal_world: Vec3,
}

impl SceneView {
    pub fn new(spec: &SceneSpec, camera: CameraPose, origin: Vec3) -> Result<Self> {
        Ok(SceneView {
            shape: Shape::new(&spec.parts, origin)?,
            camera,
            frame: spec.frame(),
        })
    }

    pub fn cast(&self, p: PixelCoord) -> Option<RaySample> {
        let a = self.frame.normalize(p).ray(self.camera.s);
        let len = a.norm();
        let dir = self.camera.rotation.apply(&a) / len;
        let hit = self.shape.intersect(&self.camera.center(), &dir)?;
        Some(RaySample {
            z: hit.t / len,
            point: hit.point,
            normal_world: hit.normal,
        })
    }

    /// Mirror counterpart of the surface point seen at `p`, if it is
    /// visible: the reflected point must be the first hit along its own
    /// ray to within `tol` (world units).
    pub fn mirror_of(&self, p: PixelCoord, tol: f64) -> Option<PixelCoord> {
        let x = self.cast(p)?;
        self.mirror_of_point(&x.point, tol)
    }

    pub fn mirror_of_point(&self, x: &Vec3, tol: f64) -> Option<PixelCoord> {
        let y = reflect(x);
        let (n, z) = self.camera.project(&y)?;
        let q = self.frame.denormalize(n);
        if !q.in_bounds(self.frame.width, self.frame.height) {
            return None;
        }
        let seen = self.cast(q)?;
        let gap = (seen.z - z).abs() * n.ray(self.camera.s).norm();
        (gap <= tol.min(0.005 * z)).then_some(q)
    }
}

/// Procedural albedo in `[0.15, 1]`, symmetric in `x`.
pub fn albedo(local: &Vec3, frequency: f64, seed: u64) -> f64 {
    let p = Vec3::new(local.x.abs(), local.y, local.z) * frequency;
    let v = 0.65 * value_noise(&p, seed) + 0.35 * value_noise(&(p * 2.3), seed ^ 0x9e37);
    0.15 + 0.85 * v
}

fn value_noise(p: &Vec3, seed: u64) -> f64 {
    let base = p.map(f64::floor);
    let f = p - base;
    let s = f.map(|t| t * t * (3.0 - 2.0 * t));
    let (i, j, k) = (base.x as i64, base.y as i64, base.z as i64);
    let mut acc = 0.0;
    for dk in 0..2 {
        for dj in 0..2 {
            for di in 0..2 {
                let w = (if di == 1 { s.x } else { 1.0 - s.x })
                    * (if dj == 1 { s.y } else { 1.0 - s.y })
                    * (if dk == 1 { s.z } else { 1.0 - s.z });
                acc += w * lattice_hash(seed, i + di, j + dj, k + dk);
            }
        }
    }
    acc
}

/// Ray-casts `spec` from `cam`, with the object centred at `origin`.
pub fn render(spec: &SceneSpec, cam: &CameraPose, origin: Vec3) -> Result<Scene> {
    let view = SceneView::new(spec, *cam, origin)?;
    let (w, h) = (spec.width, spec.height);
    let light = Vec3::from(spec.light);
    let light = if light.norm() > 0.0 {
        light.normalize()
    } else {
        Vec3::zeros()
    };
    let rows: Vec<Vec<Option<RaySample>>> = (0..h)
        .into_par_iter()
        .map(|row| {
            (0..w)
                .map(|col| view.cast(PixelCoord::new(col as f64, row as f64)))
                .collect()
        })
        .collect();

    let mut depth = Grid::filled(w, h, 0.0);
    let mut normals = Grid::filled(w, h, Vec3::zeros());
    let mut mask = Grid::filled(w, h, false);
    let mut intensity = Grid::filled(w, h, 0.0);
    let rt = cam.rotation.transpose();
    let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
    for (row, samples) in rows.iter().enumerate() {
        for (col, s) in samples.iter().enumerate() {
            let Some(s) = s else { continue };
            mask.set(col, row, true);
            depth.set(col, row, s.z);
            normals.set(col, row, rt.apply(&s.normal_world));
            let shade = spec.ambient + (1.0 - spec.ambient) * s.normal_world.dot(&light).max(0.0);
            let a = albedo(&(s.point - origin), spec.texture_frequency, spec.seed);
            intensity.set(col, row, (a * shade).clamp(0.0, 1.0));
            lo = lo.inf(&s.point);
            hi = hi.sup(&s.point);
        }
    }
    if mask.is_empty_mask() {
        return Err(Error::Generation(
            "camera does not see the object; resample the camera".into(),
        ));
    }
    let object_size = (hi - lo).norm();

    let tol = 0.005 * object_size;
    let mut correspondences = CorrespondenceSet::new();
    for (row, samples) in rows.iter().enumerate() {
        for (col, s) in samples.iter().enumerate() {
            let Some(s) = s else { continue };
            if let Some(q) = view.mirror_of_point(&s.point, tol) {
                correspondences.push(Correspondence::new(
                    PixelCoord::new(col as f64, row as f64),
                    q,
                ));
            }
        }
    }

    Ok(Scene {
        camera: *cam,
        depth,
        normals,
        mask,
        intensity,
        correspondences,
        object_size,
        seed: spec.seed,
        noise: None::<NoiseSpec>,
        spec: Some(spec.clone()),
        origin: Some(origin),
    })
}

/// Samples a camera (retrying up to 16 times) and renders the scene. A
/// scene is accepted when at least 5% of the image is covered.
pub fn generate(spec: &SceneSpec) -> Result<Scene> {
    let min_pixels = (spec.width * spec.height) / 20;
    let mut last = None;
    for attempt in 0..16 {
        let (cam, origin) = spec.sample_camera(attempt)?;
        match render(spec, &cam, origin) {
            Ok(scene) if scene.mask.count() >= min_pixels.max(1) => return Ok(scene),
            Ok(_) => last = Some(Error::Generation("object covers too few pixels".into())),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::Generation("no camera attempts".into())))
}
