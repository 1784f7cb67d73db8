//! Noise models standing in for learned predictions.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Scene;
use crate::error::{Error, Result};
use crate::geometry::{exp_map, CameraPose, ImageFrame, PixelCoord, Vec3};
use crate::imaging::{Correspondence, CorrespondenceSet, Mask};
use crate::rng::substream;

/// Degradation applied by [`corrupt`].
///
/// Depth is perturbed multiplicatively, `z' = z exp(e + b(u))`, with `e`
/// i.i.d. per pixel and `b` a low-frequency field made of a per-scene
/// log-scale offset plus a smooth spatial variation, each with standard
/// deviation `depth_lowfreq_amp`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub depth_log_sigma: f64,
    pub depth_lowfreq_amp: f64,
    /// Degrees, per tangent axis.
    pub normal_angle_sigma: f64,
    /// Pixels, RMS of the 2D displacement.
    pub corr_jitter_sigma: f64,
    pub corr_outlier_frac: f64,
    /// Degrees, per axis.
    pub pose_rot_sigma: f64,
    pub pose_tx_sigma: f64,
    pub pose_s_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            depth_log_sigma: 0.2,
            depth_lowfreq_amp: 0.1,
            normal_angle_sigma: 10.0,
            corr_jitter_sigma: 2.0,
            corr_outlier_frac: 0.1,
            pose_rot_sigma: 2.0,
            pose_tx_sigma: 0.05,
            pose_s_sigma: 0.02,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    /// All magnitudes zero.
    pub fn zero() -> Self {
        NoiseSpec {
            depth_log_sigma: 0.0,
            depth_lowfreq_amp: 0.0,
            normal_angle_sigma: 0.0,
            corr_jitter_sigma: 0.0,
            corr_outlier_frac: 0.0,
            pose_rot_sigma: 0.0,
            pose_tx_sigma: 0.0,
            pose_s_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            ("depth_log_sigma", self.depth_log_sigma),
            ("depth_lowfreq_amp", self.depth_lowfreq_amp),
            ("normal_angle_sigma", self.normal_angle_sigma),
            ("corr_jitter_sigma", self.corr_jitter_sigma),
            ("pose_rot_sigma", self.pose_rot_sigma),
            ("pose_tx_sigma", self.pose_tx_sigma),
            ("pose_s_sigma", self.pose_s_sigma),
        ];
        for (name, v) in sigmas {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::schema(format!("noise.{name}"), "must be finite and >= 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.corr_outlier_frac) {
            return Err(Error::schema("noise.corr_outlier_frac", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("validated sigma")
}

/// Smooth zero-mean field with unit marginal variance, on normalized
/// image coordinates.
struct SmoothField {
    waves: Vec<(f64, f64, f64)>,
}

impl SmoothField {
    const WAVES: usize = 4;

    fn new(rng: &mut impl Rng) -> Self {
        let waves = (0..Self::WAVES)
            .map(|_| {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let freq = rng.random_range(0.3..1.0);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                (freq * angle.cos(), freq * angle.sin(), phase)
            })
            .collect();
        SmoothField { waves }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let k = (2.0 / Self::WAVES as f64).sqrt();
        self.waves
            .iter()
            .map(|(fx, fy, ph)| k * (std::f64::consts::TAU * (fx * x + fy * y) + ph).cos())
            .sum()
    }
}

/// Orthonormal pair spanning the plane perpendicular to `n`.
fn tangent_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        Vec3::new(0.0, 1.0, 0.0)
    };
    let t1 = n.cross(&helper).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

/// Random in-mask position: a uniformly chosen masked pixel plus a
/// uniform sub-pixel offset.
pub fn random_in_mask(mask: &Mask, pixels: &[(usize, usize)], rng: &mut impl Rng) -> PixelCoord {
    let (c, r) = pixels[rng.random_range(0..pixels.len())];
    let mut p = PixelCoord::new(
        c as f64 + rng.random_range(-0.5..0.5),
        r as f64 + rng.random_range(-0.5..0.5),
    );
    if !p.in_bounds(mask.width(), mask.height()) {
        p = PixelCoord::new(c as f64, r as f64);
    }
    p
}

/// Jitters every target by an isotropic Gaussian with RMS length
/// `jitter_rms` and replaces a `outlier_frac` share of targets by random
/// in-mask positions. Pairs leaving the image are dropped.
pub fn corrupt_correspondences(
    pairs: &CorrespondenceSet,
    mask: &Mask,
    jitter_rms: f64,
    outlier_frac: f64,
    rng: &mut impl Rng,
) -> CorrespondenceSet {
    let pixels: Vec<(usize, usize)> = mask.pixels().collect();
    let axis = normal(jitter_rms / std::f64::consts::SQRT_2);
    let mut out = CorrespondenceSet::new();
    for c in pairs {
        let jx = axis.sample(rng);
        let jy = axis.sample(rng);
        let outlier = rng.random::<f64>() < outlier_frac;
        let q = if outlier && !pixels.is_empty() {
            random_in_mask(mask, &pixels, rng)
        } else {
            PixelCoord::new(c.q.col + jx, c.q.row + jy)
        };
        if q.in_bounds(mask.width(), mask.height()) {
            out.push(Correspondence { p: c.p, q, score: c.score });
        }
    }
    out
}

/// Perturbs the camera: rotation by `exp(w) R` with per-axis Gaussian `w`,
/// additive Gaussian noise on `t_x` and `s` (`s` kept above 1e-3).
pub fn corrupt_pose(cam: &CameraPose, noise: &NoiseSpec, rng: &mut impl Rng) -> CameraPose {
    let rot = normal(noise.pose_rot_sigma.to_radians());
    let w = Vec3::new(rot.sample(rng), rot.sample(rng), rot.sample(rng));
    let dt = normal(noise.pose_tx_sigma).sample(rng);
    let ds = normal(noise.pose_s_sigma).sample(rng);
    CameraPose {
        rotation: exp_map(&w).compose(&cam.rotation),
        t_x: cam.t_x + dt,
        s: (cam.s + ds).max(1e-3),
    }
}

/// Degraded copy of a clean scene. Intensity and mask are left untouched.
/// Draws come from named substreams of `noise.seed` and the scene seed.
pub fn corrupt(clean: &Scene, noise: &NoiseSpec) -> Result<Scene> {
    noise.validate()?;
    let key = noise.seed ^ clean.seed.rotate_left(17);
    let frame = ImageFrame::new(clean.depth.width(), clean.depth.height());

    let mut rng = substream(key, "depth", 0);
    let eps = normal(noise.depth_log_sigma);
    let amp = noise.depth_lowfreq_amp;
    let offset = normal(1.0).sample(&mut rng);
    let field = SmoothField::new(&mut rng);
    let mut depth = clean.depth.clone();
    for (c, r) in clean.mask.pixels() {
        let n = frame.normalize(PixelCoord::new(c as f64, r as f64));
        let b = amp * (offset + field.at(n.x, n.y));
        let e = eps.sample(&mut rng);
        let z = depth.get_mut(c, r);
        *z *= (e + b).exp();
    }

    let mut rng = substream(key, "normals", 0);
    let ang = normal(noise.normal_angle_sigma.to_radians());
    let mut normals = clean.normals.clone();
    for (c, r) in clean.mask.pixels() {
        let n = *normals.get(c, r);
        let (t1, t2) = tangent_basis(&n);
        let w = t1 * ang.sample(&mut rng) + t2 * ang.sample(&mut rng);
        let rotated = exp_map(&w).apply(&n);
        normals.set(c, r, rotated);
    }

    let mut rng = substream(key, "correspondences", 0);
    let correspondences = corrupt_correspondences(
        &clean.correspondences,
        &clean.mask,
        noise.corr_jitter_sigma,
        noise.corr_outlier_frac,
        &mut rng,
    );

    let mut rng = substream(key, "pose", 0);
    let camera = corrupt_pose(&clean.camera, noise, &mut rng);

    Ok(Scene {
        camera,
        depth,
        normals,
        mask: clean.mask.clone(),
        intensity: clean.intensity.clone(),
        correspondences,
        object_size: clean.object_size,
        seed: clean.seed,
        noise: Some(noise.clone()),
        spec: clean.spec.clone(),
        origin: clean.origin,
    })
}

/// Appends `frac * len` pairs with integer in-mask sources and uniformly
/// random in-mask targets. Returns the number appended; the new pairs are
/// at the end of the set.
pub fn inject_outliers(
    pairs: &mut CorrespondenceSet,
    mask: &Mask,
    frac: f64,
    rng: &mut impl Rng,
) -> usize {
    let pixels: Vec<(usize, usize)> = mask.pixels().collect();
    if pixels.is_empty() {
        return 0;
    }
    let target = (frac * pairs.len() as f64).round() as usize;
    let mut added = 0;
    while added < target {
        let (c, r) = pixels[rng.random_range(0..pixels.len())];
        let p = PixelCoord::new(c as f64, r as f64);
        let q = random_in_mask(mask, &pixels, rng);
        if pairs.push(Correspondence::new(p, q)) {
            added += 1;
        }
    }
    added
}
