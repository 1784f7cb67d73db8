//! Projective rectification from the camera pose.
//!
//! Lines joining mirror-symmetric points are parallel to the world x axis,
//! so in the image they meet at `v1`, the vanishing point of world x. The
//! homography `H = [[1,0,0],[0,1,0],l^T]` with `l = v1 x v2` sends the
//! vanishing line through `v1` and `v2` to infinity, which makes those
//! lines parallel. A similarity `A` then turns their common direction
//! horizontal and fits the warped mask into the canvas, so every symmetric
//! pair ends up on one scanline and matching becomes a 1D search.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraPose, ImageFrame, PixelCoord, Rotation, Vec3};
use crate::imaging::{
    bilinear, Correspondence, CorrespondenceSet, Flow1D, Grid, IntensityImage, Mask,
};

/// Denominators below this mark a vanishing point as being at infinity.
pub const AT_INFINITY_EPS: f64 = 1e-9;

/// Margin in pixels kept between the warped mask and the canvas border.
pub const FIT_MARGIN: f64 = 4.0;

/// Vanishing points of world x (`v1`) and world y (`v2`) in normalized
/// image coordinates. Finite points are `(x, y, 1)`; points at infinity are
/// unit directions `(dx, dy, 0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VanishingPoints {
    pub v1: Vec3,
    pub v2: Vec3,
    pub v1_at_infinity: bool,
    pub v2_at_infinity: bool,
}

fn canonical_direction(d: Vec3) -> Vec3 {
    let n = d.norm();
    let mut d = d / n;
    let first = if d.x.abs() > 1e-12 { d.x } else { d.y };
    if first < 0.0 {
        d = -d;
    }
    d.z = 0.0;
    d
}

fn vanishing_point(u: Vec3, s: f64) -> (Vec3, bool) {
    if u.z.abs() < AT_INFINITY_EPS {
        (canonical_direction(Vec3::new(u.x, u.y, 0.0)), true)
    } else {
        (Vec3::new(u.x / (s * u.z), u.y / (s * u.z), 1.0), false)
    }
}

/// `v1 ~ (r2 x r3)`, `v2 ~ (r1 x r3)`, scaled into normalized image
/// coordinates by `1 / (s u_z)`.
pub fn vanishing_points(r: &Rotation, s: f64) -> VanishingPoints {
    let (r1, r2, r3) = (r.row(0), r.row(1), r.row(2));
    let (v1, v1_inf) = vanishing_point(r2.cross(&r3), s);
    let (v2, v2_inf) = vanishing_point(r1.cross(&r3), s);
    VanishingPoints {
        v1,
        v2,
        v1_at_infinity: v1_inf,
        v2_at_infinity: v2_inf,
    }
}

/// Original-pixel -> rectified-pixel map `T = A H`.
#[derive(Clone, Debug, PartialEq)]
pub struct RectifyTransform {
    /// Projective part in pixel coordinates.
    pub homography: Matrix3<f64>,
    /// Rotation + uniform scale + translation applied after `homography`.
    pub similarity: Matrix3<f64>,
    pub vanishing: Option<VanishingPoints>,
    pub degenerate: bool,
    matrix: Matrix3<f64>,
    inverse: Matrix3<f64>,
}

/// Serializable form of a transform, written next to rectified images.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TransformRecord {
    pub homography: [[f64; 3]; 3],
    pub similarity: [[f64; 3]; 3],
    pub degenerate: bool,
    pub v1: Option<[f64; 3]>,
    pub v2: Option<[f64; 3]>,
    pub original_size: [usize; 2],
    pub rectified_size: [usize; 2],
}

fn to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

fn from_rows(r: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::new(
        r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
    )
}

fn apply_h(m: &Matrix3<f64>, p: PixelCoord) -> Option<PixelCoord> {
    let h = m * Vector3::new(p.col, p.row, 1.0);
    if !(h.z > 1e-12) {
        return None;
    }
    Some(PixelCoord::new(h.x / h.z, h.y / h.z))
}

impl RectifyTransform {
    /// Wraps an explicit `T` (homography part = `T`, similarity = identity).
    pub fn from_matrix(t: Matrix3<f64>) -> Result<Self> {
        Self::compose(t, Matrix3::identity(), None, false)
    }

    pub fn identity() -> Self {
        Self::from_matrix(Matrix3::identity()).expect("identity is invertible")
    }

    fn compose(
        homography: Matrix3<f64>,
        similarity: Matrix3<f64>,
        vanishing: Option<VanishingPoints>,
        degenerate: bool,
    ) -> Result<Self> {
        let matrix = similarity * homography;
        if matrix.determinant().abs() <= 1e-12 {
            return Err(Error::invalid("rectifying transform is singular"));
        }
        let inverse = matrix
            .try_inverse()
            .ok_or_else(|| Error::invalid("rectifying transform is singular"))?;
        Ok(RectifyTransform {
            homography,
            similarity,
            vanishing,
            degenerate,
            matrix,
            inverse,
        })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn inverse_matrix(&self) -> &Matrix3<f64> {
        &self.inverse
    }

    /// Original -> rectified. `None` for points on or beyond the vanishing line.
    pub fn apply(&self, p: PixelCoord) -> Option<PixelCoord> {
        apply_h(&self.matrix, p)
    }

    /// Rectified -> original.
    pub fn apply_inverse(&self, p: PixelCoord) -> Option<PixelCoord> {
        apply_h(&self.inverse, p)
    }

    pub fn to_record(&self, original: ImageFrame, rectified: ImageFrame) -> TransformRecord {
        TransformRecord {
            homography: to_rows(&self.homography),
            similarity: to_rows(&self.similarity),
            degenerate: self.degenerate,
            v1: self.vanishing.map(|v| [v.v1.x, v.v1.y, v.v1.z]),
            v2: self.vanishing.map(|v| [v.v2.x, v.v2.y, v.v2.z]),
            original_size: [original.width, original.height],
            rectified_size: [rectified.width, rectified.height],
        }
    }

    pub fn from_record(rec: &TransformRecord) -> Result<Self> {
        let vanishing = match (rec.v1, rec.v2) {
            (Some(a), Some(b)) => Some(VanishingPoints {
                v1: Vec3::from(a),
                v2: Vec3::from(b),
                v1_at_infinity: a[2] == 0.0,
                v2_at_infinity: b[2] == 0.0,
            }),
            _ => None,
        };
        Self::compose(
            from_rows(&rec.homography),
            from_rows(&rec.similarity),
            vanishing,
            rec.degenerate,
        )
    }
}

/// Builds `T = A H` for a `width x height` image whose object occupies `mask`.
///
/// Both vanishing points at infinity (fronto-parallel camera) is the
/// degenerate case: `H` is the identity and only `A` is applied.
pub fn build_transform(
    cam: &CameraPose,
    width: usize,
    height: usize,
    mask: &Mask,
) -> Result<RectifyTransform> {
    if mask.is_empty_mask() {
        return Err(Error::invalid("cannot rectify an empty mask"));
    }
    if mask.width() != width || mask.height() != height {
        return Err(Error::invalid("mask size does not match the image"));
    }
    let frame = ImageFrame::new(width, height);
    let vp = vanishing_points(&cam.rotation, cam.s);
    let norm = frame.normalization_matrix();
    let norm_inv = norm.try_inverse().expect("normalization is invertible");

    let degenerate = vp.v1_at_infinity && vp.v2_at_infinity;
    let mut homography = if degenerate {
        Matrix3::identity()
    } else {
        let l = vp.v1.cross(&vp.v2);
        let h_norm = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, l.x, l.y, l.z);
        norm_inv * h_norm * norm
    };

    // Rescale so that w = 1 at the mask centroid, and require every mask
    // pixel to stay on the positive side of the vanishing line.
    let (mut sc, mut sr, mut n) = (0.0, 0.0, 0.0);
    for (c, r) in mask.pixels() {
        sc += c as f64;
        sr += r as f64;
        n += 1.0;
    }
    let w0 = (homography * Vector3::new(sc / n, sr / n, 1.0)).z;
    if w0.abs() < 1e-12 {
        return Err(Error::invalid("vanishing line passes through the object"));
    }
    homography /= w0;
    for (c, r) in mask.pixels() {
        if (homography * Vector3::new(c as f64, r as f64, 1.0)).z <= 1e-9 {
            return Err(Error::invalid("vanishing line crosses the object mask"));
        }
    }

    // Direction of the (now parallel) symmetry lines.
    let v1_pix = norm_inv * vp.v1;
    let d = homography * v1_pix;
    let (dx, dy) = if d.z.abs() > 1e-9 * (d.x.abs() + d.y.abs()) && !degenerate {
        // v1 finite but H did not send it to infinity: only possible through
        // rounding, fall back to the in-image direction through the centroid.
        let p = PixelCoord::new(d.x / d.z, d.y / d.z);
        let c = apply_h(&homography, PixelCoord::new(sc / n, sr / n)).expect("centroid maps");
        (p.col - c.col, p.row - c.row)
    } else {
        (d.x, d.y)
    };
    let mut angle = -dy.atan2(dx);
    // turn to whichever of +x / -x is closer
    if angle > std::f64::consts::FRAC_PI_2 {
        angle -= std::f64::consts::PI;
    } else if angle < -std::f64::consts::FRAC_PI_2 {
        angle += std::f64::consts::PI;
    }
    let (sin, cos) = angle.sin_cos();
    let rotated: Vec<PixelCoord> = mask
        .pixels()
        .map(|(c, r)| {
            let p = apply_h(&homography, PixelCoord::new(c as f64, r as f64))
                .expect("mask is in front of the vanishing line");
            PixelCoord::new(cos * p.col - sin * p.row, sin * p.col + cos * p.row)
        })
        .collect();
    let (mut min_c, mut max_c, mut min_r, mut max_r) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &rotated {
        min_c = min_c.min(p.col);
        max_c = max_c.max(p.col);
        min_r = min_r.min(p.row);
        max_r = max_r.max(p.row);
    }
    let avail_w = (width as f64 - 1.0 - 2.0 * FIT_MARGIN).max(1.0);
    let avail_h = (height as f64 - 1.0 - 2.0 * FIT_MARGIN).max(1.0);
    let scale = (avail_w / (max_c - min_c).max(1.0)).min(avail_h / (max_r - min_r).max(1.0));
    let tx = 0.5 * (width as f64 - 1.0) - scale * 0.5 * (min_c + max_c);
    let ty = 0.5 * (height as f64 - 1.0) - scale * 0.5 * (min_r + max_r);
    let similarity = Matrix3::new(
        scale * cos,
        -scale * sin,
        tx,
        scale * sin,
        scale * cos,
        ty,
        0.0,
        0.0,
        1.0,
    );
    RectifyTransform::compose(homography, similarity, Some(vp), degenerate)
}

/// Vanishing line `l = v1 x v2` expressed in original pixel coordinates.
pub fn vanishing_line_pixels(vp: &VanishingPoints, frame: ImageFrame) -> Vec3 {
    frame.normalization_matrix().transpose() * vp.v1.cross(&vp.v2)
}

/// Scalar image resampled onto the rectified canvas.
#[derive(Clone, Debug, PartialEq)]
pub struct Warped {
    pub values: Grid<f64>,
    pub valid: Mask,
}

/// Inverse-mapping bilinear warp of a scalar image. When `source_valid` is
/// given, output pixels whose four source neighbours are not all valid are
/// marked invalid. Invalid outputs carry 0.
pub fn warp_scalar(
    image: &Grid<f64>,
    source_valid: Option<&Mask>,
    t: &RectifyTransform,
    out: ImageFrame,
) -> Warped {
    let mut values = Grid::filled(out.width, out.height, 0.0);
    let mut valid = Grid::filled(out.width, out.height, false);
    for row in 0..out.height {
        for col in 0..out.width {
            let Some(src) = t.apply_inverse(PixelCoord::new(col as f64, row as f64)) else {
                continue;
            };
            let Some(v) = bilinear(image, src.col, src.row) else {
                continue;
            };
            if let Some(m) = source_valid {
                let c0 = src.col.floor() as usize;
                let r0 = src.row.floor() as usize;
                let c1 = (c0 + 1).min(image.width() - 1);
                let r1 = (r0 + 1).min(image.height() - 1);
                let ok = *m.get(c0, r0) && *m.get(c1, r0) && *m.get(c0, r1) && *m.get(c1, r1);
                if !ok {
                    continue;
                }
            }
            values.set(col, row, v);
            valid.set(col, row, true);
        }
    }
    Warped { values, valid }
}

pub fn warp_intensity(image: &IntensityImage, t: &RectifyTransform, out: ImageFrame) -> Warped {
    warp_scalar(image, None, t, out)
}

/// Nearest-neighbour warp of a mask.
pub fn warp_mask(mask: &Mask, t: &RectifyTransform, out: ImageFrame) -> Mask {
    Grid::from_fn(out.width, out.height, |col, row| {
        t.apply_inverse(PixelCoord::new(col as f64, row as f64))
            .map(|src| mask.contains(&src))
            .unwrap_or(false)
    })
}

/// Counters from [`lift_flow_to_correspondences`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftStats {
    pub emitted: usize,
    pub out_of_bounds: usize,
    pub degenerate: usize,
}

/// Maps each valid rectified displacement `r -> r + (f, 0)` back to a pair
/// on the original image.
pub fn lift_flow_to_correspondences(
    flow: &Flow1D,
    t: &RectifyTransform,
    rectified_mask: &Mask,
    original: ImageFrame,
) -> (CorrespondenceSet, LiftStats) {
    let mut set = CorrespondenceSet::new();
    let mut stats = LiftStats::default();
    for row in 0..flow.height() {
        for col in 0..flow.width() {
            if !*rectified_mask.get(col, row) {
                continue;
            }
            let Some(f) = flow.get(col, row) else {
                continue;
            };
            let r = PixelCoord::new(col as f64, row as f64);
            let target = PixelCoord::new(col as f64 + f, row as f64);
            let (Some(p), Some(q)) = (t.apply_inverse(r), t.apply_inverse(target)) else {
                stats.out_of_bounds += 1;
                continue;
            };
            if !p.in_bounds(original.width, original.height)
                || !q.in_bounds(original.width, original.height)
            {
                stats.out_of_bounds += 1;
                continue;
            }
            let c = Correspondence::new(p, q).with_score(*flow.score.get(col, row));
            if set.push(c) {
                stats.emitted += 1;
            } else {
                stats.degenerate += 1;
            }
        }
    }
    (set, stats)
}

/// Rectified flow of known pairs: each pair's source is mapped to the
/// nearest rectified pixel and the displacement to its target recorded.
/// The row offset of each pair is returned alongside.
pub fn pairs_to_flow(
    pairs: &CorrespondenceSet,
    t: &RectifyTransform,
    out: ImageFrame,
) -> (Flow1D, Vec<f64>) {
    let mut flow = Flow1D::empty(out.width, out.height);
    let mut row_offsets = Vec::with_capacity(pairs.len());
    for c in pairs {
        let (Some(p), Some(q)) = (t.apply(c.p), t.apply(c.q)) else {
            continue;
        };
        row_offsets.push(q.row - p.row);
        if let Some((col, row)) = p.nearest_pixel(out.width, out.height) {
            flow.set(col, row, q.col - p.col, 1.0);
        }
    }
    (flow, row_offsets)
}
