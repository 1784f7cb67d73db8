//! Camera model and rotation algebra.
//!
//! The camera has five parameters: a rotation `R` (camera to world), a
//! translation `t_x` along the world x axis and a field-of-view scale `s`.
//! A pixel with normalized image coordinates `(px, py)` and depth `z` maps to
//! the world point
//!
//! ```text
//! p = z R (s px, s py, 1)^T + (t_x, 0, 0)^T
//! ```
//!
//! The object's mirror plane is the world yz-plane, so reflection is
//! `P = diag(-1, 1, 1)`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// World- or camera-frame 3-vector. The frame is implied by the call site.
pub type Vec3 = Vector3<f64>;

/// Unit quaternion stored as `(w, x, y, z)`; `w` is the real part.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Quaternion::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Rotation by `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::invalid("axis must be a finite non-zero vector"));
        }
        let (sh, ch) = (0.5 * angle).sin_cos();
        let u = axis / n * sh;
        Ok(Quaternion::new(ch, u.x, u.y, u.z))
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn neg(self) -> Self {
        Quaternion::new(-self.w, -self.x, -self.y, -self.z)
    }

    pub fn dot(&self, o: &Quaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Normalized copy. Errors on the zero or non-finite quaternion.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::invalid("quaternion has zero or non-finite norm"));
        }
        if (n - 1.0).abs() <= 1e-12 {
            return Ok(*self);
        }
        Ok(Quaternion::new(self.w / n, self.x / n, self.y / n, self.z / n))
    }

    /// Quaternion of a proper rotation matrix (Shepperd's method), with `w >= 0`.
    pub fn from_rotation(r: &Rotation) -> Self {
        let m = &r.0;
        let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let q = if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            Quaternion::new(
                0.25 * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            Quaternion::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            )
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            Quaternion::new(
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            )
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            Quaternion::new(
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            )
        };
        let n = q.norm();
        let q = Quaternion::new(q.w / n, q.x / n, q.y / n, q.z / n);
        if q.w < 0.0 {
            q.neg()
        } else {
            q
        }
    }
}

/// A proper rotation matrix, rows `r1, r2, r3`. Maps camera-frame vectors to
/// the world frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Wraps a matrix after checking orthonormality and `det = +1` to `tol`.
    pub fn from_matrix(m: Matrix3<f64>, tol: f64) -> Result<Self> {
        let r = Rotation(m);
        if !r.is_valid(tol) {
            return Err(Error::invalid("matrix is not a proper rotation"));
        }
        Ok(r)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Row `i` (0-based) as a vector.
    pub fn row(&self, i: usize) -> Vec3 {
        self.0.row(i).transpose()
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// `self * other`.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }

    /// Largest deviation of `R^T R` from identity and of `det R` from one.
    pub fn orthonormality_error(&self) -> f64 {
        let e = (self.0.transpose() * self.0 - Matrix3::identity()).abs().max();
        e.max((self.0.determinant() - 1.0).abs())
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.0.iter().all(|v| v.is_finite()) && self.orthonormality_error() <= tol
    }

    /// Angle in radians of `self * other^T`, in `[0, pi]`.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        let rel = self.0 * other.0.transpose();
        let axis = Vec3::new(
            rel[(2, 1)] - rel[(1, 2)],
            rel[(0, 2)] - rel[(2, 0)],
            rel[(1, 0)] - rel[(0, 1)],
        );
        let cos = 0.5 * (rel.trace() - 1.0);
        (0.5 * axis.norm()).atan2(cos)
    }

    /// Rotation about world axis `axis` by `angle` radians.
    pub fn about_axis(axis: &Vec3, angle: f64) -> Result<Rotation> {
        let n = axis.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::invalid("axis must be a finite non-zero vector"));
        }
        Ok(exp_map(&(axis / n * angle)))
    }
}

/// Cross-product matrix `[v]x` with `[v]x w = v x w`.
pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `R = (1 - 2|q_n|^2) I + 2 q_n q_n^T + 2 q_r [q_n]x`, after normalizing `q`.
pub fn quat_to_rotation(q: &Quaternion) -> Result<Rotation> {
    let q = q.normalized()?;
    let qn = q.vector();
    let m = Matrix3::identity() * (1.0 - 2.0 * qn.norm_squared())
        + qn * qn.transpose() * 2.0
        + skew(&qn) * (2.0 * q.w);
    Ok(Rotation(m))
}

/// Exponential map `exp([c]x)` (Rodrigues). Uses the Taylor expansion of
/// the coefficients for `|c| < 1e-6`.
pub fn exp_map(c: &Vec3) -> Rotation {
    let theta2 = c.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < 1e-6 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = skew(c);
    Rotation(Matrix3::identity() + k * a + k * k * b)
}

/// Mirror across the world yz-plane.
pub fn reflect(p: &Vec3) -> Vec3 {
    Vec3::new(-p.x, p.y, p.z)
}

/// Fractional pixel position; `(0, 0)` is the centre of the top-left pixel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelCoord {
    pub col: f64,
    pub row: f64,
}

impl PixelCoord {
    pub fn new(col: f64, row: f64) -> Self {
        PixelCoord { col, row }
    }

    pub fn distance(&self, other: &PixelCoord) -> f64 {
        (self.col - other.col).hypot(self.row - other.row)
    }

    /// Nearest integer pixel, if inside a `width x height` grid.
    pub fn nearest_pixel(&self, width: usize, height: usize) -> Option<(usize, usize)> {
        let c = self.col.round();
        let r = self.row.round();
        if c < 0.0 || r < 0.0 || c >= width as f64 || r >= height as f64 {
            return None;
        }
        Some((c as usize, r as usize))
    }

    pub fn in_bounds(&self, width: usize, height: usize) -> bool {
        self.col >= -0.5
            && self.row >= -0.5
            && self.col < width as f64 - 0.5
            && self.row < height as f64 - 0.5
    }
}

/// Resolution-independent image coordinates; y points up, the longer side
/// spans `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizedCoord {
    pub x: f64,
    pub y: f64,
}

impl NormalizedCoord {
    pub fn new(x: f64, y: f64) -> Self {
        NormalizedCoord { x, y }
    }

    /// Unnormalized ray direction `(s x, s y, 1)` in the camera frame.
    pub fn ray(&self, s: f64) -> Vec3 {
        Vec3::new(s * self.x, s * self.y, 1.0)
    }
}

/// Pixel grid dimensions and the pixel <-> normalized coordinate bijection
/// `x = (2(col + 0.5) - W) / max(W, H)`, `y = (H - 2(row + 0.5)) / max(W, H)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageFrame {
    pub width: usize,
    pub height: usize,
}

impl ImageFrame {
    pub fn new(width: usize, height: usize) -> Self {
        ImageFrame { width, height }
    }

    fn scale(&self) -> f64 {
        self.width.max(self.height) as f64
    }

    pub fn normalize(&self, p: PixelCoord) -> NormalizedCoord {
        let m = self.scale();
        NormalizedCoord {
            x: (2.0 * (p.col + 0.5) - self.width as f64) / m,
            y: (self.height as f64 - 2.0 * (p.row + 0.5)) / m,
        }
    }

    pub fn denormalize(&self, n: NormalizedCoord) -> PixelCoord {
        let m = self.scale();
        PixelCoord {
            col: 0.5 * (n.x * m + self.width as f64) - 0.5,
            row: 0.5 * (self.height as f64 - n.y * m) - 0.5,
        }
    }

    /// Affine matrix taking homogeneous pixel coordinates to normalized ones.
    pub fn normalization_matrix(&self) -> Matrix3<f64> {
        let m = self.scale();
        Matrix3::new(
            2.0 / m,
            0.0,
            (1.0 - self.width as f64) / m,
            0.0,
            -2.0 / m,
            (self.height as f64 - 1.0) / m,
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// The five-parameter camera `(R, t_x, s)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraPose {
    pub rotation: Rotation,
    pub t_x: f64,
    pub s: f64,
}

impl CameraPose {
    pub fn new(rotation: Rotation, t_x: f64, s: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::invalid(format!("camera scale s must be > 0, got {s}")));
        }
        if !t_x.is_finite() {
            return Err(Error::invalid("camera t_x must be finite"));
        }
        Ok(CameraPose { rotation, t_x, s })
    }

    pub fn from_quaternion(q: &Quaternion, t_x: f64, s: f64) -> Result<Self> {
        CameraPose::new(quat_to_rotation(q)?, t_x, s)
    }

    pub fn identity() -> Self {
        CameraPose {
            rotation: Rotation::identity(),
            t_x: 0.0,
            s: 1.0,
        }
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::new(self.t_x, 0.0, 0.0)
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vec3 {
        self.translation()
    }

    pub fn quaternion(&self) -> Quaternion {
        Quaternion::from_rotation(&self.rotation)
    }

    /// Inverse of [`back_project`]: normalized coordinates and depth `z` of a
    /// world point. `None` if the point is not in front of the camera.
    pub fn project(&self, world: &Vec3) -> Option<(NormalizedCoord, f64)> {
        let cam = self.rotation.transpose().apply(&(world - self.translation()));
        if !(cam.z > 0.0) {
            return None;
        }
        Some((
            NormalizedCoord::new(cam.x / (self.s * cam.z), cam.y / (self.s * cam.z)),
            cam.z,
        ))
    }
}

/// `p = z R (s px, s py, 1)^T + (t_x, 0, 0)^T`.
pub fn back_project(p: NormalizedCoord, z: f64, cam: &CameraPose) -> Result<Vec3> {
    if !(z > 0.0) {
        return Err(Error::invalid(format!("depth must be positive, got {z}")));
    }
    Ok(cam.rotation.apply(&p.ray(cam.s)) * z + cam.translation())
}

/// Length of the back-projected ray to depth `z`: `z |(s px, s py, 1)|`.
pub fn ray_depth(p: NormalizedCoord, z: f64, s: f64) -> f64 {
    z * p.ray(s).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, SQRT_2};

    fn mat_close(a: &Matrix3<f64>, b: &Matrix3<f64>, tol: f64) -> bool {
        (a - b).abs().max() <= tol
    }

    fn quarter_turn_z() -> Matrix3<f64> {
        Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    }

    #[test]
    fn quaternion_examples() {
        let r = quat_to_rotation(&Quaternion::IDENTITY).unwrap();
        assert!(mat_close(r.matrix(), &Matrix3::identity(), 1e-15));

        let r = quat_to_rotation(&Quaternion::new(0.0, 0.0, 0.0, 1.0)).unwrap();
        assert!(mat_close(
            r.matrix(),
            &Matrix3::from_diagonal(&Vec3::new(-1.0, -1.0, 1.0)),
            1e-15
        ));

        let h = SQRT_2 / 2.0;
        let r = quat_to_rotation(&Quaternion::new(h, 0.0, 0.0, h)).unwrap();
        assert!(mat_close(r.matrix(), &quarter_turn_z(), 1e-15));
    }

    #[test]
    fn zero_quaternion_is_rejected() {
        assert!(matches!(
            quat_to_rotation(&Quaternion::new(0.0, 0.0, 0.0, 0.0)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn unnormalized_quaternion_is_normalized() {
        let r = quat_to_rotation(&Quaternion::new(0.0, 0.0, 0.0, 3.0)).unwrap();
        assert!(r.is_valid(1e-12));
    }

    #[test]
    fn exp_map_examples() {
        assert!(mat_close(
            exp_map(&Vec3::zeros()).matrix(),
            &Matrix3::identity(),
            0.0
        ));
        let r = exp_map(&Vec3::new(0.0, 0.0, FRAC_PI_2));
        assert!(mat_close(r.matrix(), &quarter_turn_z(), 1e-15));
    }

    #[test]
    fn exp_map_small_angle_branch_is_continuous() {
        let c = Vec3::new(3e-7, -2e-7, 5e-7);
        let taylor = exp_map(&c);
        let q = Quaternion::from_axis_angle(&c, c.norm()).unwrap();
        let exact = quat_to_rotation(&q).unwrap();
        assert!(mat_close(taylor.matrix(), exact.matrix(), 1e-15));
    }

    #[test]
    fn back_project_examples() {
        let cam = CameraPose::identity();
        let p = back_project(NormalizedCoord::new(0.0, 0.0), 2.0, &cam).unwrap();
        assert_eq!(p, Vec3::new(0.0, 0.0, 2.0));

        let cam = CameraPose::new(Rotation::identity(), 1.5, 2.0).unwrap();
        let p = back_project(NormalizedCoord::new(0.5, -0.25), 4.0, &cam).unwrap();
        assert!((p - Vec3::new(5.5, -2.0, 4.0)).norm() < 1e-15);

        let cam = CameraPose::new(Rotation::from_matrix(quarter_turn_z(), 1e-12).unwrap(), 0.0, 1.0)
            .unwrap();
        let p = back_project(NormalizedCoord::new(0.5, 0.0), 1.0, &cam).unwrap();
        assert!((p - Vec3::new(0.0, 0.5, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn back_project_rejects_non_positive_depth() {
        let cam = CameraPose::identity();
        assert!(back_project(NormalizedCoord::new(0.0, 0.0), 0.0, &cam).is_err());
        assert!(back_project(NormalizedCoord::new(0.0, 0.0), -1.0, &cam).is_err());
    }

    #[test]
    fn camera_requires_positive_scale() {
        assert!(CameraPose::new(Rotation::identity(), 0.0, 0.0).is_err());
        assert!(CameraPose::new(Rotation::identity(), 0.0, -1.0).is_err());
    }

    #[test]
    fn reflect_examples() {
        assert_eq!(reflect(&Vec3::new(1.0, 2.0, 3.0)), Vec3::new(-1.0, 2.0, 3.0));
        assert_eq!(reflect(&Vec3::new(0.0, 4.0, -7.0)), Vec3::new(0.0, 4.0, -7.0));
    }

    #[test]
    fn ray_depth_examples() {
        assert_eq!(ray_depth(NormalizedCoord::new(0.0, 0.0), 5.0, 1.0), 5.0);
        assert!((ray_depth(NormalizedCoord::new(0.6, 0.8), 1.0, 1.0) - SQRT_2).abs() < 1e-15);
        assert!(
            (ray_depth(NormalizedCoord::new(1.2, 1.6), 2.0, 0.5) - 2.0 * SQRT_2).abs() < 1e-15
        );
    }

    #[test]
    fn normalization_round_trips_and_matches_matrix() {
        let frame = ImageFrame::new(160, 120);
        let p = PixelCoord::new(17.25, 99.5);
        let n = frame.normalize(p);
        let back = frame.denormalize(n);
        assert!(back.distance(&p) < 1e-12);
        let h = frame.normalization_matrix() * Vec3::new(p.col, p.row, 1.0);
        assert!((h.x - n.x).abs() < 1e-15 && (h.y - n.y).abs() < 1e-15);
        // centre of the image is the principal point
        let c = frame.normalize(PixelCoord::new(79.5, 59.5));
        assert!(c.x.abs() < 1e-15 && c.y.abs() < 1e-15);
        // y points up
        assert!(frame.normalize(PixelCoord::new(0.0, 0.0)).y > 0.0);
    }

    fn unit_quat() -> impl Strategy<Value = Quaternion> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-3)
            .prop_map(|(w, x, y, z)| Quaternion::new(w, x, y, z).normalized().unwrap())
    }

    fn small_vec(r: f64) -> impl Strategy<Value = Vec3> {
        (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn quaternion_rotation_is_proper(q in unit_quat()) {
            let r = quat_to_rotation(&q).unwrap();
            prop_assert!(r.orthonormality_error() <= 1e-9);
        }

        #[test]
        fn quaternion_round_trip_through_matrix(q in unit_quat()) {
            let r = quat_to_rotation(&q).unwrap();
            let back = Quaternion::from_rotation(&r);
            let d = (back.dot(&q)).abs();
            prop_assert!((d - 1.0).abs() < 1e-12);
        }

        #[test]
        fn exp_map_inverse(c in small_vec(3.0)) {
            let prod = exp_map(&c).compose(&exp_map(&-c));
            prop_assert!(mat_close(prod.matrix(), &Matrix3::identity(), 1e-10));
        }

        #[test]
        fn exp_map_matches_axis_angle_quaternion(c in small_vec(0.5)) {
            prop_assume!(c.norm() > 0.0);
            let q = Quaternion::from_axis_angle(&c, c.norm()).unwrap();
            let a = quat_to_rotation(&q).unwrap();
            prop_assert!(mat_close(exp_map(&c).matrix(), a.matrix(), 1e-10));
        }

        #[test]
        fn back_project_then_project(
            q in unit_quat(),
            px in -1.0..1.0f64, py in -1.0..1.0f64,
            z in 0.1..20.0f64, tx in -3.0..3.0f64, s in 0.1..3.0f64,
        ) {
            let cam = CameraPose::from_quaternion(&q, tx, s).unwrap();
            let w = back_project(NormalizedCoord::new(px, py), z, &cam).unwrap();
            let (n, z2) = cam.project(&w).unwrap();
            prop_assert!((n.x - px).abs() < 1e-10);
            prop_assert!((n.y - py).abs() < 1e-10);
            prop_assert!((z2 - z).abs() < 1e-10 * z.max(1.0));
        }

        #[test]
        fn ray_depth_bounds_depth(px in -2.0..2.0f64, py in -2.0..2.0f64, z in 0.01..50.0f64, s in 0.01..4.0f64) {
            let d = ray_depth(NormalizedCoord::new(px, py), z, s);
            prop_assert!(d >= z);
            if px != 0.0 || py != 0.0 {
                // strict unless the offset underflows against 1.0
                if (s * px).powi(2) + (s * py).powi(2) > 1e-15 {
                    prop_assert!(d > z);
                }
            }
        }

        #[test]
        fn reflect_is_isometric_involution(a in small_vec(10.0), b in small_vec(10.0)) {
            prop_assert_eq!(reflect(&reflect(&a)), a);
            prop_assert!(((reflect(&a) - reflect(&b)).norm() - (a - b).norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn ten_thousand_random_quaternions_are_proper() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let q = Quaternion::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if q.norm() < 1e-6 {
                continue;
            }
            let r = quat_to_rotation(&q).unwrap();
            assert!(r.orthonormality_error() <= 1e-9);
        }
    }

    #[test]
    fn angle_between_rotations() {
        let a = Rotation::identity();
        let b = exp_map(&Vec3::new(0.0, FRAC_PI_2, 0.0));
        assert!((a.angle_to(&b) - FRAC_PI_2).abs() < 1e-14);
        assert_eq!(b.angle_to(&b), 0.0);
    }
}
