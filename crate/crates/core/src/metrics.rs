//! Evaluation measures for depth, pose, normals and correspondences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{back_project, reflect, CameraPose, ImageFrame, PixelCoord, Quaternion, Vec3};
use crate::imaging::{CorrespondenceSet, DepthMap, Flow1D, Mask, NormalMap, Stencil};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthReport {
    pub rel: f64,
    pub rms: f64,
    pub sigma_125: f64,
    pub sigma_15625: f64,
    pub n_pixels: usize,
    pub scale_invariant: f64,
}

/// `rel = mean |z - z*| / z*`, `rms`, ratio-threshold accuracies and the
/// scale-invariant log error `mean(e^2) - (sum e)^2 / (2 N^2)`,
/// `e = log z - log z*`, over masked pixels.
pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap, mask: &Mask) -> Result<DepthReport> {
    if !pred.same_size(gt) || !pred.same_size(mask) {
        return Err(Error::invalid("depth maps and mask differ in size"));
    }
    let (mut rel, mut sq, mut t1, mut t2, mut se, mut se2) = (0.0, 0.0, 0usize, 0usize, 0.0, 0.0);
    let mut n = 0usize;
    for (c, r) in mask.pixels() {
        let (z, zs) = (*pred.get(c, r), *gt.get(c, r));
        if !(zs > 0.0) {
            return Err(Error::invalid(format!("ground-truth depth at ({c}, {r}) is not positive")));
        }
        if !(z > 0.0) {
            return Err(Error::invalid(format!("predicted depth at ({c}, {r}) is not positive")));
        }
        rel += (z - zs).abs() / zs;
        sq += (z - zs) * (z - zs);
        let ratio = (z / zs).max(zs / z);
        t1 += (ratio < 1.25) as usize;
        t2 += (ratio < 1.25 * 1.25) as usize;
        let e = z.ln() - zs.ln();
        se += e;
        se2 += e * e;
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("empty mask"));
    }
    let nf = n as f64;
    Ok(DepthReport {
        rel: rel / nf,
        rms: (sq / nf).sqrt(),
        sigma_125: t1 as f64 / nf,
        sigma_15625: t2 as f64 / nf,
        n_pixels: n,
        scale_invariant: se2 / nf - se * se / (2.0 * nf * nf),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseReport {
    pub rot_err_deg: f64,
    pub tx_rel_err: f64,
    pub s_abs_err: f64,
    /// Difference of the full field of view `2 atan(s)`, degrees.
    pub fov_err_deg: f64,
    pub pose_loss: f64,
}

/// Field of view in degrees spanned by the longer image side.
pub fn fov_deg(s: f64) -> f64 {
    2.0 * s.atan().to_degrees()
}

/// Quaternion distance `|q - q*|^2` after choosing the sign of `q` that
/// minimizes it.
pub fn quaternion_loss(q: &Quaternion, q_gt: &Quaternion) -> Result<f64> {
    let q = q.normalized()?;
    let q_gt = q_gt.normalized()?;
    let q = if q.dot(&q_gt) < 0.0 { q.neg() } else { q };
    let d = [q.w - q_gt.w, q.x - q_gt.x, q.y - q_gt.y, q.z - q_gt.z];
    Ok(d.iter().map(|v| v * v).sum())
}

pub fn pose_metrics(pred: &CameraPose, gt: &CameraPose, object_size: f64) -> Result<PoseReport> {
    if !(object_size > 0.0) {
        return Err(Error::invalid("object size must be positive"));
    }
    let dt = pred.t_x - gt.t_x;
    let ds = pred.s - gt.s;
    let q_loss = quaternion_loss(&pred.quaternion(), &gt.quaternion())?;
    Ok(PoseReport {
        rot_err_deg: pred.rotation.angle_to(&gt.rotation).to_degrees(),
        tx_rel_err: dt.abs() / object_size,
        s_abs_err: ds.abs(),
        fov_err_deg: (fov_deg(pred.s) - fov_deg(gt.s)).abs(),
        pose_loss: q_loss + dt * dt + ds * ds,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalReport {
    /// Mean `|n - n*|`.
    pub mean_l2: f64,
    pub mean_angle_deg: f64,
    pub n_pixels: usize,
}

pub fn normal_metrics(pred: &NormalMap, gt: &NormalMap, mask: &Mask) -> Result<NormalReport> {
    if !pred.same_size(gt) || !pred.same_size(mask) {
        return Err(Error::invalid("normal maps and mask differ in size"));
    }
    let (mut l2, mut ang, mut n) = (0.0, 0.0, 0usize);
    for (c, r) in mask.pixels() {
        let (a, b) = (pred.get(c, r), gt.get(c, r));
        l2 += (a - b).norm();
        ang += a.cross(b).norm().atan2(a.dot(b)).to_degrees();
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("no masked pixels to compare"));
    }
    Ok(NormalReport {
        mean_l2: l2 / n as f64,
        mean_angle_deg: ang / n as f64,
        n_pixels: n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymReport {
    pub mean_pixel_err: f64,
    /// Mean squared rectified-flow error, when a flow comparison was made.
    pub flow_mse: Option<f64>,
    pub n_pairs: usize,
}

/// Mean `|q - q_gt(p)|` over the pairs whose source has a ground-truth
/// counterpart.
pub fn symmetry_metrics(
    pred: &CorrespondenceSet,
    gt: impl Fn(PixelCoord) -> Option<PixelCoord>,
) -> Result<SymReport> {
    let (mut sum, mut n) = (0.0, 0usize);
    for c in pred {
        if let Some(q) = gt(c.p) {
            sum += c.q.distance(&q);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("no predicted pair has a ground-truth counterpart"));
    }
    Ok(SymReport {
        mean_pixel_err: sum / n as f64,
        flow_mse: None,
        n_pairs: n,
    })
}

/// Mean of `(f - f*)^2` over pixels valid in both flows.
pub fn flow_mse(pred: &Flow1D, gt: &Flow1D) -> Result<f64> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::invalid("flows differ in size"));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for r in 0..pred.height() {
        for c in 0..pred.width() {
            if let (Some(a), Some(b)) = (pred.get(c, r), gt.get(c, r)) {
                sum += (a - b) * (a - b);
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::invalid("flows have no common valid pixel"));
    }
    Ok(sum / n as f64)
}

/// Ground-truth mirror lookup from a depth map: back-project, reflect,
/// project, and check the reflected point against the depth seen there.
pub struct DepthMirror<'a> {
    pub depth: &'a DepthMap,
    pub mask: &'a Mask,
    pub camera: CameraPose,
    /// Relative depth tolerance of the visibility check.
    pub tolerance: f64,
}

impl<'a> DepthMirror<'a> {
    pub fn new(depth: &'a DepthMap, mask: &'a Mask, camera: CameraPose) -> Self {
        DepthMirror {
            depth,
            mask,
            camera,
            tolerance: 0.005,
        }
    }

    pub fn mirror(&self, p: PixelCoord) -> Option<PixelCoord> {
        let frame = self.mask.frame();
        let z = Stencil::at(self.mask, p)?.inverse_depth(self.depth);
        let x = back_project(frame.normalize(p), z, &self.camera).ok()?;
        let (n, zq) = self.camera.project(&reflect(&x))?;
        let q = frame.denormalize(n);
        let seen = Stencil::at(self.mask, q)?.inverse_depth(self.depth);
        ((seen - zq).abs() <= self.tolerance * zq).then_some(q)
    }
}

/// Bounding-box diagonal of the back-projected masked pixels.
pub fn object_size(depth: &DepthMap, mask: &Mask, cam: &CameraPose) -> Result<f64> {
    let frame: ImageFrame = mask.frame();
    let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
    for (c, r) in mask.pixels() {
        let x = back_project(
            frame.normalize(PixelCoord::new(c as f64, r as f64)),
            *depth.get(c, r),
            cam,
        )?;
        lo = lo.inf(&x);
        hi = hi.sup(&x);
    }
    if lo.x > hi.x {
        return Err(Error::invalid("empty mask"));
    }
    Ok((hi - lo).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{exp_map, Rotation};
    use crate::imaging::{Correspondence, Grid};
    use proptest::prelude::*;

    fn grid(w: usize, h: usize) -> (DepthMap, Mask) {
        (
            Grid::from_fn(w, h, |c, r| 1.0 + 0.1 * c as f64 + 0.05 * r as f64),
            Grid::filled(w, h, true),
        )
    }

    #[test]
    fn perfect_depth() {
        let (gt, m) = grid(6, 5);
        let r = depth_metrics(&gt, &gt, &m).unwrap();
        assert_eq!((r.rel, r.rms, r.sigma_125, r.sigma_15625, r.scale_invariant), (0.0, 0.0, 1.0, 1.0, 0.0));
        assert_eq!(r.n_pixels, 30);
    }

    #[test]
    fn uniform_scale_of_one_point_three() {
        let (gt, m) = grid(6, 5);
        let pred = gt.map(|z| 1.3 * z);
        let r = depth_metrics(&pred, &gt, &m).unwrap();
        assert!((r.rel - 0.3).abs() < 1e-12);
        assert_eq!(r.sigma_125, 0.0);
        assert_eq!(r.sigma_15625, 1.0);
    }

    #[test]
    fn scale_by_e_gives_one_half() {
        let (gt, m) = grid(7, 3);
        let pred = gt.map(|z| std::f64::consts::E * z);
        let r = depth_metrics(&pred, &gt, &m).unwrap();
        assert!((r.scale_invariant - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let (gt, _) = grid(3, 3);
        assert!(depth_metrics(&gt, &gt, &Grid::filled(3, 3, false)).is_err());
    }

    #[test]
    fn pose_examples() {
        let gt = CameraPose::new(exp_map(&Vec3::new(0.1, 0.2, -0.3)), 0.4, 0.5).unwrap();
        let r = pose_metrics(&gt, &gt, 2.0).unwrap();
        assert_eq!((r.rot_err_deg, r.tx_rel_err, r.s_abs_err, r.pose_loss), (0.0, 0.0, 0.0, 0.0));

        let quarter = CameraPose {
            rotation: Rotation::about_axis(&Vec3::new(1.0, 2.0, 0.5), std::f64::consts::FRAC_PI_2)
                .unwrap()
                .compose(&gt.rotation),
            ..gt
        };
        let r = pose_metrics(&quarter, &gt, 2.0).unwrap();
        assert!((r.rot_err_deg - 90.0).abs() < 1e-9);

        let q = gt.quaternion();
        let a = CameraPose::from_quaternion(&q, 0.4, 0.5).unwrap();
        let b = CameraPose::from_quaternion(&q.neg(), 0.4, 0.5).unwrap();
        let r = pose_metrics(&b, &a, 2.0).unwrap();
        assert_eq!(r.rot_err_deg, 0.0);
        assert_eq!(quaternion_loss(&q.neg(), &q).unwrap(), 0.0);
    }

    #[test]
    fn fov_uses_the_half_extent_slope() {
        assert!((fov_deg(1.0) - 90.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_ten_degree_normal_rotation() {
        let m = Grid::filled(5, 4, true);
        let gt = Grid::from_fn(5, 4, |c, r| Vec3::new(0.1 * c as f64, -0.2 * r as f64, -1.0).normalize());
        let pred = gt.map(|n| {
            let axis = n.cross(&Vec3::new(0.3, 1.0, 0.2)).normalize();
            exp_map(&(axis * 10f64.to_radians())).apply(n)
        });
        let r = normal_metrics(&pred, &gt, &m).unwrap();
        assert!((r.mean_angle_deg - 10.0).abs() <= 1e-9);
        assert!((r.mean_l2 - 2.0 * 5f64.to_radians().sin()).abs() < 1e-12);
        assert!((r.mean_l2 - 0.17431).abs() < 1e-5);
    }

    #[test]
    fn symmetry_error_of_a_three_four_offset() {
        let pairs: CorrespondenceSet = (0..5)
            .map(|i| {
                Correspondence::new(
                    PixelCoord::new(i as f64, 1.0),
                    PixelCoord::new(20.0 - i as f64 + 3.0, 5.0),
                )
            })
            .collect();
        let r = symmetry_metrics(&pairs, |p| Some(PixelCoord::new(20.0 - p.col, 1.0))).unwrap();
        assert!((r.mean_pixel_err - 5.0).abs() < 1e-12);
        assert!(symmetry_metrics(&pairs, |_| None).is_err());
        let r = symmetry_metrics(&pairs, |p| Some(PixelCoord::new(23.0 - p.col, 5.0))).unwrap();
        assert_eq!(r.mean_pixel_err, 0.0);
    }

    #[test]
    fn flow_error() {
        let mut a = Flow1D::empty(4, 2);
        let mut b = Flow1D::empty(4, 2);
        a.set(1, 1, 3.0, 1.0);
        b.set(1, 1, 1.0, 1.0);
        b.set(2, 1, 1.0, 1.0);
        assert_eq!(flow_mse(&a, &b).unwrap(), 4.0);
        assert!(flow_mse(&Flow1D::empty(4, 2), &b).is_err());
    }

    proptest! {
        #[test]
        fn rel_and_rms_grow_with_scale_error(c1 in 1.01..2.0f64, extra in 0.01..1.0f64) {
            let (gt, m) = grid(5, 5);
            let c2 = c1 + extra;
            let a = depth_metrics(&gt.map(|z| c1 * z), &gt, &m).unwrap();
            let b = depth_metrics(&gt.map(|z| c2 * z), &gt, &m).unwrap();
            prop_assert!(b.rel > a.rel && b.rms > a.rms);
            let lc = c1.ln();
            prop_assert!((a.scale_invariant - 0.5 * lc * lc).abs() < 1e-12);
        }

        #[test]
        fn depth_report_is_permutation_invariant(seed in 0u64..1000) {
            let (gt, m) = grid(4, 4);
            let pred = Grid::from_fn(4, 4, |c, r| gt.get(c, r) * (1.0 + 0.01 * (((c * 7 + r * 3) as u64 + seed) % 11) as f64));
            // transpose both maps: a pixel permutation
            let pt = Grid::from_fn(4, 4, |c, r| *pred.get(r, c));
            let gtt = Grid::from_fn(4, 4, |c, r| *gt.get(r, c));
            let a = depth_metrics(&pred, &gt, &m).unwrap();
            let b = depth_metrics(&pt, &gtt, &m).unwrap();
            prop_assert!((a.rel - b.rel).abs() < 1e-12 && (a.rms - b.rms).abs() < 1e-12);
            prop_assert_eq!(a.sigma_125, b.sigma_125);
        }
    }
}
