//! Unknown layout, residuals and Jacobian rows of the refinement problem.

use std::sync::{Arc, OnceLock};

use nalgebra::Vector3;

use super::linear::Pattern;
use super::Tradeoffs;
use crate::error::{Error, Result};
use crate::geometry::{exp_map, ray_depth, reflect, CameraPose, ImageFrame, NormalizedCoord, Vec3};
use crate::imaging::{CorrespondenceSet, DepthMap, Mask, NormalMap, Stencil};

/// Camera unknowns, in order: rotation increments about world y and z,
/// translation along x, scale.
pub const CAMERA_UNKNOWNS: usize = 4;

const UNMASKED: u32 = u32::MAX;

/// Directed 8-neighbour edges between masked pixels, in row-major order of
/// the source.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelGraph {
    pub edges: Vec<(u32, u32)>,
}

impl PixelGraph {
    pub fn new(mask: &Mask) -> Self {
        let index = pixel_index(mask);
        let (w, h) = (mask.width() as isize, mask.height() as isize);
        let mut edges = Vec::new();
        for (c, r) in mask.pixels() {
            let p = index[mask.index(c, r)];
            for dr in -1..=1isize {
                for dc in -1..=1isize {
                    let (qc, qr) = (c as isize + dc, r as isize + dr);
                    if (dc, dr) == (0, 0) || qc < 0 || qr < 0 || qc >= w || qr >= h {
                        continue;
                    }
                    let q = index[mask.index(qc as usize, qr as usize)];
                    if q != UNMASKED {
                        edges.push((p, q));
                    }
                }
            }
        }
        PixelGraph { edges }
    }
}

fn pixel_index(mask: &Mask) -> Vec<u32> {
    let mut index = vec![UNMASKED; mask.width() * mask.height()];
    for (i, (c, r)) in mask.pixels().enumerate() {
        index[mask.index(c, r)] = i as u32;
    }
    index
}

/// Interpolation taps of one correspondence endpoint, as unknown indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Taps {
    pub idx: [u32; 4],
    pub w: [f64; 4],
    pub len: usize,
}

impl Taps {
    fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx[..self.len]
            .iter()
            .zip(&self.w[..self.len])
            .map(|(&i, &w)| (i as usize, w))
    }

    /// Inverse-depth interpolation and its partial derivatives.
    fn depth(&self, z: &[f64]) -> (f64, [f64; 4]) {
        let inv: f64 = self.iter().map(|(i, w)| w / z[i]).sum();
        let zi = 1.0 / inv;
        let mut d = [0.0; 4];
        for (k, (i, w)) in self.iter().enumerate() {
            d[k] = zi * zi * w / (z[i] * z[i]);
        }
        (zi, d)
    }
}

/// A correspondence whose endpoints both have interpolation taps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairTerm {
    pub p: Taps,
    pub q: Taps,
    pub coord_p: NormalizedCoord,
    pub coord_q: NormalizedCoord,
}

/// Current iterate: one depth per masked pixel and the camera.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub z: Vec<f64>,
    pub camera: CameraPose,
}

impl SolverState {
    /// `z + alpha dz`, `R <- exp(alpha c) R`, `t_x + alpha dt`, `s + alpha ds`.
    pub fn stepped(&self, dz: &[f64], cam: Option<[f64; CAMERA_UNKNOWNS]>, alpha: f64) -> SolverState {
        let z = self.z.iter().zip(dz).map(|(z, d)| z + alpha * d).collect();
        let mut camera = self.camera;
        if let Some([cy, cz, dt, ds]) = cam {
            let rot = exp_map(&Vec3::new(0.0, alpha * cy, alpha * cz));
            camera.rotation = rot.compose(&camera.rotation);
            camera.t_x += alpha * dt;
            camera.s += alpha * ds;
        }
        SolverState { z, camera }
    }

    pub fn is_feasible(&self) -> bool {
        self.camera.s > 0.0
            && self.camera.s.is_finite()
            && self.camera.t_x.is_finite()
            && self.z.iter().all(|z| *z > 0.0 && z.is_finite())
    }
}

/// Raw residuals of the three terms.
#[derive(Clone, Debug, PartialEq)]
pub struct Residuals {
    /// `d_p - dbar_p` per masked pixel.
    pub depth: Vec<f64>,
    /// `(x_p - x_q) . n_p` per graph edge.
    pub normal: Vec<f64>,
    /// `P x_p - x_q` per correspondence term.
    pub symmetry: Vec<Vec3>,
}

/// Unweighted robust objective and its parts.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Objective {
    pub total: f64,
    pub depth: f64,
    pub normal: f64,
    pub symmetry: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Term {
    Depth,
    Normal,
    Symmetry,
}

/// One Jacobian row: sparse depth entries (indices may repeat), the four
/// camera entries and the residual.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Row {
    pub z: [(u32, f64); 8],
    pub nz: usize,
    pub cam: [f64; CAMERA_UNKNOWNS],
    pub r: f64,
}

impl Row {
    fn new(r: f64) -> Self {
        Row {
            z: [(0, 0.0); 8],
            nz: 0,
            cam: [0.0; CAMERA_UNKNOWNS],
            r,
        }
    }

    fn push(&mut self, i: usize, v: f64) {
        self.z[self.nz] = (i as u32, v);
        self.nz += 1;
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.z[..self.nz]
    }
}

/// Everything about a refinement that stays fixed across iterations.
#[derive(Clone, Debug)]
pub struct Problem {
    pub frame: ImageFrame,
    /// Masked pixels in row-major order; unknown `i` is the depth of
    /// `pixels[i]`.
    pub pixels: Vec<(usize, usize)>,
    coords: Vec<NormalizedCoord>,
    /// Target ray depths.
    d_bar: Vec<f64>,
    /// Camera-frame normals.
    normals: Vec<Vec3>,
    pub graph: PixelGraph,
    pub pairs: Vec<PairTerm>,
    /// Correspondences without interpolation taps on the mask.
    pub dropped_pairs: usize,
    pub tradeoffs: Tradeoffs,
    initial: SolverState,
    pattern: OnceLock<Arc<Pattern>>,
}

impl Problem {
    pub fn new(
        depth: &DepthMap,
        normals: &NormalMap,
        mask: &Mask,
        correspondences: &CorrespondenceSet,
        camera: &CameraPose,
        tradeoffs: Tradeoffs,
    ) -> Result<Problem> {
        tradeoffs.validate()?;
        if !depth.same_size(mask) || !normals.same_size(mask) {
            return Err(Error::invalid("depth, normals and mask differ in size"));
        }
        if mask.is_empty_mask() {
            return Err(Error::invalid("mask has no object pixels"));
        }
        let frame = mask.frame();
        let index = pixel_index(mask);
        let pixels: Vec<(usize, usize)> = mask.pixels().collect();
        let mut z = Vec::with_capacity(pixels.len());
        let mut coords = Vec::with_capacity(pixels.len());
        let mut d_bar = Vec::with_capacity(pixels.len());
        let mut ns = Vec::with_capacity(pixels.len());
        for &(c, r) in &pixels {
            let zp = *depth.get(c, r);
            if !(zp > 0.0) || !zp.is_finite() {
                return Err(Error::invalid(format!("depth at ({c}, {r}) must be positive, got {zp}")));
            }
            let n = *normals.get(c, r);
            if !n.iter().all(|v| v.is_finite()) || n.norm() == 0.0 {
                return Err(Error::invalid(format!("normal at ({c}, {r}) is degenerate")));
            }
            let coord = frame.normalize(crate::geometry::PixelCoord::new(c as f64, r as f64));
            z.push(zp);
            coords.push(coord);
            d_bar.push(ray_depth(coord, zp, camera.s));
            ns.push(n);
        }
        let taps = |p| {
            Stencil::at(mask, p).map(|s| {
                let mut t = Taps { idx: [0; 4], w: [0.0; 4], len: s.len };
                for (k, ((c, r), w)) in s.taps().enumerate() {
                    t.idx[k] = index[mask.index(c, r)];
                    t.w[k] = w;
                }
                t
            })
        };
        let mut pairs = Vec::with_capacity(correspondences.len());
        let mut dropped = 0;
        for c in correspondences {
            match (taps(c.p), taps(c.q)) {
                (Some(p), Some(q)) => pairs.push(PairTerm {
                    p,
                    q,
                    coord_p: frame.normalize(c.p),
                    coord_q: frame.normalize(c.q),
                }),
                _ => dropped += 1,
            }
        }
        Ok(Problem {
            frame,
            pixels,
            coords,
            d_bar,
            normals: ns,
            graph: PixelGraph::new(mask),
            pairs,
            dropped_pairs: dropped,
            tradeoffs,
            initial: SolverState { z, camera: *camera },
            pattern: OnceLock::new(),
        })
    }

    /// Sparsity pattern of the depth block, built on first use.
    pub(crate) fn pattern(&self) -> Arc<Pattern> {
        self.pattern.get_or_init(|| Arc::new(Pattern::new(self))).clone()
    }

    pub fn initial_state(&self) -> SolverState {
        self.initial.clone()
    }

    pub fn n_pixels(&self) -> usize {
        self.pixels.len()
    }

    pub fn n_unknowns(&self, optimize_camera: bool) -> usize {
        self.pixels.len() + if optimize_camera { CAMERA_UNKNOWNS } else { 0 }
    }

    pub fn coord(&self, i: usize) -> NormalizedCoord {
        self.coords[i]
    }

    pub fn target_ray_depth(&self, i: usize) -> f64 {
        self.d_bar[i]
    }

    pub fn normal(&self, i: usize) -> Vec3 {
        self.normals[i]
    }

    /// World point of a correspondence endpoint.
    fn endpoint(&self, st: &SolverState, taps: &Taps, coord: NormalizedCoord) -> Vec3 {
        let (z, _) = taps.depth(&st.z);
        st.camera.rotation.apply(&coord.ray(st.camera.s)) * z + st.camera.translation()
    }

    pub fn residuals(&self, st: &SolverState) -> Residuals {
        let s = st.camera.s;
        let depth = (0..self.pixels.len())
            .map(|i| st.z[i] * self.coords[i].ray(s).norm() - self.d_bar[i])
            .collect();
        let normal = self
            .graph
            .edges
            .iter()
            .map(|&(p, q)| {
                let (p, q) = (p as usize, q as usize);
                let step = self.coords[p].ray(s) * st.z[p] - self.coords[q].ray(s) * st.z[q];
                step.dot(&self.normals[p])
            })
            .collect();
        let symmetry = self
            .pairs
            .iter()
            .map(|t| reflect(&self.endpoint(st, &t.p, t.coord_p)) - self.endpoint(st, &t.q, t.coord_q))
            .collect();
        Residuals {
            depth,
            normal,
            symmetry,
        }
    }

    /// Unweighted robust objective of given residuals.
    pub fn objective_of(&self, res: &Residuals) -> Objective {
        let depth: f64 = res.depth.iter().map(|r| r.abs()).sum();
        let normal: f64 = res.normal.iter().map(|r| r.abs()).sum();
        let symmetry: f64 = res.symmetry.iter().map(|r| r.norm()).sum();
        Objective {
            total: depth + self.tradeoffs.lambda * normal + self.tradeoffs.mu * symmetry,
            depth,
            normal,
            symmetry,
        }
    }

    pub fn objective(&self, st: &SolverState) -> Objective {
        self.objective_of(&self.residuals(st))
    }

    /// Calls `f(term, index, row)` for every Jacobian row at `st`: one per
    /// pixel, one per edge, three per correspondence term. Camera entries are
    /// always filled; callers ignore them when the camera is frozen.
    pub(crate) fn visit_rows(&self, st: &SolverState, mut f: impl FnMut(Term, usize, &Row)) {
        let s = st.camera.s;
        let rot = st.camera.rotation;
        for i in 0..self.pixels.len() {
            let a = self.coords[i].ray(s);
            let na = a.norm();
            let rho2 = self.coords[i].x.powi(2) + self.coords[i].y.powi(2);
            let mut row = Row::new(st.z[i] * na - self.d_bar[i]);
            row.push(i, na);
            row.cam[3] = st.z[i] * s * rho2 / na;
            f(Term::Depth, i, &row);
        }
        for (e, &(p, q)) in self.graph.edges.iter().enumerate() {
            let (p, q) = (p as usize, q as usize);
            let n = self.normals[p];
            let (ap, aq) = (self.coords[p].ray(s), self.coords[q].ray(s));
            let (bp, bq) = (planar(self.coords[p]), planar(self.coords[q]));
            let mut row = Row::new((ap * st.z[p] - aq * st.z[q]).dot(&n));
            row.push(p, ap.dot(&n));
            row.push(q, -aq.dot(&n));
            row.cam[3] = (bp * st.z[p] - bq * st.z[q]).dot(&n);
            f(Term::Normal, e, &row);
        }
        for (k, t) in self.pairs.iter().enumerate() {
            let (zp, dp) = t.p.depth(&st.z);
            let (zq, dq) = t.q.depth(&st.z);
            let (ap, aq) = (rot.apply(&t.coord_p.ray(s)), rot.apply(&t.coord_q.ray(s)));
            let (vp, vq) = (ap * zp, aq * zq);
            let r = reflect(&(vp + st.camera.translation())) - (vq + st.camera.translation());
            let (bp, bq) = (rot.apply(&planar(t.coord_p)), rot.apply(&planar(t.coord_q)));
            let ds = reflect(&(bp * zp)) - bq * zq;
            let pap = reflect(&ap);
            let dc = |axis: Vec3| reflect(&axis.cross(&vp)) - axis.cross(&vq);
            let (dcy, dcz) = (dc(Vector3::y()), dc(Vector3::z()));
            for comp in 0..3 {
                let mut row = Row::new(r[comp]);
                for (j, (i, _)) in t.p.iter().enumerate() {
                    row.push(i, pap[comp] * dp[j]);
                }
                for (j, (i, _)) in t.q.iter().enumerate() {
                    row.push(i, -aq[comp] * dq[j]);
                }
                row.cam = [dcy[comp], dcz[comp], if comp == 0 { -2.0 } else { 0.0 }, ds[comp]];
                f(Term::Symmetry, 3 * k + comp, &row);
            }
        }
    }
}

/// `(px, py, 0)`: derivative of the ray direction with respect to `s`.
fn planar(c: NormalizedCoord) -> Vec3 {
    Vec3::new(c.x, c.y, 0.0)
}
