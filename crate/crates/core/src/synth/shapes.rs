//! Mirror-symmetric solids as signed-distance unions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{exp_map, reflect, Vec3};

/// One part of an object, in object coordinates. Every part is paired
/// with its mirror image across `x = 0` when the shape is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Primitive {
    /// Box with half-extents along its local axes, turned by `yaw` radians
    /// about the y axis.
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
        yaw: f64,
    },
    /// Convex polygon in the xy-plane extruded over `z_min..z_max`.
    Extrusion {
        polygon: Vec<[f64; 2]>,
        z_min: f64,
        z_max: f64,
    },
    /// `(|x/a|^(2/e2) + |y/b|^(2/e2))^(e2/e1) + |z/c|^(2/e1) = 1`.
    Superellipsoid {
        center: [f64; 3],
        radii: [f64; 3],
        e1: f64,
        e2: f64,
    },
}

#[derive(Clone, Debug)]
enum Solid {
    /// Intersection of half-spaces `n . x <= d`.
    Convex { planes: Vec<(Vec3, f64)> },
    Superellipsoid {
        center: Vec3,
        radii: Vec3,
        e1: f64,
        e2: f64,
    },
}

impl Solid {
    fn mirrored(&self) -> Solid {
        match self {
            Solid::Convex { planes } => Solid::Convex {
                planes: planes.iter().map(|(n, d)| (reflect(n), *d)).collect(),
            },
            Solid::Superellipsoid {
                center,
                radii,
                e1,
                e2,
            } => Solid::Superellipsoid {
                center: reflect(center),
                radii: *radii,
                e1: *e1,
                e2: *e2,
            },
        }
    }

    fn sdf(&self, x: &Vec3) -> f64 {
        match self {
            Solid::Convex { planes } => planes
                .iter()
                .map(|(n, d)| n.dot(x) - d)
                .fold(f64::NEG_INFINITY, f64::max),
            Solid::Superellipsoid { radii, e1, .. } => {
                let f = self.inside_outside(x);
                let rmin = radii.x.min(radii.y).min(radii.z);
                (f.powf(0.5 * e1) - 1.0) * rmin
            }
        }
    }

    fn inside_outside(&self, x: &Vec3) -> f64 {
        match self {
            Solid::Superellipsoid {
                center,
                radii,
                e1,
                e2,
            } => {
                let l = x - center;
                let (a, b, c) = ((l.x / radii.x).abs(), (l.y / radii.y).abs(), (l.z / radii.z).abs());
                (a.powf(2.0 / e2) + b.powf(2.0 / e2)).powf(e2 / e1) + c.powf(2.0 / e1)
            }
            Solid::Convex { .. } => unreachable!("only superellipsoids have an inside-outside function"),
        }
    }

    /// Outward unit normal at a point on (or very near) the surface.
    fn normal(&self, x: &Vec3) -> Vec3 {
        match self {
            Solid::Convex { planes } => {
                let mut best = (f64::NEG_INFINITY, Vec3::zeros());
                for (n, d) in planes {
                    let v = n.dot(x) - d;
                    if v > best.0 {
                        best = (v, *n);
                    }
                }
                best.1
            }
            Solid::Superellipsoid {
                center,
                radii,
                e1,
                e2,
            } => {
                let l = x - center;
                let (a, b, c) = (l.x / radii.x, l.y / radii.y, l.z / radii.z);
                let pa = |v: f64, p: f64| if v == 0.0 { 0.0 } else { v.abs().powf(p) * v.signum() };
                let base = a.abs().powf(2.0 / e2) + b.abs().powf(2.0 / e2);
                let outer = if base > 1e-300 {
                    base.powf(e2 / e1 - 1.0)
                } else {
                    0.0
                };
                let g = Vec3::new(
                    2.0 / e1 * outer * pa(a, 2.0 / e2 - 1.0) / radii.x,
                    2.0 / e1 * outer * pa(b, 2.0 / e2 - 1.0) / radii.y,
                    2.0 / e1 * pa(c, 2.0 / e1 - 1.0) / radii.z,
                );
                let n = g.norm();
                if n > 0.0 {
                    g / n
                } else {
                    Vec3::new(0.0, 0.0, -1.0)
                }
            }
        }
    }

    fn is_convex(&self) -> bool {
        matches!(self, Solid::Convex { .. })
    }

    /// Exact ray parameter where the ray meets the active face, if any.
    fn plane_hit(&self, origin: &Vec3, dir: &Vec3, near: &Vec3) -> Option<f64> {
        let Solid::Convex { planes } = self else {
            return None;
        };
        let (n, d) = planes
            .iter()
            .max_by(|a, b| (a.0.dot(near) - a.1).total_cmp(&(b.0.dot(near) - b.1)))?;
        let den = n.dot(dir);
        if den.abs() < 1e-12 {
            return None;
        }
        Some((d - n.dot(origin)) / den)
    }
}

fn box_solid(center: Vec3, half: Vec3, yaw: f64) -> Result<Solid> {
    if half.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::invalid("box half-extents must be positive"));
    }
    let r = exp_map(&Vec3::new(0.0, yaw, 0.0));
    let mut planes = Vec::with_capacity(6);
    for k in 0..3 {
        let axis = r.matrix().column(k).into_owned();
        for sign in [1.0, -1.0] {
            let n = axis * sign;
            planes.push((n, n.dot(&center) + half[k]));
        }
    }
    Ok(Solid::Convex { planes })
}

fn extrusion_solid(polygon: &[[f64; 2]], z_min: f64, z_max: f64) -> Result<Solid> {
    if polygon.len() < 3 || !(z_max > z_min) {
        return Err(Error::invalid("extrusion needs >= 3 vertices and z_max > z_min"));
    }
    let area2: f64 = (0..polygon.len())
        .map(|i| {
            let a = polygon[i];
            let b = polygon[(i + 1) % polygon.len()];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    if area2.abs() < 1e-12 {
        return Err(Error::invalid("degenerate extrusion polygon"));
    }
    let ccw = area2 > 0.0;
    let mut planes = Vec::with_capacity(polygon.len() + 2);
    for i in 0..polygon.len() {
        let a = polygon[i];
        let b = polygon[(i + 1) % polygon.len()];
        let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
        let (nx, ny) = if ccw { (ey, -ex) } else { (-ey, ex) };
        let len = nx.hypot(ny);
        if len < 1e-12 {
            return Err(Error::invalid("repeated extrusion vertex"));
        }
        let n = Vec3::new(nx / len, ny / len, 0.0);
        planes.push((n, n.x * a[0] + n.y * a[1]));
    }
    for (i, a) in polygon.iter().enumerate() {
        for (n, d) in &planes {
            if n.x * a[0] + n.y * a[1] - d > 1e-9 {
                return Err(Error::invalid(format!(
                    "extrusion polygon is not convex at vertex {i}"
                )));
            }
        }
    }
    planes.push((Vec3::new(0.0, 0.0, 1.0), z_max));
    planes.push((Vec3::new(0.0, 0.0, -1.0), -z_min));
    Ok(Solid::Convex { planes })
}

impl Primitive {
    /// Radius of a sphere about the object origin containing the part.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            Primitive::Box {
                center,
                half_extents,
                ..
            } => Vec3::from(*center).norm() + Vec3::from(*half_extents).norm(),
            Primitive::Extrusion {
                polygon,
                z_min,
                z_max,
            } => {
                let z = z_min.abs().max(z_max.abs());
                polygon
                    .iter()
                    .map(|v| (v[0] * v[0] + v[1] * v[1] + z * z).sqrt())
                    .fold(0.0, f64::max)
            }
            Primitive::Superellipsoid { center, radii, .. } => {
                Vec3::from(*center).norm() + Vec3::from(*radii).norm()
            }
        }
    }

    fn solid(&self) -> Result<Solid> {
        match self {
            Primitive::Box {
                center,
                half_extents,
                yaw,
            } => box_solid(Vec3::from(*center), Vec3::from(*half_extents), *yaw),
            Primitive::Extrusion {
                polygon,
                z_min,
                z_max,
            } => extrusion_solid(polygon, *z_min, *z_max),
            Primitive::Superellipsoid {
                center,
                radii,
                e1,
                e2,
            } => {
                if radii.iter().any(|r| !(*r > 0.0)) {
                    return Err(Error::invalid("superellipsoid radii must be positive"));
                }
                if !(0.2..=1.8).contains(e1) || !(0.2..=1.8).contains(e2) {
                    return Err(Error::invalid("superellipsoid exponents must lie in [0.2, 1.8]"));
                }
                Ok(Solid::Superellipsoid {
                    center: Vec3::from(*center),
                    radii: Vec3::from(*radii),
                    e1: *e1,
                    e2: *e2,
                })
            }
        }
    }
}

/// Where a ray meets a [`Shape`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    /// Distance along the unit ray direction.
    pub t: f64,
    pub point: Vec3,
    /// Outward unit normal, world frame.
    pub normal: Vec3,
}

/// Union of primitives and their mirror twins, placed at `origin`
/// (which must lie on the mirror plane).
#[derive(Clone, Debug)]
pub struct Shape {
    solids: Vec<Solid>,
    origin: Vec3,
    radius: f64,
}

const HIT_EPS: f64 = 1e-9;

impl Shape {
    pub fn new(parts: &[Primitive], origin: Vec3) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::invalid("a shape needs at least one primitive"));
        }
        if origin.x != 0.0 {
            return Err(Error::invalid("shape origin must lie on the plane x = 0"));
        }
        let mut solids = Vec::with_capacity(2 * parts.len());
        for p in parts {
            let s = p.solid()?;
            let twin = s.mirrored();
            solids.push(s);
            solids.push(twin);
        }
        let radius = 1.01 * parts
            .iter()
            .map(Primitive::bounding_radius)
            .fold(0.0, f64::max);
        Ok(Shape {
            solids,
            origin,
            radius,
        })
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    /// Radius of a sphere about `origin` that contains the shape.
    pub fn bounding_radius(&self) -> f64 {
        self.radius
    }

    /// Signed distance bound (exact on convex faces, conservative near
    /// edges, approximate for superellipsoids).
    pub fn sdf(&self, world: &Vec3) -> f64 {
        let x = world - self.origin;
        self.solids
            .iter()
            .map(|s| s.sdf(&x))
            .fold(f64::INFINITY, f64::min)
    }

    fn closest_solid(&self, x: &Vec3) -> &Solid {
        self.solids
            .iter()
            .min_by(|a, b| a.sdf(x).total_cmp(&b.sdf(x)))
            .expect("shape has solids")
    }

    /// First intersection of the ray `origin + t dir` (`dir` unit length).
    pub fn intersect(&self, ray_origin: &Vec3, dir: &Vec3) -> Option<Hit> {
        let o = ray_origin - self.origin;
        let b = o.dot(dir);
        let c = o.norm_squared() - self.radius * self.radius;
        let disc = b * b - c;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let (t0, t1) = ((-b - sq).max(0.0), -b + sq);
        if t1 <= 0.0 {
            return None;
        }

        let scale = self.radius.max(1e-6);
        let eps = HIT_EPS * scale;
        let mut t = t0;
        let mut last_outside = t0;
        let mut found = false;
        for _ in 0..4096 {
            let x = o + dir * t;
            let d = self.solids.iter().map(|s| s.sdf(&x)).fold(f64::INFINITY, f64::min);
            if d < eps {
                found = true;
                break;
            }
            last_outside = t;
            let convex = self.closest_solid(&x).is_convex();
            let factor = if convex { 1.0 } else { 0.5 };
            t += (d * factor).max(1e-7 * scale);
            if t > t1 {
                return None;
            }
        }
        if !found {
            return None;
        }

        let near = o + dir * t;
        let solid = self.closest_solid(&near);
        let mut t_hit = t;
        if let Some(tp) = solid.plane_hit(&o, dir, &near) {
            // accept the exact face intersection when it is consistent
            // with the traced point
            if (tp - t).abs() <= 1e-4 * scale && tp >= 0.0 {
                let p = o + dir * tp;
                let d = self.solids.iter().map(|s| s.sdf(&p)).fold(f64::INFINITY, f64::min);
                if d.abs() <= 1e-9 * scale {
                    t_hit = tp;
                }
            }
        } else if !solid.is_convex() {
            // bisect on the sign of the union distance
            let (mut lo, mut hi) = (last_outside, t);
            let f = |tt: f64| {
                let p = o + dir * tt;
                self.solids.iter().map(|s| s.sdf(&p)).fold(f64::INFINITY, f64::min)
            };
            let mut step = eps;
            for _ in 0..64 {
                if f(hi) <= 0.0 || hi > t1 {
                    break;
                }
                hi += step;
                step *= 2.0;
            }
            for _ in 0..if f(hi) <= 0.0 { 80 } else { 0 } {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if f(hi) <= 0.0 {
                t_hit = 0.5 * (lo + hi);
            }
        }
        let local = o + dir * t_hit;
        let normal = self.closest_solid(&local).normal(&local);
        Some(Hit {
            t: t_hit,
            point: local + self.origin,
            normal,
        })
    }
}
