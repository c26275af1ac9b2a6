//! Surface samplers for the synthetic object shapes, with analytic outward
//! normals.

use nalgebra::{Point3, Vector3};
use rand::RngExt;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Box,
    Cylinder,
    Plane,
}

impl ShapeKind {
    pub fn class_name(self) -> &'static str {
        match self {
            ShapeKind::Box => "box",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Plane => "plane",
        }
    }
}

/// A placed object: shape, footprint, vertical extent, yaw about +z.
#[derive(Debug, Clone)]
pub struct PlacedObject {
    pub kind: ShapeKind,
    pub center_xy: [f64; 2],
    pub base_z: f64,
    pub yaw: f64,
    /// box: half extents x/y; cylinder: radius (both); plane: half width /
    /// half thickness
    pub half_x: f64,
    pub half_y: f64,
    pub height: f64,
}

impl PlacedObject {
    /// Conservative footprint radius for overlap rejection.
    pub fn footprint_radius(&self) -> f64 {
        (self.half_x * self.half_x + self.half_y * self.half_y).sqrt()
    }

    fn to_world(&self, local: Vector3<f64>, normal: Vector3<f64>) -> (Point3<f64>, Vector3<f64>) {
        let (s, c) = self.yaw.sin_cos();
        let rot = |v: Vector3<f64>| Vector3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z);
        let p = rot(local);
        (
            Point3::new(
                p.x + self.center_xy[0],
                p.y + self.center_xy[1],
                p.z + self.base_z,
            ),
            rot(normal),
        )
    }

    /// Samples `count` surface points (bottom faces are skipped; they rest
    /// on the floor).
    pub fn sample_surface(
        &self,
        count: usize,
        rng: &mut ChaCha12Rng,
    ) -> (Vec<Point3<f64>>, Vec<Vector3<f64>>) {
        let mut points = Vec::with_capacity(count);
        let mut normals = Vec::with_capacity(count);
        match self.kind {
            ShapeKind::Box => {
                let (hx, hy, h) = (self.half_x, self.half_y, self.height);
                // areas: 2 x-sides, 2 y-sides, top
                let areas = [
                    2.0 * hy * h,
                    2.0 * hy * h,
                    2.0 * hx * h,
                    2.0 * hx * h,
                    4.0 * hx * hy,
                ];
                let total: f64 = areas.iter().sum();
                for _ in 0..count {
                    let mut pick = rng.random::<f64>() * total;
                    let mut face = 0usize;
                    for (i, a) in areas.iter().enumerate() {
                        if pick < *a {
                            face = i;
                            break;
                        }
                        pick -= a;
                    }
                    let u = rng.random::<f64>() * 2.0 - 1.0;
                    let v = rng.random::<f64>();
                    let (local, normal) = match face {
                        0 => (Vector3::new(hx, u * hy, v * h), Vector3::x()),
                        1 => (Vector3::new(-hx, u * hy, v * h), -Vector3::x()),
                        2 => (Vector3::new(u * hx, hy, v * h), Vector3::y()),
                        3 => (Vector3::new(u * hx, -hy, v * h), -Vector3::y()),
                        _ => (
                            Vector3::new(u * hx, (v * 2.0 - 1.0) * hy, h),
                            Vector3::z(),
                        ),
                    };
                    let (p, n) = self.to_world(local, normal);
                    points.push(p);
                    normals.push(n);
                }
            }
            ShapeKind::Cylinder => {
                let r = self.half_x;
                let h = self.height;
                let lateral = 2.0 * std::f64::consts::PI * r * h;
                let top = std::f64::consts::PI * r * r;
                for _ in 0..count {
                    if rng.random::<f64>() * (lateral + top) < lateral {
                        let th = rng.random::<f64>() * std::f64::consts::TAU;
                        let z = rng.random::<f64>() * h;
                        let n = Vector3::new(th.cos(), th.sin(), 0.0);
                        let (p, n) = self.to_world(n * r + Vector3::new(0.0, 0.0, z), n);
                        points.push(p);
                        normals.push(n);
                    } else {
                        // uniform disc
                        let th = rng.random::<f64>() * std::f64::consts::TAU;
                        let rr = r * rng.random::<f64>().sqrt();
                        let local = Vector3::new(rr * th.cos(), rr * th.sin(), h);
                        let (p, n) = self.to_world(local, Vector3::z());
                        points.push(p);
                        normals.push(n);
                    }
                }
            }
            ShapeKind::Plane => {
                // upright thin board: both large faces
                let (hx, hy, h) = (self.half_x, self.half_y, self.height);
                for _ in 0..count {
                    let u = rng.random::<f64>() * 2.0 - 1.0;
                    let v = rng.random::<f64>();
                    let side = if rng.random::<f64>() < 0.5 { 1.0 } else { -1.0 };
                    let local = Vector3::new(u * hx, side * hy, v * h);
                    let (p, n) = self.to_world(local, Vector3::y() * side);
                    points.push(p);
                    normals.push(n);
                }
            }
        }
        (points, normals)
    }
}

/// Uniform samples over an axis-aligned rectangle with a fixed normal,
/// used for floors and walls.
pub fn sample_rect(
    origin: Point3<f64>,
    edge_u: Vector3<f64>,
    edge_v: Vector3<f64>,
    normal: Vector3<f64>,
    count: usize,
    rng: &mut ChaCha12Rng,
) -> (Vec<Point3<f64>>, Vec<Vector3<f64>>) {
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let u = rng.random::<f64>();
        let v = rng.random::<f64>();
        points.push(origin + edge_u * u + edge_v * v);
    }
    let normals = vec![normal; count];
    (points, normals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn box_points_on_surface_with_outward_normals() {
        let obj = PlacedObject {
            kind: ShapeKind::Box,
            center_xy: [1.0, -0.5],
            base_z: 0.0,
            yaw: 0.3,
            half_x: 0.2,
            half_y: 0.3,
            height: 0.5,
            };
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let (points, normals) = obj.sample_surface(500, &mut rng);
        for (p, n) in points.iter().zip(&normals) {
            assert!((n.norm() - 1.0).abs() < 1e-12);
            assert!(p.z >= -1e-12 && p.z <= 0.5 + 1e-12);
            // outward: stepping along the normal leaves the footprint
            let inside = |q: &Point3<f64>| {
                let d = q - Point3::new(1.0, -0.5, 0.0);
                let (s, c) = 0.3f64.sin_cos();
                let lx = c * d.x + s * d.y;
                let ly = -s * d.x + c * d.y;
                lx.abs() <= 0.2 + 1e-9 && ly.abs() <= 0.3 + 1e-9 && q.z <= 0.5 + 1e-9
            };
            let stepped = p + n * 0.01;
            assert!(!inside(&stepped) || (p.z - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn cylinder_lateral_normals_are_radial() {
        let obj = PlacedObject {
            kind: ShapeKind::Cylinder,
            center_xy: [0.0, 0.0],
            base_z: 0.0,
            yaw: 0.0,
            half_x: 0.25,
            half_y: 0.25,
            height: 0.6,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let (points, normals) = obj.sample_surface(400, &mut rng);
        for (p, n) in points.iter().zip(&normals) {
            if p.z < 0.6 - 1e-9 {
                let radial = Vector3::new(p.x, p.y, 0.0).normalize();
                assert!(n.dot(&radial) > 0.999);
            } else {
                assert_eq!(*n, Vector3::z());
            }
        }
    }
}
