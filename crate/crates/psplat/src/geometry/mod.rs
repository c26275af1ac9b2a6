//! Camera model, projection, visibility testing, normal estimation, and
//! spatial adjacency over the primitive cloud.
//!
//! All operations here are pure functions over immutable inputs; callers may
//! invoke them concurrently across views or primitives.

mod knn;
mod normals;

pub use knn::{knn_graph, knn_indices};
pub use normals::{estimate_normals, NormalEstimate};

use crate::error::{Error, Result};
use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use std::path::PathBuf;

pub const UNIT_NORM_TOL: f64 = 1e-4;
const ROTATION_TOL: f64 = 1e-6;

/// Axis-aligned bounding box in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn of_points(points: &[Point3<f64>]) -> Self {
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for p in points {
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        Self { min, max }
    }

    /// Grows each side by `frac` of the extent, then enforces a minimum
    /// positive extent so degenerate (planar) clouds still normalize.
    pub fn expanded(&self, frac: f64) -> Self {
        let mut min = self.min;
        let mut max = self.max;
        for a in 0..3 {
            let ext = (max[a] - min[a]).max(0.0);
            let pad = (ext * frac).max(1e-3);
            min[a] -= pad;
            max[a] += pad;
        }
        Self { min, max }
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    /// Maps a world position into [0,1]^3, clamping out-of-bounds inputs.
    pub fn normalize_clamped(&self, p: &Point3<f64>) -> Vector3<f64> {
        let mut out = Vector3::zeros();
        for a in 0..3 {
            let ext = self.max[a] - self.min[a];
            let t = if ext > 0.0 { (p[a] - self.min[a]) / ext } else { 0.5 };
            out[a] = t.clamp(0.0, 1.0);
        }
        out
    }
}

/// Centers of reconstructed 3D Gaussian primitives: the universe every label
/// in the pipeline attaches to.
#[derive(Debug, Clone)]
pub struct PrimitiveCloud {
    positions: Vec<Point3<f64>>,
    normals: Option<Vec<Vector3<f64>>>,
    colors: Option<Vec<[f32; 3]>>,
}

impl PrimitiveCloud {
    pub fn new(positions: Vec<Point3<f64>>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Config("primitive cloud must contain at least one point".into()));
        }
        for (i, p) in positions.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::Config(format!("non-finite coordinate at primitive {i}")));
            }
        }
        Ok(Self {
            positions,
            normals: None,
            colors: None,
        })
    }

    pub fn with_normals(mut self, normals: Vec<Vector3<f64>>) -> Result<Self> {
        if normals.len() != self.positions.len() {
            return Err(Error::Config(format!(
                "normal count {} != position count {}",
                normals.len(),
                self.positions.len()
            )));
        }
        for (i, n) in normals.iter().enumerate() {
            if (n.norm() - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::Config(format!(
                    "normal {i} has norm {:.6}, expected unit length",
                    n.norm()
                )));
            }
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn with_colors(mut self, colors: Vec<[f32; 3]>) -> Result<Self> {
        if colors.len() != self.positions.len() {
            return Err(Error::Config("color count mismatch".into()));
        }
        self.colors = Some(colors);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point3<f64>] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> Point3<f64> {
        self.positions[i]
    }

    pub fn normals(&self) -> Option<&[Vector3<f64>]> {
        self.normals.as_deref()
    }

    pub fn colors(&self) -> Option<&[[f32; 3]]> {
        self.colors.as_deref()
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::of_points(&self.positions)
    }

    /// Applies a rigid transform to positions and normals (used by the
    /// pose-equivariance tests).
    pub fn transformed(&self, t: &Matrix4<f64>) -> Self {
        let rot = t.fixed_view::<3, 3>(0, 0).into_owned();
        let positions = self
            .positions
            .iter()
            .map(|p| Point3::from(t.transform_point(p)))
            .collect();
        let normals = self
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|n| (rot * n).normalize()).collect());
        Self {
            positions,
            normals,
            colors: self.colors.clone(),
        }
    }
}

/// Depth raster in meters; 0.0 marks an invalid (empty) pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub meters: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, meters: Vec<f64>) -> Result<Self> {
        if meters.len() != (width as usize) * (height as usize) {
            return Err(Error::Config("depth buffer size mismatch".into()));
        }
        Ok(Self { width, height, meters })
    }

    /// Nearest-pixel depth; None when out of bounds or invalid (0).
    pub fn sample_nearest(&self, u: f64, v: f64) -> Option<f64> {
        let x = u.round();
        let y = v.round();
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return None;
        }
        let d = self.meters[y as usize * self.width as usize + x as usize];
        (d > 0.0).then_some(d)
    }
}

/// A posed pinhole view. `world_to_camera` maps world points into a camera
/// frame with +z forward, +x right, +y down.
#[derive(Debug, Clone)]
pub struct CameraView {
    pub view_id: u32,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub world_to_camera: Matrix4<f64>,
    pub depth: Option<DepthMap>,
    pub depth_file: Option<PathBuf>,
    pub feature_file: Option<PathBuf>,
    pub mask_file: Option<PathBuf>,
}

/// Result of projecting a world point through a view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelDepth {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl CameraView {
    pub fn validate(&self) -> Result<()> {
        if self.width < 1 || self.height < 1 {
            return Err(Error::Config(format!(
                "view {}: image size {}x{} invalid",
                self.view_id, self.width, self.height
            )));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Config(format!(
                "view {}: focal lengths must be positive",
                self.view_id
            )));
        }
        let r = self.rotation();
        let rtr = r.transpose() * r;
        if (rtr - Matrix3::identity()).norm() > ROTATION_TOL * 10.0 {
            return Err(Error::Config(format!(
                "view {}: rotation block is not orthonormal",
                self.view_id
            )));
        }
        if (r.determinant() - 1.0).abs() > ROTATION_TOL * 10.0 {
            return Err(Error::Config(format!(
                "view {}: rotation determinant {:.6} != +1",
                self.view_id,
                r.determinant()
            )));
        }
        if let Some(d) = &self.depth {
            if d.width != self.width || d.height != self.height {
                return Err(Error::Config(format!(
                    "view {}: depth map {}x{} does not match view {}x{}",
                    self.view_id, d.width, d.height, self.width, self.height
                )));
            }
        }
        Ok(())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.world_to_camera.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.world_to_camera.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        let r = self.rotation();
        Point3::from(-(r.transpose() * self.translation()))
    }

    pub fn to_camera_frame(&self, p: &Point3<f64>) -> Point3<f64> {
        self.world_to_camera.transform_point(p)
    }

    /// Continuous pixel coordinates lie inside the frame when both axes are
    /// within [0, size-1]; pixel centers sit at integer coordinates.
    pub fn in_frame(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= (self.width - 1) as f64 && v <= (self.height - 1) as f64
    }
}

/// Pinhole projection. Returns None (behind-camera marker) iff the camera-
/// frame depth is <= 0; out-of-frame pixels are returned and filtered by
/// callers.
pub fn project(point: &Point3<f64>, cam: &CameraView) -> Option<PixelDepth> {
    let pc = cam.to_camera_frame(point);
    if pc.z <= 0.0 {
        return None;
    }
    let inv_z = 1.0 / pc.z;
    Some(PixelDepth {
        u: cam.fx * pc.x * inv_z + cam.cx,
        v: cam.fy * pc.y * inv_z + cam.cy,
        depth: pc.z,
    })
}

/// Projection surviving the visibility test: inside the frame with positive
/// depth, and, when the view carries a depth map with a valid sample at the
/// projected pixel, within `depth_tol` of it. Invalid depth pixels (0) carry
/// no occlusion evidence and fall back to the frustum rule.
pub fn visible_projection(
    point: &Point3<f64>,
    cam: &CameraView,
    depth_tol: f64,
) -> Option<PixelDepth> {
    let pd = project(point, cam)?;
    if !cam.in_frame(pd.u, pd.v) {
        return None;
    }
    if let Some(dm) = &cam.depth {
        if let Some(d) = dm.sample_nearest(pd.u, pd.v) {
            if (pd.depth - d).abs() > depth_tol {
                return None;
            }
        }
    }
    Some(pd)
}

/// Per-primitive visibility mask over the cloud.
pub fn visibility(cloud: &PrimitiveCloud, cam: &CameraView, depth_tol: f64) -> Vec<bool> {
    assert!(depth_tol > 0.0, "depth_tol must be positive");
    cloud
        .positions()
        .iter()
        .map(|p| visible_projection(p, cam, depth_tol).is_some())
        .collect()
}

/// Symmetric per-primitive neighbor lists (no self-loops), the implicit
/// neighborhood structure the graph-cut and clustering stages traverse.
#[derive(Debug, Clone)]
pub struct AdjacencyGraph {
    neighbors: Vec<Vec<u32>>,
    edge_count: usize,
}

impl AdjacencyGraph {
    /// Builds from directed pairs; symmetrizes by union, dedups, drops loops.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for (i, j) in pairs {
            if i == j {
                continue;
            }
            neighbors[i as usize].push(j);
            neighbors[j as usize].push(i);
        }
        let mut edge_count = 0;
        for list in neighbors.iter_mut() {
            list.sort_unstable();
            list.dedup();
            edge_count += list.len();
        }
        Self {
            neighbors,
            edge_count: edge_count / 2,
        }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i]
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Undirected edges (i, j) with i < j in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.neighbors.iter().enumerate().flat_map(|(i, list)| {
            list.iter()
                .filter(move |&&j| (i as u32) < j)
                .map(move |&j| (i as u32, j))
        })
    }

    pub fn is_symmetric(&self) -> bool {
        self.neighbors.iter().enumerate().all(|(i, list)| {
            list.iter()
                .all(|&j| self.neighbors[j as usize].binary_search(&(i as u32)).is_ok())
        })
    }
}
