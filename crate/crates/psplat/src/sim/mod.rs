//! Deterministic synthetic scene generation: primitive clouds with ground
//! truth, camera rings, depth/mask/feature rasters, and query embeddings.
//!
//! Every random draw comes from a stream seeded by (seed, purpose, knob
//! bits), so regenerating with one noise knob changed reproduces everything
//! else byte-identically, and the same config always produces the same
//! scene.

mod render;
mod shapes;

pub use render::{depth_map_from, feature_map_from, gaussian, mask_from, rasterize};
pub use shapes::{PlacedObject, ShapeKind};

use crate::cluster::MaskMap;
use crate::error::{Error, Result};
use crate::feat::FeatureMatrix;
use crate::fusion::FeatureMap;
use crate::geometry::{CameraView, PrimitiveCloud};
use crate::io;
use crate::metrics::GroundTruth;
use crate::panoptic::{ClassKind, QueryEntry, QuerySet};
use nalgebra::{DMatrix, Matrix4, Point3, Vector3};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    /// room x size, y size, height (meters); floor at z = 0, centered in xy
    pub room_extent: [f64; 3],
    pub object_count: usize,
    /// shape kinds cycled over the objects
    pub shapes: Vec<ShapeKind>,
    pub points_per_object: usize,
    pub stuff_points_per_sqm: f64,
    pub camera_count: usize,
    pub ring_radius: f64,
    pub ring_height: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub fov_deg: f64,
    pub feature_dim: usize,
    /// feature noise: per-dimension Gaussian sigma before renormalization
    pub sigma_f: f64,
    /// per view, per object probability of splitting its mask id in two
    pub rho_m: f64,
    /// normal noise sigma (direction perturbation before renormalization)
    pub sigma_n: f64,
    /// generate floor + walls (stuff); without them objects float in a
    /// vertical stack with wide gaps
    pub include_room: bool,
    /// blend embeddings toward a common direction (stress test)
    pub correlated_embeddings: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            room_extent: [6.0, 6.0, 3.0],
            object_count: 5,
            shapes: vec![ShapeKind::Box, ShapeKind::Cylinder, ShapeKind::Plane],
            points_per_object: 600,
            stuff_points_per_sqm: 55.0,
            camera_count: 24,
            ring_radius: 2.55,
            ring_height: 1.7,
            image_width: 200,
            image_height: 150,
            fov_deg: 78.0,
            feature_dim: 16,
            sigma_f: 0.1,
            rho_m: 0.3,
            sigma_n: 0.0,
            include_room: true,
            correlated_embeddings: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.object_count < 1
            || self.points_per_object < 1
            || self.camera_count < 1
            || self.shapes.is_empty()
        {
            return Err(Error::Config("simulation counts must be >= 1".into()));
        }
        if self.sigma_f < 0.0 || self.sigma_n < 0.0 || !(0.0..=1.0).contains(&self.rho_m) {
            return Err(Error::Config("noise knobs out of range".into()));
        }
        if self.room_extent.iter().any(|&e| e <= 0.0) {
            return Err(Error::Config("room extent must be positive".into()));
        }
        let classes = self.class_names().len();
        if self.feature_dim < classes {
            return Err(Error::Config(format!(
                "feature_dim {} < {} classes: orthonormal embeddings impossible",
                self.feature_dim, classes
            )));
        }
        Ok(())
    }

    /// Thing classes (shape kinds in first-use order), then stuff classes.
    pub fn class_names(&self) -> Vec<(String, ClassKind)> {
        let mut names: Vec<(String, ClassKind)> = Vec::new();
        for o in 0..self.object_count {
            let kind = self.shapes[o % self.shapes.len()];
            if !names.iter().any(|(n, _)| n == kind.class_name()) {
                names.push((kind.class_name().to_string(), ClassKind::Thing));
            }
        }
        if self.include_room {
            names.push(("floor".to_string(), ClassKind::Stuff));
            names.push(("wall".to_string(), ClassKind::Stuff));
        }
        names
    }
}

#[derive(Debug, Clone)]
pub struct SimView {
    pub camera: CameraView,
    pub feature_map: FeatureMap,
    pub mask: MaskMap,
}

/// A fully rendered synthetic scene with ground truth.
#[derive(Debug, Clone)]
pub struct Scene {
    pub config: SimConfig,
    pub cloud: PrimitiveCloud,
    pub gt: GroundTruth,
    pub queries: QuerySet,
    pub views: Vec<SimView>,
    /// number of thing objects (GT instances 0..n_objects)
    pub n_objects: usize,
    /// total GT instances including stuff regions
    pub n_instances: usize,
}

fn mix(seed: u64, tag: &str, bits: u64) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for b in tag.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= bits;
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Orthonormal class embeddings via QR of a seeded Gaussian matrix.
pub fn class_embeddings(
    dim: usize,
    n_classes: usize,
    seed: u64,
    correlated: bool,
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha12Rng::seed_from_u64(mix(seed, "embeddings", 0));
    let m = DMatrix::from_fn(dim, n_classes, |_, _| gaussian(&mut rng));
    let qr = m.qr();
    let q = qr.q();
    let mut out: Vec<Vec<f64>> = (0..n_classes)
        .map(|c| (0..dim).map(|d| q[(d, c)]).collect())
        .collect();
    if correlated {
        let common: Vec<f64> = (0..dim)
            .map(|d| out.iter().map(|e| e[d]).sum::<f64>())
            .collect();
        for e in out.iter_mut() {
            for (v, &cv) in e.iter_mut().zip(&common) {
                *v = 0.7 * *v + 0.3 * cv;
            }
            crate::feat::normalize(e, 1e-12);
        }
    }
    out
}

/// Camera at `eye` looking at `target`: +z forward, +x right, +y down in
/// the camera frame, world up +z.
pub fn look_at_camera(
    view_id: u32,
    eye: Point3<f64>,
    target: Point3<f64>,
    width: u32,
    height: u32,
    fov_deg: f64,
) -> CameraView {
    let fwd = (target - eye).normalize();
    let up = Vector3::z();
    let x_cam = fwd.cross(&up).normalize();
    let y_cam = fwd.cross(&x_cam); // = -(x_cam x fwd): points down for up=+z
    let mut w2c = Matrix4::identity();
    for a in 0..3 {
        w2c[(0, a)] = x_cam[a];
        w2c[(1, a)] = y_cam[a];
        w2c[(2, a)] = fwd[a];
    }
    let r = w2c.fixed_view::<3, 3>(0, 0).into_owned();
    let t = -(r * eye.coords);
    for a in 0..3 {
        w2c[(a, 3)] = t[a];
    }
    let fx = width as f64 / 2.0 / (fov_deg.to_radians() / 2.0).tan();
    CameraView {
        view_id,
        width,
        height,
        fx,
        fy: fx,
        cx: (width as f64 - 1.0) / 2.0,
        cy: (height as f64 - 1.0) / 2.0,
        world_to_camera: w2c,
        depth: None,
        depth_file: None,
        feature_file: None,
        mask_file: None,
    }
}

fn place_objects(cfg: &SimConfig, rng: &mut ChaCha12Rng) -> Result<Vec<PlacedObject>> {
    let mut placed: Vec<PlacedObject> = Vec::with_capacity(cfg.object_count);
    if cfg.include_room {
        let placement_radius =
            (cfg.room_extent[0].min(cfg.room_extent[1]) / 2.0 - 0.9).min(cfg.ring_radius - 0.9);
        for o in 0..cfg.object_count {
            let kind = cfg.shapes[o % cfg.shapes.len()];
            let mut attempts = 0usize;
            loop {
                attempts += 1;
                if attempts > 1000 {
                    return Err(Error::Pipeline(format!(
                        "object {o}: no non-overlapping placement after 1000 attempts"
                    )));
                }
                let candidate = random_object(kind, rng, placement_radius);
                let ok = placed.iter().all(|p| {
                    let dx = p.center_xy[0] - candidate.center_xy[0];
                    let dy = p.center_xy[1] - candidate.center_xy[1];
                    (dx * dx + dy * dy).sqrt()
                        > p.footprint_radius() + candidate.footprint_radius() + 0.25
                });
                if ok {
                    placed.push(candidate);
                    break;
                }
            }
        }
    } else {
        // floating vertical stack with wide gaps: silhouettes never overlap
        for o in 0..cfg.object_count {
            let kind = cfg.shapes[o % cfg.shapes.len()];
            let mut obj = random_object(kind, rng, 0.0);
            obj.center_xy = [0.0, 0.0];
            obj.base_z = o as f64 * STACK_GAP;
            placed.push(obj);
        }
    }
    Ok(placed)
}

const STACK_GAP: f64 = 2.5;

fn random_object(kind: ShapeKind, rng: &mut ChaCha12Rng, placement_radius: f64) -> PlacedObject {
    let r = placement_radius * rng.random::<f64>().sqrt();
    let th = rng.random::<f64>() * std::f64::consts::TAU;
    let yaw = rng.random::<f64>() * std::f64::consts::TAU;
    let (half_x, half_y, height) = match kind {
        ShapeKind::Box => (
            0.18 + rng.random::<f64>() * 0.17,
            0.18 + rng.random::<f64>() * 0.17,
            0.35 + rng.random::<f64>() * 0.35,
        ),
        ShapeKind::Cylinder => {
            let radius = 0.15 + rng.random::<f64>() * 0.15;
            (radius, radius, 0.35 + rng.random::<f64>() * 0.35)
        }
        ShapeKind::Plane => (
            0.25 + rng.random::<f64>() * 0.2,
            0.015,
            0.45 + rng.random::<f64>() * 0.3,
        ),
    };
    PlacedObject {
        kind,
        center_xy: [r * th.cos(), r * th.sin()],
        base_z: 0.0,
        yaw,
        half_x,
        half_y,
        height,
    }
}

/// Generates the complete scene for a config. Deterministic: the same
/// config yields byte-identical outputs.
pub fn generate(cfg: &SimConfig) -> Result<Scene> {
    cfg.validate()?;
    let class_list = cfg.class_names();
    let n_classes = class_list.len();
    let embeddings = class_embeddings(
        cfg.feature_dim,
        n_classes,
        cfg.seed,
        cfg.correlated_embeddings,
    );

    let class_index = |name: &str| class_list.iter().position(|(n, _)| n == name).unwrap() as i32;

    // geometry stream: placement + surface sampling
    let mut geo_rng = ChaCha12Rng::seed_from_u64(mix(cfg.seed, "geometry", 0));
    let objects = place_objects(cfg, &mut geo_rng)?;

    let mut positions: Vec<Point3<f64>> = Vec::new();
    let mut normals: Vec<Vector3<f64>> = Vec::new();
    let mut class_of: Vec<i32> = Vec::new();
    let mut instance_of: Vec<i32> = Vec::new();

    for (o, obj) in objects.iter().enumerate() {
        let (pts, nrm) = obj.sample_surface(cfg.points_per_object, &mut geo_rng);
        let class = class_index(obj.kind.class_name());
        for (p, n) in pts.into_iter().zip(nrm) {
            positions.push(p);
            normals.push(n);
            class_of.push(class);
            instance_of.push(o as i32);
        }
    }

    let n_objects = objects.len();
    let mut n_instances = n_objects;
    if cfg.include_room {
        let [rx, ry, rz] = cfg.room_extent;
        let floor_class = class_index("floor");
        let wall_class = class_index("wall");
        let mut add_rect = |origin: Point3<f64>,
                            eu: Vector3<f64>,
                            ev: Vector3<f64>,
                            n: Vector3<f64>,
                            class: i32,
                            inst: i32,
                            rng: &mut ChaCha12Rng| {
            let area = eu.norm() * ev.norm();
            let count = (area * cfg.stuff_points_per_sqm).ceil() as usize;
            let (pts, nrm) = shapes::sample_rect(origin, eu, ev, n, count, rng);
            for (p, nn) in pts.into_iter().zip(nrm) {
                positions.push(p);
                normals.push(nn);
                class_of.push(class);
                instance_of.push(inst);
            }
        };
        let (hx, hy) = (rx / 2.0, ry / 2.0);
        // floor
        add_rect(
            Point3::new(-hx, -hy, 0.0),
            Vector3::new(rx, 0.0, 0.0),
            Vector3::new(0.0, ry, 0.0),
            Vector3::z(),
            floor_class,
            n_instances as i32,
            &mut geo_rng,
        );
        n_instances += 1;
        // four walls, normals inward
        let walls = [
            (
                Point3::new(-hx, -hy, 0.0),
                Vector3::new(rx, 0.0, 0.0),
                Vector3::y(),
            ),
            (
                Point3::new(-hx, hy, 0.0),
                Vector3::new(rx, 0.0, 0.0),
                -Vector3::y(),
            ),
            (
                Point3::new(-hx, -hy, 0.0),
                Vector3::new(0.0, ry, 0.0),
                Vector3::x(),
            ),
            (
                Point3::new(hx, -hy, 0.0),
                Vector3::new(0.0, ry, 0.0),
                -Vector3::x(),
            ),
        ];
        for (origin, edge, normal) in walls {
            add_rect(
                origin,
                edge,
                Vector3::new(0.0, 0.0, rz),
                normal,
                wall_class,
                n_instances as i32,
                &mut geo_rng,
            );
            n_instances += 1;
        }
    }

    // normal noise stream keyed by sigma_n so other knobs leave normals be
    if cfg.sigma_n > 0.0 {
        let mut nrng = ChaCha12Rng::seed_from_u64(mix(cfg.seed, "normals", cfg.sigma_n.to_bits()));
        for n in normals.iter_mut() {
            let g = Vector3::new(
                gaussian(&mut nrng),
                gaussian(&mut nrng),
                gaussian(&mut nrng),
            );
            *n = (*n + g * cfg.sigma_n).normalize();
        }
    }

    // round through f32 so the in-memory cloud equals a PLY round trip
    for p in positions.iter_mut() {
        *p = Point3::new(p.x as f32 as f64, p.y as f32 as f64, p.z as f32 as f64);
    }
    for n in normals.iter_mut() {
        *n = Vector3::new(n.x as f32 as f64, n.y as f32 as f64, n.z as f32 as f64).normalize();
    }

    let cloud = PrimitiveCloud::new(positions)?.with_normals(normals)?;

    // cameras on a ring
    let (target, ring_z, ring_radius) = if cfg.include_room {
        (Point3::new(0.0, 0.0, 0.55), cfg.ring_height, cfg.ring_radius)
    } else {
        let mid = (cfg.object_count as f64 - 1.0) * STACK_GAP / 2.0;
        (
            Point3::new(0.0, 0.0, mid),
            mid + 0.8,
            cfg.ring_radius.max(6.0),
        )
    };
    let mut cameras: Vec<CameraView> = (0..cfg.camera_count)
        .map(|k| {
            let th = k as f64 / cfg.camera_count as f64 * std::f64::consts::TAU;
            look_at_camera(
                k as u32,
                Point3::new(ring_radius * th.cos(), ring_radius * th.sin(), ring_z),
                target,
                cfg.image_width,
                cfg.image_height,
                cfg.fov_deg,
            )
        })
        .collect();

    // per-view rasters, each with knob-keyed streams
    let mut views = Vec::with_capacity(cameras.len());
    for cam in cameras.iter_mut() {
        let winners = rasterize(&cloud, cam);
        cam.depth = Some(depth_map_from(&winners));
        let mut frng = ChaCha12Rng::seed_from_u64(mix(
            cfg.seed,
            "features",
            cfg.sigma_f.to_bits() ^ u64::from(cam.view_id),
        ));
        let feature_map = feature_map_from(
            &winners,
            &class_of,
            &embeddings,
            cfg.feature_dim,
            cfg.sigma_f,
            &mut frng,
        );
        let mut mrng = ChaCha12Rng::seed_from_u64(mix(
            cfg.seed,
            "masks",
            cfg.rho_m.to_bits() ^ u64::from(cam.view_id),
        ));
        let mask = mask_from(
            &winners,
            &instance_of,
            n_objects,
            n_instances,
            cfg.rho_m,
            &mut mrng,
        );
        views.push(SimView {
            camera: cam.clone(),
            feature_map,
            mask,
        });
    }

    let kinds: Vec<ClassKind> = class_list.iter().map(|&(_, k)| k).collect();
    let gt = GroundTruth::new(class_of, instance_of, kinds)?;
    let queries = QuerySet::new(
        class_list
            .iter()
            .zip(&embeddings)
            .map(|((name, kind), e)| QueryEntry {
                name: name.clone(),
                kind: *kind,
                embedding: e.clone(),
            })
            .collect(),
    )?;

    Ok(Scene {
        config: cfg.clone(),
        cloud,
        gt,
        queries,
        views,
        n_objects,
        n_instances,
    })
}

/// Regenerates with modified noise knobs; geometry and the untouched
/// rasters reproduce byte-identically because every stream is keyed by its
/// own knob.
pub fn perturb(cfg: &SimConfig, sigma_f: f64, rho_m: f64, sigma_n: f64) -> Result<Scene> {
    let mut c = cfg.clone();
    c.sigma_f = sigma_f;
    c.rho_m = rho_m;
    c.sigma_n = sigma_n;
    generate(&c)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneManifest {
    pub cloud: String,
    pub cameras: String,
    pub queries: String,
    pub gt: String,
    pub views: Vec<ManifestView>,
    pub config: SimConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestView {
    pub view_id: u32,
    pub depth: String,
    pub features: String,
    pub mask: String,
}

impl Scene {
    /// Writes every scene artifact into `dir` and returns the manifest.
    pub fn save(&self, dir: &Path) -> Result<SceneManifest> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::ply::save_cloud(&dir.join("cloud.ply"), &self.cloud)?;

        let mut cams = Vec::with_capacity(self.views.len());
        let mut manifest_views = Vec::with_capacity(self.views.len());
        for view in &self.views {
            let id = view.camera.view_id;
            let depth_name = format!("depth_{id:03}.png");
            let fmap_name = format!("fmap_{id:03}.bin");
            let mask_name = format!("mask_{id:03}.png");
            io::raster::save_depth_png(
                &dir.join(&depth_name),
                view.camera
                    .depth
                    .as_ref()
                    .expect("generated views carry depth"),
            )?;
            io::fmap::save_feature_map(&dir.join(&fmap_name), &view.feature_map)?;
            io::raster::save_mask_png(&dir.join(&mask_name), &view.mask)?;
            let mut cam = view.camera.clone();
            cam.depth = None;
            cam.depth_file = Some(PathBuf::from(&depth_name));
            cam.feature_file = Some(PathBuf::from(&fmap_name));
            cam.mask_file = Some(PathBuf::from(&mask_name));
            cams.push(cam);
            manifest_views.push(ManifestView {
                view_id: id,
                depth: depth_name,
                features: fmap_name,
                mask: mask_name,
            });
        }
        io::cameras::save_cameras(&dir.join("cameras.json"), &cams)?;
        io::part::save_queries(&dir.join("queries.json"), &self.queries)?;
        io::part::save_pano(&dir.join("gt.pano"), &self.gt.instance_of, &self.gt.class_of)?;

        let manifest = SceneManifest {
            cloud: "cloud.ply".into(),
            cameras: "cameras.json".into(),
            queries: "queries.json".into(),
            gt: "gt.pano".into(),
            views: manifest_views,
            config: self.config.clone(),
        };
        let json = serde_json::to_vec_pretty(&manifest)
            .map_err(|e| Error::Pipeline(format!("manifest serialization: {e}")))?;
        io::atomic_write(&dir.join("scene_manifest.json"), &json)?;
        Ok(manifest)
    }
}

/// Coplanar wall with an inset door: identical normals, orthogonal class
/// features. Language-guided cuts must keep the door separate; the
/// normal-only ablation merges it into the wall.
pub struct AblationScene {
    pub cloud: PrimitiveCloud,
    pub features: FeatureMatrix,
    pub confidences: Vec<f64>,
    pub is_door: Vec<bool>,
}

pub fn wall_with_door(seed: u64, dim: usize) -> AblationScene {
    assert!(dim >= 2);
    let mut rng = ChaCha12Rng::seed_from_u64(mix(seed, "wall_door", 0));
    let mut positions = Vec::new();
    let mut is_door = Vec::new();
    let step = 0.05;
    let mut z = 0.0;
    while z <= 2.4 {
        let mut x = -2.0;
        while x <= 2.0 {
            let jx = (rng.random::<f64>() - 0.5) * step * 0.4;
            let jz = (rng.random::<f64>() - 0.5) * step * 0.4;
            positions.push(Point3::new(x + jx, 0.0, z + jz));
            is_door.push(x.abs() <= 0.4 && z <= 2.0);
            x += step;
        }
        z += step;
    }
    let n = positions.len();
    let normals = vec![Vector3::y(); n];
    let embeddings = class_embeddings(dim, 2, seed, false);
    let mut features = FeatureMatrix::zeros(n, dim);
    for (i, &door) in is_door.iter().enumerate() {
        features.set_row(i, &embeddings[usize::from(door)]);
    }
    AblationScene {
        cloud: PrimitiveCloud::new(positions)
            .unwrap()
            .with_normals(normals)
            .unwrap(),
        features,
        confidences: vec![1.0; n],
        is_door,
    }
}

/// Two perpendicular planes sharing an edge, constant feature: the cuts
/// must produce exactly two super-primitives.
pub struct DihedralScene {
    pub cloud: PrimitiveCloud,
    pub features: FeatureMatrix,
    pub confidences: Vec<f64>,
    pub on_first_plane: Vec<bool>,
}

pub fn dihedral_scene(seed: u64, dim: usize) -> DihedralScene {
    let mut rng = ChaCha12Rng::seed_from_u64(mix(seed, "dihedral", 0));
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut on_first = Vec::new();
    let step = 0.05;
    let jitter = |rng: &mut ChaCha12Rng| (rng.random::<f64>() - 0.5) * step * 0.4;
    for i in 0..40 {
        for j in 0..24 {
            let (u, v) = (i as f64 * step, j as f64 * step);
            positions.push(Point3::new(u + jitter(&mut rng), v + jitter(&mut rng), 0.0));
            normals.push(Vector3::z());
            on_first.push(true);
        }
    }
    for i in 0..40 {
        for j in 1..24 {
            let (u, v) = (i as f64 * step, j as f64 * step);
            positions.push(Point3::new(
                u + jitter(&mut rng),
                0.0,
                -v + jitter(&mut rng),
            ));
            normals.push(Vector3::y());
            on_first.push(false);
        }
    }
    let n = positions.len();
    let embedding = class_embeddings(dim, 1, seed, false).remove(0);
    let mut features = FeatureMatrix::zeros(n, dim);
    for i in 0..n {
        features.set_row(i, &embedding);
    }
    DihedralScene {
        cloud: PrimitiveCloud::new(positions)
            .unwrap()
            .with_normals(normals)
            .unwrap(),
        features,
        confidences: vec![1.0; n],
        on_first_plane: on_first,
    }
}

/// One plane, two orthogonal feature classes split at the x midpoint.
pub struct TwoLabelPlane {
    pub cloud: PrimitiveCloud,
    pub features: FeatureMatrix,
    pub confidences: Vec<f64>,
    pub label: Vec<usize>,
}

pub fn two_label_plane(seed: u64, dim: usize) -> TwoLabelPlane {
    let mut rng = ChaCha12Rng::seed_from_u64(mix(seed, "two_label", 0));
    let mut positions = Vec::new();
    let step = 0.05;
    for i in 0..48 {
        for j in 0..24 {
            let jx = (rng.random::<f64>() - 0.5) * step * 0.4;
            let jy = (rng.random::<f64>() - 0.5) * step * 0.4;
            positions.push(Point3::new(i as f64 * step + jx, j as f64 * step + jy, 0.0));
        }
    }
    let n = positions.len();
    let boundary = 48.0 * step / 2.0;
    let label: Vec<usize> = positions
        .iter()
        .map(|p| usize::from(p.x > boundary))
        .collect();
    let embeddings = class_embeddings(dim, 2, seed, false);
    let mut features = FeatureMatrix::zeros(n, dim);
    for (i, &l) in label.iter().enumerate() {
        features.set_row(i, &embeddings[l]);
    }
    TwoLabelPlane {
        cloud: PrimitiveCloud::new(positions)
            .unwrap()
            .with_normals(vec![Vector3::z(); n])
            .unwrap(),
        features,
        confidences: vec![1.0; n],
        label,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feat;

    fn small_cfg() -> SimConfig {
        SimConfig {
            object_count: 2,
            points_per_object: 150,
            stuff_points_per_sqm: 12.0,
            camera_count: 4,
            image_width: 96,
            image_height: 72,
            feature_dim: 8,
            sigma_f: 0.0,
            rho_m: 0.0,
            ..SimConfig::default()
        }
    }

    #[test]
    fn embeddings_are_orthonormal() {
        let e = class_embeddings(16, 5, 3, false);
        for (i, a) in e.iter().enumerate() {
            assert!((feat::norm(a) - 1.0).abs() < 1e-10);
            for b in e.iter().skip(i + 1) {
                assert!(feat::dot(a, b).abs() < 1e-10);
            }
        }
        let c = class_embeddings(16, 5, 3, true);
        // correlated embeddings stay unit but lose orthogonality
        assert!((feat::norm(&c[0]) - 1.0).abs() < 1e-10);
        assert!(feat::dot(&c[0], &c[1]).abs() > 1e-3);
    }

    #[test]
    fn look_at_projects_target_to_center() {
        let cam = look_at_camera(
            0,
            Point3::new(2.0, 1.0, 1.5),
            Point3::new(0.0, 0.0, 0.5),
            200,
            150,
            70.0,
        );
        cam.validate().unwrap();
        let pd = crate::geometry::project(&Point3::new(0.0, 0.0, 0.5), &cam).unwrap();
        assert!((pd.u - cam.cx).abs() < 1e-9);
        assert!((pd.v - cam.cy).abs() < 1e-9);
        // world up appears upward in the image (smaller v)
        let above = crate::geometry::project(&Point3::new(0.0, 0.0, 0.8), &cam).unwrap();
        assert!(above.v < pd.v);
    }

    #[test]
    fn single_box_scene_all_visible_one_mask_id() {
        let cfg = SimConfig {
            object_count: 1,
            include_room: false,
            camera_count: 1,
            points_per_object: 200,
            feature_dim: 4,
            sigma_f: 0.0,
            rho_m: 0.0,
            ..SimConfig::default()
        };
        let scene = generate(&cfg).unwrap();
        let view = &scene.views[0];
        // frustum-only (no depth map): every primitive is in frame
        let mut frustum_cam = view.camera.clone();
        frustum_cam.depth = None;
        let in_frustum = crate::geometry::visibility(&scene.cloud, &frustum_cam, 0.05);
        assert!(in_frustum.iter().all(|&v| v));
        // with the rendered depth, self-occluded back faces drop out but the
        // camera-facing surface stays visible
        let vis = crate::geometry::visibility(&scene.cloud, &view.camera, 0.05);
        let seen = vis.iter().filter(|&&v| v).count();
        assert!(seen * 5 >= scene.cloud.len());
        let mut ids: Vec<u32> = view
            .mask
            .labels
            .iter()
            .copied()
            .filter(|&l| l != 0)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids, vec![1]);
    }

    #[test]
    fn noiseless_feature_pixels_equal_embeddings() {
        let scene = generate(&small_cfg()).unwrap();
        let e: Vec<Vec<f64>> = scene
            .queries
            .entries
            .iter()
            .map(|q| q.embedding.clone())
            .collect();
        let mut checked = 0usize;
        for view in &scene.views {
            let fmap = &view.feature_map;
            for y in 0..fmap.height {
                for x in 0..fmap.width {
                    let px = fmap.pixel(x, y);
                    if px.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    // must equal one class embedding at f32 precision
                    let matched = e.iter().any(|emb| {
                        px.iter()
                            .zip(emb)
                            .all(|(a, b)| (a - *b as f32 as f64).abs() < 1e-12)
                    });
                    assert!(matched, "pixel ({x},{y}) matches no class embedding");
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let cfg = small_cfg();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        for (pa, pb) in a.cloud.positions().iter().zip(b.cloud.positions()) {
            assert_eq!(pa.x.to_bits(), pb.x.to_bits());
        }
        assert_eq!(a.views[0].mask.labels, b.views[0].mask.labels);
        for (x, y) in a.views[1]
            .feature_map
            .data()
            .iter()
            .zip(b.views[1].feature_map.data())
        {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn perturb_changes_only_the_touched_raster() {
        let cfg = small_cfg();
        let base = generate(&cfg).unwrap();
        let noisy = perturb(&cfg, 0.3, 0.0, 0.0).unwrap();
        // geometry unchanged
        for (pa, pb) in base.cloud.positions().iter().zip(noisy.cloud.positions()) {
            assert_eq!(pa.x.to_bits(), pb.x.to_bits());
        }
        // masks unchanged (rho untouched)
        assert_eq!(base.views[0].mask.labels, noisy.views[0].mask.labels);
        // features changed
        let differs = base.views[0]
            .feature_map
            .data()
            .iter()
            .zip(noisy.views[0].feature_map.data())
            .any(|(x, y)| x != y);
        assert!(differs);
        // zero deltas: identical scene
        let same = perturb(&cfg, cfg.sigma_f, cfg.rho_m, cfg.sigma_n).unwrap();
        for (x, y) in base.views[0]
            .feature_map
            .data()
            .iter()
            .zip(same.views[0].feature_map.data())
        {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn mask_splits_appear_across_seeds() {
        // Monte-Carlo over 20 seeds: with rho 0.5 at least one view in each
        // scene shows a split id (one beyond the instance-id range)
        for seed in 0..20u64 {
            let cfg = SimConfig {
                seed,
                rho_m: 0.5,
                ..small_cfg()
            };
            let scene = generate(&cfg).unwrap();
            let max_plain = scene.n_instances as u32;
            let any_split = scene
                .views
                .iter()
                .any(|v| v.mask.labels.iter().any(|&l| l > max_plain));
            assert!(any_split, "seed {seed}: no split mask id in any view");
        }
    }

    #[test]
    fn gt_scores_perfectly_against_itself() {
        let scene = generate(&small_cfg()).unwrap();
        let labeling = crate::io::part::labeling_from_pano(
            scene.gt.instance_of.clone(),
            scene.gt.class_of.clone(),
            &scene.queries,
        )
        .unwrap();
        let report = crate::metrics::evaluate(&labeling, &scene.gt, &scene.queries).unwrap();
        assert_eq!(report.miou, 1.0);
        assert_eq!(report.macc, 1.0);
        assert_eq!(report.prq_thing, Some(1.0));
        assert_eq!(report.prq_stuff, Some(1.0));
    }

    #[test]
    fn saved_files_round_trip_bit_exactly() {
        let dir = std::env::temp_dir().join(format!("psplat_sim_rt_{}", std::process::id()));
        let scene = generate(&small_cfg()).unwrap();
        let manifest = scene.save(&dir).unwrap();

        // reload and re-save every artifact kind; bytes must match
        let cloud = io::ply::load_cloud(&dir.join(&manifest.cloud)).unwrap();
        let second = dir.join("again.ply");
        io::ply::save_cloud(&second, &cloud).unwrap();
        assert_eq!(
            std::fs::read(dir.join(&manifest.cloud)).unwrap(),
            std::fs::read(&second).unwrap()
        );

        let v0 = &manifest.views[0];
        let fmap = io::fmap::load_feature_map(&dir.join(&v0.features)).unwrap();
        let second = dir.join("again.bin");
        io::fmap::save_feature_map(&second, &fmap).unwrap();
        assert_eq!(
            std::fs::read(dir.join(&v0.features)).unwrap(),
            std::fs::read(&second).unwrap()
        );

        let depth = io::raster::load_depth_png(&dir.join(&v0.depth)).unwrap();
        let second = dir.join("again_d.png");
        io::raster::save_depth_png(&second, &depth).unwrap();
        assert_eq!(
            std::fs::read(dir.join(&v0.depth)).unwrap(),
            std::fs::read(&second).unwrap()
        );

        let mask = io::raster::load_mask_png(&dir.join(&v0.mask)).unwrap();
        let second = dir.join("again_m.png");
        io::raster::save_mask_png(&second, &mask).unwrap();
        assert_eq!(
            std::fs::read(dir.join(&v0.mask)).unwrap(),
            std::fs::read(&second).unwrap()
        );

        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn ablation_scene_shapes() {
        let s = wall_with_door(0, 8);
        assert!(s.is_door.iter().any(|&d| d));
        assert!(s.is_door.iter().any(|&d| !d));
        let d = dihedral_scene(0, 8);
        assert!(d.cloud.len() > 1000);
        let t = two_label_plane(0, 8);
        assert_eq!(t.label.len(), t.cloud.len());
    }
}
