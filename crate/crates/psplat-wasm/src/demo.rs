//! Demo engine: an in-memory run of the full pipeline over a small
//! synthetic scene, plus a software point renderer for the canvas. Pure
//! Rust so it is testable on the host target; `lib.rs` wraps it for
//! wasm-bindgen.

use psplat::cluster::{candidate_edges, progressive_cluster, ClusterSchedule, MaskAffinityOracle};
use psplat::error::{Error, Result};
use psplat::field::{distill, DistillConfig, FieldConfig, FieldModel};
use psplat::fusion::{fuse, FusedFeatureCloud, FusionConfig};
use psplat::geometry::{knn_graph, project, PrimitiveCloud};
use psplat::metrics::{evaluate, EvalReport};
use psplat::panoptic::{assemble, classify, text_query, vote, ClassKind, PanopticLabeling};
use psplat::pipeline::hash_color;
use psplat::sim::{self, look_at_camera, Scene, ShapeKind, SimConfig};
use psplat::supersegment::{segment, CutSchedule, SegmentSet};
use serde::Serialize;

const DEPTH_TOL: f64 = 0.25;
const K_NEIGHBORS: usize = 12;

fn demo_sim_config(seed: u64, objects: usize, sigma_f: f64, rho_m: f64) -> SimConfig {
    SimConfig {
        seed,
        object_count: objects.clamp(1, 8),
        shapes: vec![ShapeKind::Box, ShapeKind::Cylinder, ShapeKind::Plane],
        points_per_object: 400,
        stuff_points_per_sqm: 30.0,
        camera_count: 16,
        image_width: 160,
        image_height: 120,
        feature_dim: 12,
        sigma_f: sigma_f.clamp(0.0, 1.0),
        rho_m: rho_m.clamp(0.0, 1.0),
        ..SimConfig::default()
    }
}

#[derive(Serialize)]
struct Metrics {
    miou: f64,
    macc: f64,
    prq_thing: Option<f64>,
    prq_stuff: Option<f64>,
    segments: usize,
    thing_instances: usize,
    gt_objects: usize,
    distill_final_loss: f64,
}

pub struct DemoState {
    scene: Scene,
    fused: Option<FusedFeatureCloud>,
    model: Option<FieldModel>,
    segments: Option<SegmentSet>,
    labeling: Option<PanopticLabeling>,
    report: Option<EvalReport>,
    distill_final_loss: f64,
    highlight: Vec<i32>,
}

impl DemoState {
    pub fn generate(seed: u64, objects: usize, sigma_f: f64, rho_m: f64) -> Result<Self> {
        let scene = sim::generate(&demo_sim_config(seed, objects, sigma_f, rho_m))?;
        Ok(Self {
            scene,
            fused: None,
            model: None,
            segments: None,
            labeling: None,
            report: None,
            distill_final_loss: 0.0,
            highlight: Vec::new(),
        })
    }

    pub fn class_names(&self) -> String {
        let names: Vec<&str> = self
            .scene
            .queries
            .entries
            .iter()
            .map(|e| e.name.as_str())
            .collect();
        serde_json::to_string(&names).expect("serializes")
    }

    /// Runs fuse -> distill -> cuts -> clustering -> labeling -> eval in
    /// memory and returns a metrics JSON blob.
    pub fn run_pipeline(&mut self) -> Result<String> {
        let scene = &self.scene;
        let cloud = &scene.cloud;
        let views: Vec<_> = scene.views.iter().map(|v| v.camera.clone()).collect();
        let fmaps: Vec<_> = scene.views.iter().map(|v| v.feature_map.clone()).collect();
        let masks: Vec<_> = scene.views.iter().map(|v| v.mask.clone()).collect();

        let mut fusion_cfg = FusionConfig::default();
        fusion_cfg.depth_tol = DEPTH_TOL;
        let fused = fuse(cloud, &views, &fmaps, &fusion_cfg)?;

        let field_cfg = FieldConfig {
            resolutions: vec![16, 32],
            channels: 3,
            hidden: 24,
            aabb_expand: 0.05,
            init_scale: 1e-3,
        };
        let distill_cfg = DistillConfig {
            iterations: 600,
            batch_size: 512,
            learning_rate: 5e-3,
            seed: scene.config.seed,
            ..DistillConfig::default()
        };
        let mut model = FieldModel::new(&field_cfg, cloud.aabb(), fused.dim(), scene.config.seed)?;
        let history = distill(&mut model, &fused, cloud, &distill_cfg)?;
        self.distill_final_loss = history.batch_loss.last().copied().unwrap_or(0.0);

        let features = model.field_features(cloud)?;
        let adj = knn_graph(cloud, K_NEIGHBORS);
        let partition = segment(
            cloud,
            &features,
            &fused.confidence,
            &adj,
            &CutSchedule::default(),
        )?;
        let segments = partition.to_segments();

        let members = segments.members();
        let oracle = MaskAffinityOracle::build(cloud, &views, &masks, &members, DEPTH_TOL)?;
        let candidates = candidate_edges(&segments.seg_of_primitive, &adj);
        let (instances, _) = progressive_cluster(
            segments.n_segments(),
            &candidates,
            &oracle,
            &ClusterSchedule::default(),
        )?;

        let (classes, sims) = classify(&features, &scene.queries)?;
        let (super_classes, _) = vote(&segments, &classes, scene.queries.len())?;
        let labeling = assemble(&instances, &super_classes, &segments, &scene.queries, &sims)?;
        let report = evaluate(&labeling, &scene.gt, &scene.queries)?;

        let metrics = Metrics {
            miou: report.miou,
            macc: report.macc,
            prq_thing: report.prq_thing,
            prq_stuff: report.prq_stuff,
            segments: segments.n_segments(),
            thing_instances: labeling
                .instances
                .iter()
                .filter(|s| s.kind == ClassKind::Thing)
                .count(),
            gt_objects: scene.n_objects,
            distill_final_loss: self.distill_final_loss,
        };
        let json = serde_json::to_string(&metrics).expect("serializes");

        self.fused = Some(fused);
        self.model = Some(model);
        self.segments = Some(segments);
        self.labeling = Some(labeling);
        self.report = Some(report);
        self.highlight.clear();
        Ok(json)
    }

    /// Thing instances matching the query name, ranked by similarity; the
    /// result also becomes the highlight set for `render("query", ...)`.
    pub fn query(&mut self, name: &str) -> Result<String> {
        let labeling = self
            .labeling
            .as_ref()
            .ok_or_else(|| Error::Pipeline("run the pipeline before querying".into()))?;
        let hits = text_query(labeling, &self.scene.queries, name)?;
        self.highlight = hits.iter().map(|&h| h as i32).collect();
        Ok(serde_json::to_string(&hits).expect("serializes"))
    }

    pub fn render(
        &self,
        mode: &str,
        yaw_deg: f64,
        pitch_deg: f64,
        zoom: f64,
        width: u32,
        height: u32,
    ) -> Result<Vec<u8>> {
        let cloud = &self.scene.cloud;
        let colors = self.colors_for(mode, cloud.len())?;
        Ok(render_points(cloud, &colors, yaw_deg, pitch_deg, zoom, width, height))
    }

    fn colors_for(&self, mode: &str, n: usize) -> Result<Vec<[f32; 3]>> {
        let gt = &self.scene.gt;
        let need_labeling = || {
            self.labeling
                .as_ref()
                .ok_or_else(|| Error::Pipeline(format!("run the pipeline before mode '{mode}'")))
        };
        let out = match mode {
            "gt-instance" => gt
                .instance_of
                .iter()
                .map(|&i| hash_color(i.max(0) as u64))
                .collect(),
            "gt-class" => gt
                .class_of
                .iter()
                .map(|&c| hash_color(c.max(0) as u64 ^ 0x51ee7))
                .collect(),
            "segments" => {
                let segments = self
                    .segments
                    .as_ref()
                    .ok_or_else(|| Error::Pipeline("run the pipeline first".into()))?;
                segments
                    .seg_of_primitive
                    .iter()
                    .map(|&s| hash_color(s as u64 ^ 0xface))
                    .collect()
            }
            "pred-instance" => need_labeling()?
                .instance_of_primitive
                .iter()
                .map(|&i| {
                    if i < 0 {
                        [0.25, 0.25, 0.25]
                    } else {
                        hash_color(i as u64)
                    }
                })
                .collect(),
            "pred-class" => need_labeling()?
                .class_of_primitive
                .iter()
                .map(|&c| hash_color(c as u64 ^ 0x51ee7))
                .collect(),
            "confidence" => {
                let fused = self
                    .fused
                    .as_ref()
                    .ok_or_else(|| Error::Pipeline("run the pipeline first".into()))?;
                let max_c = fused.confidence.iter().cloned().fold(0.0, f64::max).max(1e-12);
                fused
                    .confidence
                    .iter()
                    .map(|&c| {
                        let t = (c / max_c) as f32;
                        [t, 0.25, 1.0 - t]
                    })
                    .collect()
            }
            "query" => {
                let labeling = need_labeling()?;
                labeling
                    .instance_of_primitive
                    .iter()
                    .map(|&i| {
                        if i >= 0 && self.highlight.contains(&i) {
                            hash_color(i as u64)
                        } else {
                            [0.18, 0.18, 0.22]
                        }
                    })
                    .collect()
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown render mode '{other}'; expected gt-instance, gt-class, segments, pred-instance, pred-class, confidence, or query"
                )))
            }
        };
        let colors: Vec<[f32; 3]> = out;
        debug_assert_eq!(colors.len(), n);
        Ok(colors)
    }
}

/// Z-buffered splat rendering of the colored cloud from an orbit camera.
pub fn render_points(
    cloud: &PrimitiveCloud,
    colors: &[[f32; 3]],
    yaw_deg: f64,
    pitch_deg: f64,
    zoom: f64,
    width: u32,
    height: u32,
) -> Vec<u8> {
    let aabb = cloud.aabb();
    let center = nalgebra::Point3::from((aabb.min + aabb.max) / 2.0);
    let radius = aabb.extent().norm().max(1e-3) * 0.75 * zoom.clamp(0.2, 5.0);
    let yaw = yaw_deg.to_radians();
    let pitch = pitch_deg.to_radians().clamp(-1.4, 1.4);
    let eye = nalgebra::Point3::new(
        center.x + radius * pitch.cos() * yaw.cos(),
        center.y + radius * pitch.cos() * yaw.sin(),
        center.z + radius * pitch.sin(),
    );
    let cam = look_at_camera(0, eye, center, width, height, 55.0);

    let n_px = (width * height) as usize;
    let mut rgba = vec![0u8; n_px * 4];
    for px in 0..n_px {
        rgba[px * 4] = 16;
        rgba[px * 4 + 1] = 16;
        rgba[px * 4 + 2] = 20;
        rgba[px * 4 + 3] = 255;
    }
    let mut zbuf = vec![f64::INFINITY; n_px];
    let (w, h) = (width as i64, height as i64);
    for (i, p) in cloud.positions().iter().enumerate() {
        let Some(pd) = project(p, &cam) else { continue };
        let cx = pd.u.round() as i64;
        let cy = pd.v.round() as i64;
        for dy in 0..=1 {
            for dx in 0..=1 {
                let (x, y) = (cx + dx, cy + dy);
                if x < 0 || y < 0 || x >= w || y >= h {
                    continue;
                }
                let at = (y * w + x) as usize;
                if pd.depth < zbuf[at] {
                    zbuf[at] = pd.depth;
                    let c = colors[i];
                    rgba[at * 4] = (c[0].clamp(0.0, 1.0) * 255.0) as u8;
                    rgba[at * 4 + 1] = (c[1].clamp(0.0, 1.0) * 255.0) as u8;
                    rgba[at * 4 + 2] = (c[2].clamp(0.0, 1.0) * 255.0) as u8;
                }
            }
        }
    }
    rgba
}
