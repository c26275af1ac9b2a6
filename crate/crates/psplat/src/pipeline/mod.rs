//! File-based pipeline orchestration: stages communicate only through
//! artifacts in the output directory, every output is written atomically,
//! and stage reports record input/output digests so out-of-order reruns
//! fail fast instead of silently consuming stale artifacts.

use crate::cluster::{
    candidate_edges, progressive_cluster, ClusterSchedule, MaskAffinityOracle,
};
use crate::error::{Error, Result};
use crate::feat::FeatureMatrix;
use crate::field::{distill, DistillConfig, FieldConfig, FieldModel};
use crate::fusion::{fuse, FusionConfig};
use crate::geometry::{estimate_normals, knn_graph, CameraView, PrimitiveCloud};
use crate::io;
use crate::metrics::GroundTruth;
use crate::panoptic::{assemble, classify, text_query, vote, ClassKind};
use crate::sim::{self, SimConfig};
use crate::supersegment::{segment, CutSchedule};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    /// decoded from the distilled tri-plane field
    Field,
    /// raw fused 2D features (ablation)
    Fused,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    /// input overrides; default to files inside output_dir
    pub cloud: Option<PathBuf>,
    pub cameras: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,

    pub seed: u64,
    /// worker cap; 0 = library default
    pub threads: usize,
    /// keep stage reports byte-reproducible (omits wall time)
    pub deterministic: bool,

    pub depth_tol: f64,
    pub k_neighbors: usize,
    pub feature_source: FeatureSource,

    pub simulate: SimConfig,
    pub fusion: FusionConfig,
    pub field: FieldConfig,
    pub distill: DistillConfig,
    pub cut: CutSchedule,
    pub cluster: ClusterSchedule,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("psplat_out"),
            cloud: None,
            cameras: None,
            queries: None,
            ground_truth: None,
            seed: 0,
            threads: 0,
            deterministic: false,
            depth_tol: 0.05,
            k_neighbors: 16,
            feature_source: FeatureSource::Field,
            simulate: SimConfig::default(),
            fusion: FusionConfig::default(),
            field: FieldConfig::default(),
            distill: DistillConfig::default(),
            cut: CutSchedule::default(),
            cluster: ClusterSchedule::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = io::read_bytes(path)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::format(path, e.column() as u64, format!("bad config JSON: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.depth_tol > 0.0) {
            return Err(Error::Config("depth_tol must be positive".into()));
        }
        if self.k_neighbors < 1 {
            return Err(Error::Config("k_neighbors must be >= 1".into()));
        }
        self.fusion_checked()?;
        self.field.validate()?;
        self.distill.validate()?;
        self.cut.validate()?;
        self.cluster.validate()?;
        Ok(())
    }

    fn fusion_checked(&self) -> Result<()> {
        if !(self.fusion.eps > 0.0) || !(self.fusion.gamma_max > 0.0) {
            return Err(Error::Config("fusion eps and gamma_max must be positive".into()));
        }
        Ok(())
    }

    pub fn cloud_path(&self) -> PathBuf {
        self.cloud
            .clone()
            .unwrap_or_else(|| self.output_dir.join("cloud.ply"))
    }

    pub fn cameras_path(&self) -> PathBuf {
        self.cameras
            .clone()
            .unwrap_or_else(|| self.output_dir.join("cameras.json"))
    }

    pub fn queries_path(&self) -> PathBuf {
        self.queries
            .clone()
            .unwrap_or_else(|| self.output_dir.join("queries.json"))
    }

    pub fn gt_path(&self) -> PathBuf {
        self.ground_truth
            .clone()
            .unwrap_or_else(|| self.output_dir.join("gt.pano"))
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

/// Caps the global worker pool. Safe to call repeatedly; only the first
/// call takes effect.
pub fn init_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub params: serde_json::Value,
    pub counts: BTreeMap<String, serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

fn report_path(out_dir: &Path, stage: &str) -> PathBuf {
    out_dir.join(format!("{stage}.report.json"))
}

fn display_name(out_dir: &Path, path: &Path) -> String {
    path.strip_prefix(out_dir)
        .map(|p| p.display().to_string())
        .unwrap_or_else(|_| path.display().to_string())
}

struct StageRun<'a> {
    cfg: &'a PipelineConfig,
    stage: &'static str,
    started: Instant,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    counts: BTreeMap<String, serde_json::Value>,
}

impl<'a> StageRun<'a> {
    fn new(cfg: &'a PipelineConfig, stage: &'static str) -> Result<Self> {
        std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
        Ok(Self {
            cfg,
            stage,
            started: Instant::now(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            counts: BTreeMap::new(),
        })
    }

    /// Registers an input artifact: it must exist, and if any prior stage
    /// report produced or consumed it, the recorded digests must match the
    /// current file (transitively).
    fn input(&mut self, path: &Path) -> Result<()> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let digest = io::file_digest(path)?;
        check_freshness(&self.cfg.output_dir, path, &digest, &mut Vec::new())?;
        self.inputs
            .insert(display_name(&self.cfg.output_dir, path), digest);
        Ok(())
    }

    fn output(&mut self, path: &Path) -> Result<()> {
        let digest = io::file_digest(path)?;
        self.outputs
            .insert(display_name(&self.cfg.output_dir, path), digest);
        Ok(())
    }

    fn count(&mut self, key: &str, value: impl Serialize) {
        self.counts.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
    }

    fn finish(self, params: serde_json::Value) -> Result<StageReport> {
        let report = StageReport {
            stage: self.stage.to_string(),
            inputs: self.inputs,
            outputs: self.outputs,
            params,
            counts: self.counts,
            wall_ms: if self.cfg.deterministic {
                None
            } else {
                Some(self.started.elapsed().as_secs_f64() * 1000.0)
            },
        };
        let json = serde_json::to_vec_pretty(&report)
            .map_err(|e| Error::Pipeline(format!("report serialization: {e}")))?;
        io::atomic_write(&report_path(&self.cfg.output_dir, self.stage), &json)?;
        Ok(report)
    }
}

/// Walks the producer chain of `path`: the report that lists it as an
/// output must record the current digest, and that report's own inputs must
/// still be fresh.
fn check_freshness(
    out_dir: &Path,
    path: &Path,
    current_digest: &str,
    visiting: &mut Vec<String>,
) -> Result<()> {
    let name = display_name(out_dir, path);
    if visiting.contains(&name) {
        return Ok(());
    }
    visiting.push(name.clone());

    let Some(producer) = find_producer(out_dir, &name)? else {
        return Ok(()); // externally provided input: nothing to check
    };
    let recorded = &producer.outputs[&name];
    if recorded != current_digest {
        return Err(Error::Stale {
            path: path.to_path_buf(),
            message: format!(
                "digest {} does not match the one recorded by stage '{}'; rerun it",
                &current_digest[..12],
                producer.stage
            ),
        });
    }
    for (in_name, in_digest) in &producer.inputs {
        let in_path = out_dir.join(in_name);
        if !in_path.exists() {
            return Err(Error::Stale {
                path: in_path,
                message: format!(
                    "input of stage '{}' has disappeared; rerun it",
                    producer.stage
                ),
            });
        }
        let current = io::file_digest(&in_path)?;
        if &current != in_digest {
            return Err(Error::Stale {
                path: in_path,
                message: format!(
                    "changed after stage '{}' consumed it; rerun '{}'",
                    producer.stage, producer.stage
                ),
            });
        }
        check_freshness(out_dir, &out_dir.join(in_name), &current, visiting)?;
    }
    Ok(())
}

fn find_producer(out_dir: &Path, name: &str) -> Result<Option<StageReport>> {
    let entries = match std::fs::read_dir(out_dir) {
        Ok(e) => e,
        Err(_) => return Ok(None),
    };
    for entry in entries.flatten() {
        let p = entry.path();
        let fname = p.file_name().and_then(|f| f.to_str()).unwrap_or("");
        if !fname.ends_with(".report.json") {
            continue;
        }
        let Ok(bytes) = std::fs::read(&p) else { continue };
        let Ok(report) = serde_json::from_slice::<StageReport>(&bytes) else {
            continue;
        };
        if report.outputs.contains_key(name) {
            return Ok(Some(report));
        }
    }
    Ok(None)
}

fn load_cloud_with_normals(cfg: &PipelineConfig) -> Result<PrimitiveCloud> {
    let cloud = io::ply::load_cloud(&cfg.cloud_path())?;
    if cloud.normals().is_some() {
        return Ok(cloud);
    }
    log::info!("cloud has no normals; estimating with k={}", cfg.k_neighbors);
    let cams = io::cameras::load_cameras(&cfg.cameras_path(), false).unwrap_or_default();
    let est = estimate_normals(&cloud, cfg.k_neighbors.max(3), &cams);
    cloud.with_normals(est.normals)
}

fn load_views_with_rasters(cfg: &PipelineConfig) -> Result<Vec<CameraView>> {
    io::cameras::load_cameras(&cfg.cameras_path(), true)
}

pub fn run_simulate(cfg: &PipelineConfig) -> Result<StageReport> {
    let mut run = StageRun::new(cfg, "simulate")?;
    let mut sim_cfg = cfg.simulate.clone();
    sim_cfg.seed = cfg.seed;
    let scene = sim::generate(&sim_cfg)?;
    let manifest = scene.save(&cfg.output_dir)?;
    for name in ["cloud.ply", "cameras.json", "queries.json", "gt.pano", "scene_manifest.json"] {
        run.output(&cfg.output_dir.join(name))?;
    }
    for v in &manifest.views {
        run.output(&cfg.output_dir.join(&v.depth))?;
        run.output(&cfg.output_dir.join(&v.features))?;
        run.output(&cfg.output_dir.join(&v.mask))?;
    }
    run.count("primitives", scene.cloud.len());
    run.count("views", scene.views.len());
    run.count("classes", scene.queries.len());
    run.count("thing_objects", scene.n_objects);
    run.finish(serde_json::to_value(&sim_cfg).unwrap())
}

pub fn run_fuse(cfg: &PipelineConfig) -> Result<StageReport> {
    let mut run = StageRun::new(cfg, "fuse")?;
    run.input(&cfg.cloud_path())?;
    run.input(&cfg.cameras_path())?;
    let cloud = io::ply::load_cloud(&cfg.cloud_path())?;
    let views = load_views_with_rasters(cfg)?;
    let mut feature_maps = Vec::with_capacity(views.len());
    for v in &views {
        let fpath = v
            .feature_file
            .clone()
            .ok_or_else(|| Error::MissingArtifact(PathBuf::from(format!(
                "feature map for view {}",
                v.view_id
            ))))?;
        run.input(&fpath)?;
        feature_maps.push(io::fmap::load_feature_map(&fpath)?);
    }
    let mut fusion_cfg = cfg.fusion;
    fusion_cfg.depth_tol = cfg.depth_tol;
    let fused = fuse(&cloud, &views, &feature_maps, &fusion_cfg)?;
    let out = cfg.artifact("fused.bin");
    io::fmap::save_fused(&out, &fused)?;
    run.output(&out)?;
    run.count("primitives", fused.len());
    run.count("observed", fused.valid.iter().filter(|&&v| v).count());
    let mean_obs = fused.obs_count.iter().map(|&c| c as f64).sum::<f64>() / fused.len() as f64;
    run.count("mean_observations", mean_obs);
    run.finish(serde_json::to_value(fusion_cfg).unwrap())
}

pub fn run_distill(cfg: &PipelineConfig) -> Result<StageReport> {
    let mut run = StageRun::new(cfg, "distill")?;
    run.input(&cfg.cloud_path())?;
    let fused_path = cfg.artifact("fused.bin");
    run.input(&fused_path)?;
    let cloud = io::ply::load_cloud(&cfg.cloud_path())?;
    let fused = io::fmap::load_fused(&fused_path)?;
    let mut dcfg = cfg.distill.clone();
    dcfg.seed = cfg.seed;
    let mut model = FieldModel::new(&cfg.field, cloud.aabb(), fused.dim(), cfg.seed)?;
    let history = distill(&mut model, &fused, &cloud, &dcfg)?;
    let field_path = cfg.artifact("field.trip");
    io::trip::save_field(&field_path, &model)?;
    let hist_path = cfg.artifact("distill_history.json");
    io::atomic_write(
        &hist_path,
        &serde_json::to_vec_pretty(&history)
            .map_err(|e| Error::Pipeline(format!("history serialization: {e}")))?,
    )?;
    run.output(&field_path)?;
    run.output(&hist_path)?;
    run.count("iterations", dcfg.iterations);
    run.count("parameters", model.param_count());
    if let Some(last) = history.batch_loss.last() {
        run.count("final_batch_loss", last);
    }
    run.finish(serde_json::json!({
        "distill": dcfg,
        "field": cfg.field,
    }))
}

fn segment_features(
    cfg: &PipelineConfig,
    run: &mut StageRun<'_>,
    cloud: &PrimitiveCloud,
    fused: &crate::fusion::FusedFeatureCloud,
) -> Result<FeatureMatrix> {
    match cfg.feature_source {
        FeatureSource::Field => {
            let field_path = cfg.artifact("field.trip");
            run.input(&field_path)?;
            let model = io::trip::load_field(&field_path)?;
            model.field_features(cloud)
        }
        FeatureSource::Fused => Ok(fused.features.clone()),
    }
}

pub fn run_supersegment(cfg: &PipelineConfig) -> Result<StageReport> {
    let mut run = StageRun::new(cfg, "supersegment")?;
    run.input(&cfg.cloud_path())?;
    let fused_path = cfg.artifact("fused.bin");
    run.input(&fused_path)?;
    let cloud = load_cloud_with_normals(cfg)?;
    let fused = io::fmap::load_fused(&fused_path)?;
    let features = segment_features(cfg, &mut run, &cloud, &fused)?;
    let adj = knn_graph(&cloud, cfg.k_neighbors);
    let part = segment(&cloud, &features, &fused.confidence, &adj, &cfg.cut)?;
    let segments = part.to_segments();
    let out = cfg.artifact("superprims.bin");
    io::part::save_segments(&out, &segments)?;
    run.output(&out)?;
    run.count("segments", segments.n_segments());
    run.count("edges", adj.edge_count());
    run.finish(serde_json::json!({
        "cut": cfg.cut,
        "k_neighbors": cfg.k_neighbors,
        "feature_source": cfg.feature_source,
    }))
}

pub fn run_cluster(cfg: &PipelineConfig) -> Result<StageReport> {
    let mut run = StageRun::new(cfg, "cluster")?;
    run.input(&cfg.cloud_path())?;
    run.input(&cfg.cameras_path())?;
    let seg_path = cfg.artifact("superprims.bin");
    run.input(&seg_path)?;
    let cloud = io::ply::load_cloud(&cfg.cloud_path())?;
    let segments = io::part::load_segments(&seg_path)?;
    segments.validate_partition()?;
    if segments.n_primitives() != cloud.len() {
        return Err(Error::Config(format!(
            "partition covers {} primitives, cloud has {}",
            segments.n_primitives(),
            cloud.len()
        )));
    }
    let views = load_views_with_rasters(cfg)?;
    let mut masks = Vec::with_capacity(views.len());
    for v in &views {
        let mpath = v.mask_file.clone().ok_or_else(|| {
            Error::MissingArtifact(PathBuf::from(format!("mask for view {}", v.view_id)))
        })?;
        run.input(&mpath)?;
        masks.push(io::raster::load_mask_png(&mpath)?);
    }
    let members = segments.members();
    let oracle = MaskAffinityOracle::build(&cloud, &views, &masks, &members, cfg.depth_tol)?;
    let adj = knn_graph(&cloud, cfg.k_neighbors);
    let candidates = candidate_edges(&segments.seg_of_primitive, &adj);
    let (instances, iterations) =
        progressive_cluster(segments.n_segments(), &candidates, &oracle, &cfg.cluster)?;
    let out = cfg.artifact("instances.bin");
    io::part::save_instances(&out, &instances)?;
    let sidecar = cfg.artifact("cluster_iterations.json");
    io::atomic_write(
        &sidecar,
        &serde_json::to_vec_pretty(&iterations)
            .map_err(|e| Error::Pipeline(format!("sidecar serialization: {e}")))?,
    )?;
    run.output(&out)?;
    run.output(&sidecar)?;
    run.count("instances", instances.instance_count);
    run.count("candidate_pairs", candidates.len());
    run.finish(serde_json::json!({
        "cluster": cfg.cluster,
        "depth_tol": cfg.depth_tol,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelSummary {
    pub thing_instances: usize,
    pub stuff_regions: usize,
    pub instances: Vec<crate::panoptic::InstanceSummary>,
    /// per query name, matching thing instance ids ranked by similarity
    pub query_results: BTreeMap<String, Vec<u32>>,
}

pub fn run_label(cfg: &PipelineConfig) -> Result<StageReport> {
    let mut run = StageRun::new(cfg, "label")?;
    run.input(&cfg.cloud_path())?;
    run.input(&cfg.queries_path())?;
    let seg_path = cfg.artifact("superprims.bin");
    let inst_path = cfg.artifact("instances.bin");
    let fused_path = cfg.artifact("fused.bin");
    run.input(&seg_path)?;
    run.input(&inst_path)?;
    run.input(&fused_path)?;

    let cloud = io::ply::load_cloud(&cfg.cloud_path())?;
    let queries = io::part::load_queries(&cfg.queries_path())?;
    let segments = io::part::load_segments(&seg_path)?;
    let instances = io::part::load_instances(&inst_path)?;
    let fused = io::fmap::load_fused(&fused_path)?;
    if instances.instance_of_super.len() != segments.n_segments() {
        return Err(Error::Config(format!(
            "instance partition covers {} segments, partition has {}",
            instances.instance_of_super.len(),
            segments.n_segments()
        )));
    }
    let features = segment_features(cfg, &mut run, &cloud, &fused)?;
    let (classes, sims) = classify(&features, &queries)?;
    let (super_classes, _) = vote(&segments, &classes, queries.len())?;
    let labeling = assemble(&instances, &super_classes, &segments, &queries, &sims)?;

    let out = cfg.artifact("panoptic.pano");
    io::part::save_labeling(&out, &labeling)?;
    let mut query_results = BTreeMap::new();
    for entry in &queries.entries {
        if entry.kind == ClassKind::Thing {
            query_results.insert(entry.name.clone(), text_query(&labeling, &queries, &entry.name)?);
        }
    }
    let summary = LabelSummary {
        thing_instances: labeling
            .instances
            .iter()
            .filter(|s| s.kind == ClassKind::Thing)
            .count(),
        stuff_regions: labeling
            .instances
            .iter()
            .filter(|s| s.kind == ClassKind::Stuff)
            .count(),
        instances: labeling.instances.clone(),
        query_results,
    };
    let sum_path = cfg.artifact("instances_summary.json");
    io::atomic_write(
        &sum_path,
        &serde_json::to_vec_pretty(&summary)
            .map_err(|e| Error::Pipeline(format!("summary serialization: {e}")))?,
    )?;
    run.output(&out)?;
    run.output(&sum_path)?;
    run.count("thing_instances", summary.thing_instances);
    run.count("stuff_regions", summary.stuff_regions);
    run.finish(serde_json::json!({ "feature_source": cfg.feature_source }))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalGates {
    pub min_miou: Option<f64>,
    pub min_macc: Option<f64>,
    pub min_prq_thing: Option<f64>,
    pub min_prq_stuff: Option<f64>,
}

pub fn run_eval(cfg: &PipelineConfig, gates: &EvalGates) -> Result<StageReport> {
    let mut run = StageRun::new(cfg, "eval")?;
    let pano_path = cfg.artifact("panoptic.pano");
    run.input(&pano_path)?;
    run.input(&cfg.gt_path())?;
    run.input(&cfg.queries_path())?;
    let queries = io::part::load_queries(&cfg.queries_path())?;
    let (pred_inst, pred_class) = io::part::load_pano(&pano_path)?;
    let labeling = io::part::labeling_from_pano(pred_inst, pred_class, &queries)?;
    let (gt_inst, gt_class) = io::part::load_pano(&cfg.gt_path())?;
    let kinds: Vec<ClassKind> = queries.entries.iter().map(|e| e.kind).collect();
    let gt = GroundTruth::new(gt_class, gt_inst, kinds)?;
    let report = crate::metrics::evaluate(&labeling, &gt, &queries)?;

    let json_path = cfg.artifact("eval.json");
    io::atomic_write(
        &json_path,
        &serde_json::to_vec_pretty(&report)
            .map_err(|e| Error::Pipeline(format!("eval serialization: {e}")))?,
    )?;
    let txt_path = cfg.artifact("eval.txt");
    io::atomic_write(&txt_path, report.to_text().as_bytes())?;
    run.output(&json_path)?;
    run.output(&txt_path)?;
    run.count("miou", report.miou);
    run.count("macc", report.macc);
    run.count("prq_thing", report.prq_thing);
    run.count("prq_stuff", report.prq_stuff);
    let out = run.finish(serde_json::Value::Null)?;

    let mut failures = Vec::new();
    let mut gate = |name: &str, value: Option<f64>, min: Option<f64>| {
        if let Some(m) = min {
            match value {
                Some(v) if v >= m => {}
                got => failures.push(format!("{name} {got:?} below required {m}")),
            }
        }
    };
    gate("miou", Some(report.miou), gates.min_miou);
    gate("macc", Some(report.macc), gates.min_macc);
    gate("prq_thing", report.prq_thing, gates.min_prq_thing);
    gate("prq_stuff", report.prq_stuff, gates.min_prq_stuff);
    if !failures.is_empty() {
        return Err(Error::Evaluation(failures.join("; ")));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorBy {
    Instance,
    Class,
    Confidence,
}

/// Stable bright color for an id, used by the PLY export and the demo
/// renderer.
pub fn hash_color(id: u64) -> [f32; 3] {
    let mut h = id.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0xdead_beef;
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    let r = ((h >> 16) & 0xff) as f32 / 255.0;
    let g = ((h >> 32) & 0xff) as f32 / 255.0;
    let b = ((h >> 48) & 0xff) as f32 / 255.0;
    // avoid near-black: keep colors readable on dark canvases
    [
        0.25 + 0.75 * r,
        0.25 + 0.75 * g,
        0.25 + 0.75 * b,
    ]
}

pub fn run_export(cfg: &PipelineConfig, color_by: ColorBy) -> Result<StageReport> {
    let mut run = StageRun::new(cfg, "export")?;
    run.input(&cfg.cloud_path())?;
    let pano_path = cfg.artifact("panoptic.pano");
    run.input(&pano_path)?;
    let cloud = io::ply::load_cloud(&cfg.cloud_path())?;
    let (inst, class) = io::part::load_pano(&pano_path)?;
    if inst.len() != cloud.len() {
        return Err(Error::Config(format!(
            "labeling covers {} primitives, cloud has {}",
            inst.len(),
            cloud.len()
        )));
    }
    let colors: Vec<[f32; 3]> = match color_by {
        ColorBy::Instance => inst
            .iter()
            .map(|&i| {
                if i < 0 {
                    [0.3, 0.3, 0.3]
                } else {
                    hash_color(i as u64)
                }
            })
            .collect(),
        ColorBy::Class => class
            .iter()
            .map(|&c| {
                if c < 0 {
                    [0.3, 0.3, 0.3]
                } else {
                    hash_color(c as u64 ^ 0x51ee7)
                }
            })
            .collect(),
        ColorBy::Confidence => {
            let fused_path = cfg.artifact("fused.bin");
            run.input(&fused_path)?;
            let fused = io::fmap::load_fused(&fused_path)?;
            if fused.len() != cloud.len() {
                return Err(Error::Config("fused cloud does not cover the cloud".into()));
            }
            let max_c = fused.confidence.iter().cloned().fold(0.0, f64::max).max(1e-12);
            fused
                .confidence
                .iter()
                .map(|&c| {
                    let t = (c / max_c) as f32;
                    [t, 0.2, 1.0 - t]
                })
                .collect()
        }
    };
    let colored = PrimitiveCloud::new(cloud.positions().to_vec())?.with_colors(colors)?;
    let name = match color_by {
        ColorBy::Instance => "export_instance.ply",
        ColorBy::Class => "export_class.ply",
        ColorBy::Confidence => "export_confidence.ply",
    };
    let out = cfg.artifact(name);
    io::ply::save_cloud(&out, &colored)?;
    run.output(&out)?;
    run.count("points", colored.len());
    run.finish(serde_json::json!({ "color_by": color_by }))
}

/// One-shot helper running the full canonical chain.
pub fn run_all(cfg: &PipelineConfig, gates: &EvalGates) -> Result<Vec<StageReport>> {
    Ok(vec![
        run_simulate(cfg)?,
        run_fuse(cfg)?,
        run_distill(cfg)?,
        run_supersegment(cfg)?,
        run_cluster(cfg)?,
        run_label(cfg)?,
        run_eval(cfg, gates)?,
    ])
}
