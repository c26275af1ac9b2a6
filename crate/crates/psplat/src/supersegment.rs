//! Language-guided graph cuts: groups primitives into geometrically and
//! semantically consistent super-primitives.
//!
//! Two super-primitives merge when both indicators fire, strictly:
//!
//!   (n_i . n_j > lambda_n) AND (f_i . f_j > lambda_f)
//!
//! with aggregate normals/features maintained as confidence-weighted means
//! of member primitives, renormalized after every union. The thresholds
//! tighten over a fixed per-iteration schedule, coarse to permissive, and a
//! final pass folds roots smaller than `min_segment_size` into their most
//! similar adjacent root by normal cosine.

use crate::error::{Error, Result};
use crate::feat::{self, FeatureMatrix};
use crate::geometry::{AdjacencyGraph, PrimitiveCloud};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Per-iteration threshold schedule for the graph cuts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CutSchedule {
    /// normal-cosine threshold per iteration, non-increasing
    pub lambda_n: Vec<f64>,
    /// feature-cosine threshold per iteration, non-increasing
    pub lambda_f: Vec<f64>,
    pub min_segment_size: usize,
    /// ablation switch: when false the feature indicator is ignored
    pub use_language: bool,
}

impl Default for CutSchedule {
    fn default() -> Self {
        // Geometry tightens first (planar patches form), then relaxes while
        // the language threshold stays strict: with semantics blocking
        // cross-class merges, late iterations may fold the faces of one
        // object into a single vertex. The last two gates admit opposing
        // hemisphere aggregates (a wrapped closed surface averages to
        // near-antipodal normals), leaving discrimination to features;
        // exactly antipodal aggregates (thin boards) stay split and are
        // healed downstream by mask-consensus clustering.
        let angles = [20f64, 45.0, 80.0, 150.0, 179.5];
        let lambda_n = angles.iter().map(|a| a.to_radians().cos()).collect();
        let lambda_f = vec![0.95, 0.90, 0.85, 0.82, 0.82];
        Self {
            lambda_n,
            lambda_f,
            min_segment_size: 20,
            use_language: true,
        }
    }
}

impl CutSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_n.is_empty() || self.lambda_n.len() != self.lambda_f.len() {
            return Err(Error::Config(
                "cut schedule needs equal-length, non-empty lambda sequences".into(),
            ));
        }
        for seq in [&self.lambda_n, &self.lambda_f] {
            for v in seq {
                if !(*v > -1.0 && *v <= 1.0) {
                    return Err(Error::Config(format!(
                        "cut threshold {v} outside (-1, 1]"
                    )));
                }
            }
            for w in seq.windows(2) {
                if w[1] > w[0] {
                    return Err(Error::Config("cut thresholds must be non-increasing".into()));
                }
            }
        }
        Ok(())
    }

    pub fn iterations(&self) -> usize {
        self.lambda_n.len()
    }
}

/// The merge criterion: both cosines strictly above their thresholds.
pub fn merge_predicate(
    n_i: &Vector3<f64>,
    n_j: &Vector3<f64>,
    f_i: &[f64],
    f_j: &[f64],
    lambda_n: f64,
    lambda_f: f64,
) -> bool {
    n_i.dot(n_j) > lambda_n && feat::dot(f_i, f_j) > lambda_f
}

/// Disjoint-set partition of the primitives with per-root aggregates.
#[derive(Debug, Clone)]
pub struct SuperPrimitivePartition {
    parent: Vec<u32>,
    /// per-root member count (valid at roots only)
    count: Vec<u32>,
    /// confidence-weighted normal sum per root
    normal_sum: Vec<Vector3<f64>>,
    /// unweighted normal sum, fallback when all weights vanish
    normal_sum_uw: Vec<Vector3<f64>>,
    feature_sum: Vec<Vec<f64>>,
    feature_sum_uw: Vec<Vec<f64>>,
    weight_mass: Vec<f64>,
    dim: usize,
}

impl SuperPrimitivePartition {
    fn new(normals: &[Vector3<f64>], features: &FeatureMatrix, weights: &[f64]) -> Self {
        let n = normals.len();
        let dim = features.dim();
        let mut normal_sum = Vec::with_capacity(n);
        let mut normal_sum_uw = Vec::with_capacity(n);
        let mut feature_sum = Vec::with_capacity(n);
        let mut feature_sum_uw = Vec::with_capacity(n);
        for i in 0..n {
            let w = weights[i];
            normal_sum.push(normals[i] * w);
            normal_sum_uw.push(normals[i]);
            feature_sum.push(features.row(i).iter().map(|&v| v * w).collect());
            feature_sum_uw.push(features.row(i).to_vec());
        }
        Self {
            parent: (0..n as u32).collect(),
            count: vec![1; n],
            normal_sum,
            normal_sum_uw,
            feature_sum,
            feature_sum_uw,
            weight_mass: weights.to_vec(),
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&self, mut i: u32) -> u32 {
        while self.parent[i as usize] != i {
            i = self.parent[i as usize];
        }
        i
    }

    fn find_compress(&mut self, i: u32) -> u32 {
        let root = self.find(i);
        let mut cur = i;
        while self.parent[cur as usize] != root {
            let next = self.parent[cur as usize];
            self.parent[cur as usize] = root;
            cur = next;
        }
        root
    }

    /// Unions the roots of a and b; the surviving root is the lower index so
    /// results are order-deterministic. Aggregate sums add.
    fn union(&mut self, a: u32, b: u32) -> bool {
        let ra = self.find_compress(a);
        let rb = self.find_compress(b);
        if ra == rb {
            return false;
        }
        let (keep, drop) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[drop as usize] = keep;
        self.count[keep as usize] += self.count[drop as usize];
        let dn = self.normal_sum[drop as usize];
        self.normal_sum[keep as usize] += dn;
        let dnu = self.normal_sum_uw[drop as usize];
        self.normal_sum_uw[keep as usize] += dnu;
        for d in 0..self.dim {
            let v = self.feature_sum[drop as usize][d];
            self.feature_sum[keep as usize][d] += v;
            let v = self.feature_sum_uw[drop as usize][d];
            self.feature_sum_uw[keep as usize][d] += v;
        }
        self.weight_mass[keep as usize] += self.weight_mass[drop as usize];
        true
    }

    pub fn member_count(&self, root: u32) -> u32 {
        self.count[root as usize]
    }

    pub fn weight_mass_of(&self, root: u32) -> f64 {
        self.weight_mass[root as usize]
    }

    /// Renormalized confidence-weighted mean normal of a root; falls back to
    /// the unweighted mean when all member confidences vanish.
    pub fn normal_of(&self, root: u32) -> Vector3<f64> {
        let s = self.normal_sum[root as usize];
        if s.norm() > 1e-12 {
            return s.normalize();
        }
        let s = self.normal_sum_uw[root as usize];
        if s.norm() > 1e-12 {
            s.normalize()
        } else {
            Vector3::z()
        }
    }

    pub fn feature_of(&self, root: u32) -> Vec<f64> {
        let mut f = self.feature_sum[root as usize].clone();
        if !feat::normalize(&mut f, 1e-12) {
            f = self.feature_sum_uw[root as usize].clone();
            if !feat::normalize(&mut f, 1e-12) && self.dim > 0 {
                f = vec![0.0; self.dim];
                f[0] = 1.0;
            }
        }
        f
    }

    pub fn roots(&self) -> Vec<u32> {
        (0..self.parent.len() as u32)
            .filter(|&i| self.parent[i as usize] == i)
            .collect()
    }

    pub fn segment_count(&self) -> usize {
        self.roots().len()
    }

    /// Compresses roots to consecutive segment ids (root order ascending).
    /// Returns per-primitive segment ids and the root of each segment.
    pub fn compress(&self) -> (Vec<u32>, Vec<u32>) {
        let roots = self.roots();
        let mut root_to_seg = vec![u32::MAX; self.parent.len()];
        for (si, &r) in roots.iter().enumerate() {
            root_to_seg[r as usize] = si as u32;
        }
        let ids = (0..self.parent.len() as u32)
            .map(|i| root_to_seg[self.find(i) as usize])
            .collect();
        (ids, roots)
    }

    /// Member primitive lists per segment, aligned with `compress` ids.
    pub fn members(&self) -> Vec<Vec<u32>> {
        let (ids, roots) = self.compress();
        let mut members = vec![Vec::new(); roots.len()];
        for (i, &s) in ids.iter().enumerate() {
            members[s as usize].push(i as u32);
        }
        members
    }

    /// Flattens the union-find into the serializable segment representation.
    pub fn to_segments(&self) -> SegmentSet {
        let (ids, roots) = self.compress();
        let counts = roots.iter().map(|&r| self.member_count(r)).collect();
        let normals = roots.iter().map(|&r| self.normal_of(r)).collect();
        let feature_rows: Vec<Vec<f64>> = roots.iter().map(|&r| self.feature_of(r)).collect();
        SegmentSet {
            seg_of_primitive: ids,
            counts,
            normals,
            features: FeatureMatrix::from_rows(&feature_rows),
        }
    }
}

/// Super-primitives flattened to consecutive segment ids with per-segment
/// aggregates; the form the SUPR file stores and downstream stages consume.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSet {
    pub seg_of_primitive: Vec<u32>,
    pub counts: Vec<u32>,
    pub normals: Vec<Vector3<f64>>,
    pub features: FeatureMatrix,
}

impl SegmentSet {
    pub fn n_segments(&self) -> usize {
        self.counts.len()
    }

    pub fn n_primitives(&self) -> usize {
        self.seg_of_primitive.len()
    }

    pub fn members(&self) -> Vec<Vec<u32>> {
        let mut members = vec![Vec::new(); self.n_segments()];
        for (i, &s) in self.seg_of_primitive.iter().enumerate() {
            members[s as usize].push(i as u32);
        }
        members
    }

    /// Partition invariant: ids in range, every segment non-empty, stored
    /// counts consistent. Violations name the offending primitive/segment.
    pub fn validate_partition(&self) -> Result<()> {
        let n_seg = self.n_segments();
        let mut seen = vec![0u32; n_seg];
        let mut first_member = vec![usize::MAX; n_seg];
        for (i, &s) in self.seg_of_primitive.iter().enumerate() {
            if s as usize >= n_seg {
                return Err(Error::Config(format!(
                    "primitive {i} references segment {s} but only {n_seg} segments are declared"
                )));
            }
            seen[s as usize] += 1;
            if first_member[s as usize] == usize::MAX {
                first_member[s as usize] = i;
            }
        }
        for (s, (&got, &stored)) in seen.iter().zip(&self.counts).enumerate() {
            if got == 0 {
                return Err(Error::Config(format!("segment {s} has no members")));
            }
            if got != stored {
                return Err(Error::Config(format!(
                    "segment {s} stores count {stored} but {got} primitives reference it (first: primitive {})",
                    first_member[s]
                )));
            }
        }
        Ok(())
    }
}

/// Runs the scheduled graph cuts over the adjacency edges. Edges scan in
/// ascending (i, j) order within every iteration; unions and aggregate
/// updates are immediate, so later predicates see the merged state.
pub fn segment(
    cloud: &PrimitiveCloud,
    features: &FeatureMatrix,
    confidences: &[f64],
    adj: &AdjacencyGraph,
    sched: &CutSchedule,
) -> Result<SuperPrimitivePartition> {
    sched.validate()?;
    let normals = cloud
        .normals()
        .ok_or_else(|| Error::Config("segmentation requires primitive normals".into()))?;
    if features.rows() != cloud.len() || confidences.len() != cloud.len() {
        return Err(Error::Config("feature/confidence length mismatch".into()));
    }
    if adj.len() != cloud.len() {
        return Err(Error::Config("adjacency graph does not cover the cloud".into()));
    }

    let mut part = SuperPrimitivePartition::new(normals, features, confidences);
    let edges: Vec<(u32, u32)> = adj.edges().collect();

    for t in 0..sched.iterations() {
        let (ln, lf) = (sched.lambda_n[t], sched.lambda_f[t]);
        for &(i, j) in &edges {
            let ri = part.find_compress(i);
            let rj = part.find_compress(j);
            if ri == rj {
                continue;
            }
            let ni = part.normal_of(ri);
            let nj = part.normal_of(rj);
            let ok = if sched.use_language {
                let fi = part.feature_of(ri);
                let fj = part.feature_of(rj);
                merge_predicate(&ni, &nj, &fi, &fj, ln, lf)
            } else {
                ni.dot(&nj) > ln
            };
            if ok {
                part.union(ri, rj);
            }
        }
    }

    absorb_small_roots(&mut part, adj, sched.min_segment_size);
    Ok(part)
}

/// Folds undersized roots into their most normal-similar adjacent root
/// (ties toward the lower root index). Runs to a fixpoint: chains of tiny
/// coplanar shards may first merge into each other, so passes repeat in
/// ascending root order until no undersized root can merge. Roots without
/// any adjacent segment stay as they are.
fn absorb_small_roots(part: &mut SuperPrimitivePartition, adj: &AdjacencyGraph, min_size: usize) {
    if min_size <= 1 {
        return;
    }
    loop {
        let small: Vec<u32> = part
            .roots()
            .into_iter()
            .filter(|&r| (part.member_count(r) as usize) < min_size)
            .collect();
        let mut merged_any = false;
        for r in small {
            if part.find(r) != r || (part.member_count(r) as usize) >= min_size {
                continue; // absorbed or grown earlier in this pass
            }
            // members of this root (scan; small roots keep this cheap)
            let root_normal = part.normal_of(r);
            let mut best: Option<(f64, u32)> = None;
            for i in 0..part.len() as u32 {
                if part.find(i) != r {
                    continue;
                }
                for &j in adj.neighbors(i as usize) {
                    let rj = part.find(j);
                    if rj == r {
                        continue;
                    }
                    let cos = root_normal.dot(&part.normal_of(rj));
                    let better = match best {
                        None => true,
                        Some((c, b)) => cos > c || (cos == c && rj < b),
                    };
                    if better {
                        best = Some((cos, rj));
                    }
                }
            }
            if let Some((_, target)) = best {
                part.union(r, target);
                merged_any = true;
            }
        }
        if !merged_any {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::knn_graph;
    use nalgebra::Point3;

    fn unit_schedule(lambda_n: f64, lambda_f: f64, min_size: usize) -> CutSchedule {
        CutSchedule {
            lambda_n: vec![lambda_n],
            lambda_f: vec![lambda_f],
            min_segment_size: min_size,
            use_language: true,
        }
    }

    fn constant_features(n: usize, dim: usize, class: usize) -> FeatureMatrix {
        let mut m = FeatureMatrix::zeros(n, dim);
        for i in 0..n {
            m.row_mut(i)[class] = 1.0;
        }
        m
    }

    #[test]
    fn merge_predicate_cases() {
        let z = Vector3::z();
        let x = Vector3::x();
        let e1 = [1.0, 0.0];
        assert!(merge_predicate(&z, &z, &e1, &e1, 0.9, 0.9));
        assert!(!merge_predicate(&z, &x, &e1, &e1, 0.9, 0.9));
        // normals pass (0.95 > 0.9) but feature cosine 0.2 <= 0.8
        let mixed = [0.2, (1.0f64 - 0.04).sqrt()];
        assert!(!merge_predicate(
            &z,
            &(z * 0.95 + x * (1.0 - 0.95f64 * 0.95).sqrt()).normalize(),
            &e1,
            &mixed,
            0.9,
            0.8
        ));
    }

    #[test]
    fn merge_predicate_is_strict() {
        let z = Vector3::z();
        let e = [1.0, 0.0];
        assert!(!merge_predicate(&z, &z, &e, &e, 1.0, 0.5)); // cos == 1 not > 1
    }

    fn plane_cloud(nx: usize, ny: usize, spacing: f64) -> PrimitiveCloud {
        let mut pts = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                pts.push(Point3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
            }
        }
        let n = pts.len();
        PrimitiveCloud::new(pts)
            .unwrap()
            .with_normals(vec![Vector3::z(); n])
            .unwrap()
    }

    #[test]
    fn single_plane_single_segment() {
        let cloud = plane_cloud(12, 12, 0.1);
        let n = cloud.len();
        let features = constant_features(n, 4, 0);
        let adj = knn_graph(&cloud, 4);
        let part = segment(
            &cloud,
            &features,
            &vec![1.0; n],
            &adj,
            &unit_schedule(0.9, 0.8, 1),
        )
        .unwrap();
        assert_eq!(part.segment_count(), 1);
        assert_eq!(part.member_count(part.roots()[0]), n as u32);
    }

    #[test]
    fn two_label_plane_splits_on_feature_boundary() {
        // one plane, two orthogonal feature classes split at x midpoint
        let cloud = plane_cloud(20, 10, 0.1);
        let n = cloud.len();
        let mut features = FeatureMatrix::zeros(n, 4);
        let mut gt = Vec::with_capacity(n);
        for (i, p) in cloud.positions().iter().enumerate() {
            let class = usize::from(p.x > 0.95);
            features.row_mut(i)[class] = 1.0;
            gt.push(class);
        }
        let adj = knn_graph(&cloud, 4);
        let sched = CutSchedule {
            lambda_n: vec![0.9, 0.9],
            lambda_f: vec![0.5, 0.5],
            min_segment_size: 1,
            use_language: true,
        };
        let part = segment(&cloud, &features, &vec![1.0; n], &adj, &sched).unwrap();
        assert_eq!(part.segment_count(), 2);
        // language guard: no segment mixes classes
        let (ids, _) = part.compress();
        for (i, &a) in ids.iter().enumerate() {
            for (j, &b) in ids.iter().enumerate() {
                if a == b {
                    assert_eq!(gt[i], gt[j], "segment mixes feature classes");
                }
            }
        }
    }

    #[test]
    fn dihedral_planes_split_by_normals() {
        // two perpendicular planes sharing an edge, constant feature
        let mut pts = Vec::new();
        let mut normals = Vec::new();
        for i in 0..12 {
            for j in 0..8 {
                pts.push(Point3::new(i as f64 * 0.1, j as f64 * 0.1, 0.0));
                normals.push(Vector3::z());
            }
        }
        for i in 0..12 {
            for j in 1..8 {
                pts.push(Point3::new(i as f64 * 0.1, 0.0, -(j as f64) * 0.1));
                normals.push(Vector3::y());
            }
        }
        let n = pts.len();
        let cloud = PrimitiveCloud::new(pts).unwrap().with_normals(normals).unwrap();
        let features = constant_features(n, 4, 2);
        let adj = knn_graph(&cloud, 4);
        let sched = unit_schedule(30f64.to_radians().cos(), 0.5, 1);
        let part = segment(&cloud, &features, &vec![1.0; n], &adj, &sched).unwrap();
        assert_eq!(part.segment_count(), 2);
    }

    #[test]
    fn lambda_n_sweep_monotone_segment_count() {
        // with identical features, loosening lambda_n never increases the
        // number of super-primitives
        let mut pts = Vec::new();
        let mut normals = Vec::new();
        for i in 0..10 {
            for j in 0..6 {
                pts.push(Point3::new(i as f64 * 0.1, j as f64 * 0.1, 0.0));
                normals.push(Vector3::z());
            }
        }
        for i in 0..10 {
            for j in 1..6 {
                pts.push(Point3::new(i as f64 * 0.1, 0.0, -(j as f64) * 0.1));
                normals.push(Vector3::y());
            }
        }
        let n = pts.len();
        let cloud = PrimitiveCloud::new(pts).unwrap().with_normals(normals).unwrap();
        let features = constant_features(n, 2, 0);
        let adj = knn_graph(&cloud, 4);
        let mut last = usize::MAX;
        for deg in [5.0, 30.0, 60.0, 95.0] {
            let sched = unit_schedule((deg as f64).to_radians().cos(), 0.5, 1);
            let part = segment(&cloud, &features, &vec![1.0; n], &adj, &sched).unwrap();
            assert!(part.segment_count() <= last);
            last = part.segment_count();
        }
        assert_eq!(last, 1); // 95 deg threshold merges the dihedral
    }

    #[test]
    fn small_roots_absorb_into_similar_neighbor() {
        let cloud = plane_cloud(10, 10, 0.1);
        let n = cloud.len();
        // one corner primitive gets an orthogonal feature: it stays single
        // after cuts, then min-size absorbs it into the plane segment
        let mut features = constant_features(n, 4, 0);
        features.row_mut(0).fill(0.0);
        features.row_mut(0)[1] = 1.0;
        let adj = knn_graph(&cloud, 4);
        let sched = unit_schedule(0.9, 0.5, 5);
        let part = segment(&cloud, &features, &vec![1.0; n], &adj, &sched).unwrap();
        assert_eq!(part.segment_count(), 1);
    }

    #[test]
    fn determinism() {
        let cloud = plane_cloud(15, 7, 0.13);
        let n = cloud.len();
        let mut features = FeatureMatrix::zeros(n, 3);
        for i in 0..n {
            features.row_mut(i)[i % 2] = 1.0;
        }
        let adj = knn_graph(&cloud, 5);
        let sched = CutSchedule::default();
        let conf: Vec<f64> = (0..n).map(|i| 0.5 + (i % 7) as f64).collect();
        let a = segment(&cloud, &features, &conf, &adj, &sched).unwrap();
        let b = segment(&cloud, &features, &conf, &adj, &sched).unwrap();
        assert_eq!(a.compress().0, b.compress().0);
    }

    #[test]
    fn partition_covers_everything() {
        let cloud = plane_cloud(9, 9, 0.1);
        let n = cloud.len();
        let features = constant_features(n, 2, 1);
        let adj = knn_graph(&cloud, 3);
        let part = segment(
            &cloud,
            &features,
            &vec![1.0; n],
            &adj,
            &CutSchedule::default(),
        )
        .unwrap();
        let (ids, roots) = part.compress();
        assert_eq!(ids.len(), n);
        let total: u32 = roots.iter().map(|&r| part.member_count(r)).sum();
        assert_eq!(total, n as u32);
        for &id in &ids {
            assert!((id as usize) < roots.len());
        }
        // aggregates stay unit length
        for &r in &roots {
            assert!((part.normal_of(r).norm() - 1.0).abs() < 1e-4);
            assert!((feat::norm(&part.feature_of(r)) - 1.0).abs() < 1e-4);
        }
    }
}
