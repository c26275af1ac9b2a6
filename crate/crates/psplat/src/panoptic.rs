//! Open-vocabulary querying of the learned field and assembly of the final
//! panoptic labeling via prediction voting.

use crate::cluster::InstancePartition;
use crate::error::{Error, Result};
use crate::feat::{self, FeatureMatrix};
use crate::supersegment::SegmentSet;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassKind {
    Thing,
    Stuff,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryEntry {
    pub name: String,
    pub kind: ClassKind,
    pub embedding: Vec<f64>,
}

/// Text-query embedding set; class index = position in `entries`.
#[derive(Debug, Clone)]
pub struct QuerySet {
    pub entries: Vec<QueryEntry>,
}

impl QuerySet {
    pub fn new(entries: Vec<QueryEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("query set must not be empty".into()));
        }
        let dim = entries[0].embedding.len();
        let mut names = std::collections::BTreeSet::new();
        let mut out = Vec::with_capacity(entries.len());
        for mut e in entries {
            if e.embedding.len() != dim {
                return Err(Error::Config(format!(
                    "query '{}' embedding dimension {} != {}",
                    e.name,
                    e.embedding.len(),
                    dim
                )));
            }
            if !feat::normalize(&mut e.embedding, 1e-9) {
                return Err(Error::Config(format!(
                    "query '{}' has a near-zero embedding",
                    e.name
                )));
            }
            if !names.insert(e.name.clone()) {
                return Err(Error::Config(format!("duplicate query name '{}'", e.name)));
            }
            out.push(e);
        }
        Ok(Self { entries: out })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.entries[0].embedding.len()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn kind(&self, class: usize) -> ClassKind {
        self.entries[class].kind
    }
}

/// Per-primitive argmax-cosine classification against the query set; ties
/// break toward the lower class index.
pub fn classify(features: &FeatureMatrix, queries: &QuerySet) -> Result<(Vec<u32>, Vec<f64>)> {
    if queries.is_empty() {
        return Err(Error::Config("classify needs a non-empty query set".into()));
    }
    if features.dim() != queries.dim() {
        return Err(Error::Config(format!(
            "feature dim {} != query embedding dim {}",
            features.dim(),
            queries.dim()
        )));
    }
    let mut classes = Vec::with_capacity(features.rows());
    let mut sims = Vec::with_capacity(features.rows());
    for row in features.iter_rows() {
        let mut best = 0usize;
        let mut best_sim = f64::NEG_INFINITY;
        for (c, entry) in queries.entries.iter().enumerate() {
            let s = feat::dot(row, &entry.embedding);
            if s > best_sim {
                best = c;
                best_sim = s;
            }
        }
        classes.push(best as u32);
        sims.push(best_sim);
    }
    Ok((classes, sims))
}

/// Modal class over member primitives per super-primitive; ties toward the
/// lower class index. Returns the winning class per segment (aligned with
/// compressed segment ids) and relabels every member primitive with it.
pub fn vote(
    segments: &SegmentSet,
    classes: &[u32],
    n_classes: usize,
) -> Result<(Vec<u32>, Vec<u32>)> {
    if classes.len() != segments.n_primitives() {
        return Err(Error::Config("class array does not cover the partition".into()));
    }
    let members = segments.members();
    let mut seg_class = Vec::with_capacity(members.len());
    let mut voted = vec![0u32; classes.len()];
    for member_list in &members {
        let mut hist = vec![0u32; n_classes];
        for &i in member_list {
            hist[classes[i as usize] as usize] += 1;
        }
        let winner = hist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(c, _)| c as u32)
            .unwrap_or(0);
        for &i in member_list {
            voted[i as usize] = winner;
        }
        seg_class.push(winner);
    }
    Ok((seg_class, voted))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub class: u32,
    pub kind: ClassKind,
    pub primitive_count: u32,
    pub mean_similarity: f64,
}

/// Final per-primitive labeling plus per-instance summaries. Instance id -1
/// marks an unassigned primitive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanopticLabeling {
    pub instance_of_primitive: Vec<i32>,
    pub class_of_primitive: Vec<u32>,
    pub instances: Vec<InstanceSummary>,
}

impl PanopticLabeling {
    pub fn len(&self) -> usize {
        self.instance_of_primitive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instance_of_primitive.is_empty()
    }
}

/// Assembles instances into the panoptic labeling: instance class is the
/// primitive-count-weighted modal class over member super-primitives, every
/// member primitive takes it, and stuff-classed instances collapse into one
/// region per class. Thing instances keep ascending cluster order; stuff
/// regions follow, ordered by class index.
pub fn assemble(
    instances: &InstancePartition,
    super_classes: &[u32],
    segments: &SegmentSet,
    queries: &QuerySet,
    similarities: &[f64],
) -> Result<PanopticLabeling> {
    let seg_members = segments.members();
    if instances.instance_of_super.len() != seg_members.len() {
        return Err(Error::Config(
            "instance partition does not cover the super-primitives".into(),
        ));
    }
    if super_classes.len() != seg_members.len() {
        return Err(Error::Config("super class array length mismatch".into()));
    }
    let n = segments.n_primitives();
    let n_classes = queries.len();

    // instance class: primitive-count-weighted mode over member segments
    let inst_members = instances.members();
    let mut inst_class = Vec::with_capacity(inst_members.len());
    for members in &inst_members {
        let mut hist = vec![0u64; n_classes];
        for &s in members {
            hist[super_classes[s as usize] as usize] += seg_members[s as usize].len() as u64;
        }
        let winner = hist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(c, _)| c as u32)
            .unwrap_or(0);
        inst_class.push(winner);
    }

    // final ids: things keep ascending instance order, stuff merges per class
    let mut final_of_cluster = vec![-1i32; inst_members.len()];
    let mut summaries: Vec<InstanceSummary> = Vec::new();
    for (ci, &class) in inst_class.iter().enumerate() {
        if queries.kind(class as usize) == ClassKind::Thing {
            final_of_cluster[ci] = summaries.len() as i32;
            summaries.push(InstanceSummary {
                class,
                kind: ClassKind::Thing,
                primitive_count: 0,
                mean_similarity: 0.0,
            });
        }
    }
    let mut stuff_region: std::collections::BTreeMap<u32, i32> = std::collections::BTreeMap::new();
    let mut stuff_classes: Vec<u32> = inst_class
        .iter()
        .copied()
        .filter(|&c| queries.kind(c as usize) == ClassKind::Stuff)
        .collect();
    stuff_classes.sort_unstable();
    stuff_classes.dedup();
    for class in stuff_classes {
        stuff_region.insert(class, summaries.len() as i32);
        summaries.push(InstanceSummary {
            class,
            kind: ClassKind::Stuff,
            primitive_count: 0,
            mean_similarity: 0.0,
        });
    }
    for (ci, &class) in inst_class.iter().enumerate() {
        if final_of_cluster[ci] == -1 {
            final_of_cluster[ci] = stuff_region[&class];
        }
    }

    let mut instance_of_primitive = vec![-1i32; n];
    let mut class_of_primitive = vec![0u32; n];
    let mut sim_sum = vec![0.0f64; summaries.len()];
    for (ci, members) in inst_members.iter().enumerate() {
        let fid = final_of_cluster[ci];
        let class = inst_class[ci];
        for &s in members {
            for &p in &seg_members[s as usize] {
                instance_of_primitive[p as usize] = fid;
                class_of_primitive[p as usize] = class;
                summaries[fid as usize].primitive_count += 1;
                sim_sum[fid as usize] += similarities.get(p as usize).copied().unwrap_or(0.0);
            }
        }
    }
    for (summary, sum) in summaries.iter_mut().zip(&sim_sum) {
        if summary.primitive_count > 0 {
            summary.mean_similarity = sum / summary.primitive_count as f64;
        }
    }

    Ok(PanopticLabeling {
        instance_of_primitive,
        class_of_primitive,
        instances: summaries,
    })
}

/// Thing instances whose voted class matches the named query, ranked by
/// mean similarity descending (ties by instance id).
pub fn text_query(
    labeling: &PanopticLabeling,
    queries: &QuerySet,
    query_name: &str,
) -> Result<Vec<u32>> {
    let class = queries
        .class_index(query_name)
        .ok_or_else(|| Error::UnknownQuery(query_name.to_string()))? as u32;
    let mut hits: Vec<(f64, u32)> = labeling
        .instances
        .iter()
        .enumerate()
        .filter(|(_, s)| s.kind == ClassKind::Thing && s.class == class)
        .map(|(i, s)| (s.mean_similarity, i as u32))
        .collect();
    hits.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    Ok(hits.into_iter().map(|(_, i)| i).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PrimitiveCloud;
    use crate::supersegment::{segment, CutSchedule};
    use nalgebra::{Point3, Vector3};

    fn queries3() -> QuerySet {
        QuerySet::new(vec![
            QueryEntry {
                name: "chair".into(),
                kind: ClassKind::Thing,
                embedding: vec![1.0, 0.0, 0.0],
            },
            QueryEntry {
                name: "table".into(),
                kind: ClassKind::Thing,
                embedding: vec![0.0, 1.0, 0.0],
            },
            QueryEntry {
                name: "wall".into(),
                kind: ClassKind::Stuff,
                embedding: vec![0.0, 0.0, 1.0],
            },
        ])
        .unwrap()
    }

    #[test]
    fn classify_exact_and_tie() {
        let q = queries3();
        let feats = FeatureMatrix::from_rows(&[
            vec![0.0, 1.0, 0.0], // class 1 exactly
            vec![1.0, 1.0, 0.0].iter().map(|v| v / 2f64.sqrt()).collect(), // tie 0 vs 1
        ]);
        let (classes, sims) = classify(&feats, &q).unwrap();
        assert_eq!(classes, vec![1, 0]); // tie resolves to the lower index
        assert!((sims[0] - 1.0).abs() < 1e-12);
        assert!((sims[1] - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn classify_matches_brute_force_on_random() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        let dim = 6;
        let entries: Vec<QueryEntry> = (0..5)
            .map(|i| QueryEntry {
                name: format!("q{i}"),
                kind: ClassKind::Thing,
                embedding: (0..dim).map(|_| rng.random::<f64>() - 0.5).collect(),
            })
            .collect();
        let q = QuerySet::new(entries).unwrap();
        let mut feats = FeatureMatrix::zeros(50, dim);
        for i in 0..50 {
            let mut row: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
            crate::feat::normalize(&mut row, 1e-9);
            feats.set_row(i, &row);
        }
        let (classes, _) = classify(&feats, &q).unwrap();
        for i in 0..50 {
            let expected = (0..5)
                .max_by(|&a, &b| {
                    crate::feat::dot(feats.row(i), &q.entries[a].embedding)
                        .partial_cmp(&crate::feat::dot(feats.row(i), &q.entries[b].embedding))
                        .unwrap()
                })
                .unwrap();
            assert_eq!(classes[i], expected as u32);
        }
    }

    #[test]
    fn classify_invariant_to_embedding_rescale() {
        let feats = FeatureMatrix::from_rows(&[vec![0.8, 0.6, 0.0]]);
        let q1 = queries3();
        let mut scaled = vec![
            QueryEntry {
                name: "chair".into(),
                kind: ClassKind::Thing,
                embedding: vec![7.5, 0.0, 0.0],
            },
            QueryEntry {
                name: "table".into(),
                kind: ClassKind::Thing,
                embedding: vec![0.0, 0.01, 0.0],
            },
            QueryEntry {
                name: "wall".into(),
                kind: ClassKind::Stuff,
                embedding: vec![0.0, 0.0, 42.0],
            },
        ];
        scaled.swap(0, 0);
        let q2 = QuerySet::new(scaled).unwrap();
        assert_eq!(
            classify(&feats, &q1).unwrap().0,
            classify(&feats, &q2).unwrap().0
        );
    }

    fn tiny_partition(groups: &[&[u32]]) -> SegmentSet {
        let n: usize = groups.iter().map(|g| g.len()).sum();
        let cloud = PrimitiveCloud::new(
            (0..n)
                .map(|i| Point3::new(i as f64 * 10.0, 0.0, 0.0))
                .collect(),
        )
        .unwrap()
        .with_normals(vec![Vector3::z(); n])
        .unwrap();
        // features constant per group so the cuts reproduce exactly the
        // requested grouping through an adjacency chain inside each group
        let mut feats = FeatureMatrix::zeros(n, groups.len().max(2));
        for (gi, g) in groups.iter().enumerate() {
            for &i in *g {
                feats.row_mut(i as usize)[gi] = 1.0;
            }
        }
        let mut pairs = Vec::new();
        for g in groups {
            for w in g.windows(2) {
                pairs.push((w[0], w[1]));
            }
        }
        // ensure cross-group adjacency exists so candidate edges are tested
        for gi in 1..groups.len() {
            pairs.push((groups[gi - 1][0], groups[gi][0]));
        }
        let adj = crate::geometry::AdjacencyGraph::from_pairs(n, pairs);
        let sched = CutSchedule {
            lambda_n: vec![0.9],
            lambda_f: vec![0.5],
            min_segment_size: 1,
            use_language: true,
        };
        segment(&cloud, &feats, &vec![1.0; n], &adj, &sched)
            .unwrap()
            .to_segments()
    }

    #[test]
    fn vote_majority_tie_and_unanimity() {
        let part = tiny_partition(&[&[0, 1, 2], &[3, 4], &[5]]);
        assert_eq!(part.n_segments(), 3);
        let classes = vec![2, 2, 3, 1, 4, 7];
        let (seg_class, voted) = vote(&part, &classes, 8).unwrap();
        assert_eq!(seg_class, vec![2, 1, 7]); // majority, tie->lower, unanimity
        assert_eq!(voted, vec![2, 2, 2, 1, 1, 7]);
    }

    #[test]
    fn vote_never_invents_classes() {
        let part = tiny_partition(&[&[0, 1], &[2, 3, 4]]);
        let classes = vec![3, 3, 5, 5, 6];
        let (seg_class, _) = vote(&part, &classes, 8).unwrap();
        for (si, &c) in seg_class.iter().enumerate() {
            let members = &part.members()[si];
            assert!(members.iter().any(|&i| classes[i as usize] == c));
        }
    }

    #[test]
    fn assemble_single_instance() {
        let part = tiny_partition(&[&[0, 1, 2]]);
        let instances = InstancePartition {
            instance_of_super: vec![0],
            instance_count: 1,
        };
        let labeling = assemble(&instances, &[0], &part, &queries3(), &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(labeling.instance_of_primitive, vec![0, 0, 0]);
        assert_eq!(labeling.class_of_primitive, vec![0, 0, 0]);
        assert_eq!(labeling.instances.len(), 1);
    }

    #[test]
    fn assemble_weighted_mode_and_stuff_merge() {
        // instance of two segments sized 3 (class 0) and 1 (class 1) -> 0;
        // two wall-classed instances merge into one stuff region
        let part = tiny_partition(&[&[0, 1, 2], &[3], &[4], &[5]]);
        let instances = InstancePartition {
            instance_of_super: vec![0, 0, 1, 2],
            instance_count: 3,
        };
        let super_classes = vec![0, 1, 2, 2];
        let sims = vec![1.0; 6];
        let labeling = assemble(&instances, &super_classes, &part, &queries3(), &sims).unwrap();
        // weighted mode keeps class 0 for the first instance
        assert_eq!(labeling.class_of_primitive[0..4], [0, 0, 0, 0]);
        // both wall instances share one final region id
        assert_eq!(
            labeling.instance_of_primitive[4],
            labeling.instance_of_primitive[5]
        );
        let wall_region = labeling.instance_of_primitive[4] as usize;
        assert_eq!(labeling.instances[wall_region].kind, ClassKind::Stuff);
        // class map constant within each instance
        for (inst, class) in labeling
            .instance_of_primitive
            .iter()
            .zip(&labeling.class_of_primitive)
        {
            assert_eq!(labeling.instances[*inst as usize].class, *class);
        }
    }

    #[test]
    fn text_query_returns_matching_things() {
        let part = tiny_partition(&[&[0, 1], &[2, 3], &[4, 5]]);
        let instances = InstancePartition {
            instance_of_super: vec![0, 1, 2],
            instance_count: 3,
        };
        let super_classes = vec![0, 0, 2];
        let sims = vec![0.9, 0.9, 0.95, 0.95, 1.0, 1.0];
        let labeling = assemble(&instances, &super_classes, &part, &queries3(), &sims).unwrap();
        // two chair instances, ranked by mean similarity descending
        let hits = text_query(&labeling, &queries3(), "chair").unwrap();
        assert_eq!(hits.len(), 2);
        assert!(labeling.instances[hits[0] as usize].mean_similarity >= labeling.instances[hits[1] as usize].mean_similarity);
        // query matching nothing
        assert!(text_query(&labeling, &queries3(), "table").unwrap().is_empty());
        // unknown name errors
        assert!(matches!(
            text_query(&labeling, &queries3(), "sofa"),
            Err(Error::UnknownQuery(_))
        ));
    }
}
