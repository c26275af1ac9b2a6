//! Partition and labeling formats.
//!
//! SUPR: magic, u32 N, N u32 consecutive segment ids, then per segment u32
//! count, 3 f32 normal, D f32 feature (D inferred from the remainder).
//! INST: magic, u32 N_super, N_super u32 instance ids.
//! PANO: magic, u32 N, per primitive u32 instance id (0xFFFFFFFF = none) and
//! u16 class (0xFFFF = none). Query sets are JSON arrays of
//! {name, kind, embedding}.

use super::{ByteReader, ByteWriter};
use crate::cluster::InstancePartition;
use crate::error::{Error, Result};
use crate::feat::FeatureMatrix;
use crate::panoptic::{ClassKind, InstanceSummary, PanopticLabeling, QueryEntry, QuerySet};
use crate::supersegment::SegmentSet;
use nalgebra::Vector3;
use std::path::Path;

pub fn save_segments(path: &Path, segments: &SegmentSet) -> Result<()> {
    let mut w = ByteWriter::new();
    w.magic(b"SUPR")
        .u32(segments.n_primitives() as u32)
        .u32_slice(segments.seg_of_primitive.iter().copied());
    for s in 0..segments.n_segments() {
        w.u32(segments.counts[s]);
        for a in 0..3 {
            w.f32(segments.normals[s][a] as f32);
        }
        w.f32_slice(segments.features.row(s).iter().map(|&v| v as f32));
    }
    super::atomic_write(path, &w.into_bytes())
}

pub fn load_segments(path: &Path) -> Result<SegmentSet> {
    let bytes = super::read_bytes(path)?;
    parse_segments(path, &bytes)
}

pub fn parse_segments(path: &Path, bytes: &[u8]) -> Result<SegmentSet> {
    let mut r = ByteReader::new(path, bytes);
    r.expect_magic(b"SUPR")?;
    let n = r.u32("primitive count")? as usize;
    let ids = r.u32_slice(n, "segment ids")?;
    let n_seg = ids.iter().copied().max().map_or(0, |m| m as usize + 1);
    if n_seg == 0 {
        return Err(r.error("empty partition"));
    }
    // remaining bytes must split evenly into n_seg records of 16 + 4D bytes
    let remaining = r.remaining();
    if remaining % n_seg != 0 {
        return Err(r.error(format!(
            "segment records ({remaining} bytes) do not divide into {n_seg} segments implied by the ids"
        )));
    }
    let per_seg = remaining / n_seg;
    if per_seg < 16 + 4 || (per_seg - 16) % 4 != 0 {
        return Err(r.error(format!("segment record size {per_seg} is malformed")));
    }
    let dim = (per_seg - 16) / 4;
    let mut counts = Vec::with_capacity(n_seg);
    let mut normals = Vec::with_capacity(n_seg);
    let mut features = FeatureMatrix::zeros(n_seg, dim);
    for s in 0..n_seg {
        counts.push(r.u32("segment count")?);
        let nx = r.f32("normal")? as f64;
        let ny = r.f32("normal")? as f64;
        let nz = r.f32("normal")? as f64;
        normals.push(Vector3::new(nx, ny, nz));
        let fr = r.f32_slice(dim, "segment feature")?;
        features.set_row(s, &fr.iter().map(|&v| v as f64).collect::<Vec<_>>());
    }
    r.finish()?;
    Ok(SegmentSet {
        seg_of_primitive: ids,
        counts,
        normals,
        features,
    })
}

pub fn save_instances(path: &Path, inst: &InstancePartition) -> Result<()> {
    let mut w = ByteWriter::new();
    w.magic(b"INST")
        .u32(inst.instance_of_super.len() as u32)
        .u32_slice(inst.instance_of_super.iter().copied());
    super::atomic_write(path, &w.into_bytes())
}

pub fn load_instances(path: &Path) -> Result<InstancePartition> {
    let bytes = super::read_bytes(path)?;
    let mut r = ByteReader::new(path, &bytes);
    r.expect_magic(b"INST")?;
    let n = r.u32("super-primitive count")? as usize;
    let ids = r.u32_slice(n, "instance ids")?;
    r.finish()?;
    let count = ids.iter().copied().max().map_or(0, |m| m as usize + 1);
    for (v, &id) in ids.iter().enumerate() {
        if id as usize >= count {
            return Err(Error::format(
                path,
                8 + 4 * v as u64,
                format!("instance id {id} out of range"),
            ));
        }
    }
    Ok(InstancePartition {
        instance_of_super: ids,
        instance_count: count,
    })
}

const NO_INSTANCE: u32 = u32::MAX;
const NO_CLASS: u16 = u16::MAX;

/// Raw per-primitive panoptic arrays as stored in a PANO file.
pub fn save_pano(path: &Path, instance_of: &[i32], class_of: &[i32]) -> Result<()> {
    assert_eq!(instance_of.len(), class_of.len());
    let mut w = ByteWriter::new();
    w.magic(b"PANO").u32(instance_of.len() as u32);
    for (&inst, &class) in instance_of.iter().zip(class_of) {
        w.u32(if inst < 0 { NO_INSTANCE } else { inst as u32 });
        w.u16(if class < 0 {
            NO_CLASS
        } else {
            u16::try_from(class).map_err(|_| {
                Error::Pipeline(format!("class {class} exceeds the 16-bit PANO range"))
            })?
        });
    }
    super::atomic_write(path, &w.into_bytes())
}

pub fn load_pano(path: &Path) -> Result<(Vec<i32>, Vec<i32>)> {
    let bytes = super::read_bytes(path)?;
    let mut r = ByteReader::new(path, &bytes);
    r.expect_magic(b"PANO")?;
    let n = r.u32("primitive count")? as usize;
    let mut instance_of = Vec::with_capacity(n);
    let mut class_of = Vec::with_capacity(n);
    for _ in 0..n {
        let inst = r.u32("instance id")?;
        let class = r.u16("class")?;
        instance_of.push(if inst == NO_INSTANCE { -1 } else { inst as i32 });
        class_of.push(if class == NO_CLASS { -1 } else { class as i32 });
    }
    r.finish()?;
    Ok((instance_of, class_of))
}

pub fn save_labeling(path: &Path, labeling: &PanopticLabeling) -> Result<()> {
    let classes: Vec<i32> = labeling.class_of_primitive.iter().map(|&c| c as i32).collect();
    save_pano(path, &labeling.instance_of_primitive, &classes)
}

/// Rebuilds a labeling from PANO arrays; per-instance summaries are
/// reconstructed from the class map (mean similarity is not stored).
pub fn labeling_from_pano(
    instance_of: Vec<i32>,
    class_of: Vec<i32>,
    queries: &QuerySet,
) -> Result<PanopticLabeling> {
    let n_inst = instance_of.iter().copied().max().map_or(0, |m| (m + 1).max(0)) as usize;
    let mut summaries = vec![
        InstanceSummary {
            class: 0,
            kind: ClassKind::Thing,
            primitive_count: 0,
            mean_similarity: 0.0,
        };
        n_inst
    ];
    let mut class_of_u32 = Vec::with_capacity(class_of.len());
    for (i, (&inst, &class)) in instance_of.iter().zip(&class_of).enumerate() {
        if class < 0 || class as usize >= queries.len() {
            return Err(Error::Config(format!(
                "primitive {i}: class {class} outside the query set"
            )));
        }
        class_of_u32.push(class as u32);
        if inst >= 0 {
            let s = &mut summaries[inst as usize];
            s.primitive_count += 1;
            s.class = class as u32;
            s.kind = queries.kind(class as usize);
        }
    }
    Ok(PanopticLabeling {
        instance_of_primitive: instance_of,
        class_of_primitive: class_of_u32,
        instances: summaries,
    })
}

pub fn save_queries(path: &Path, queries: &QuerySet) -> Result<()> {
    let json = serde_json::to_vec_pretty(&queries.entries)
        .map_err(|e| Error::Pipeline(format!("query serialization failed: {e}")))?;
    super::atomic_write(path, &json)
}

pub fn load_queries(path: &Path) -> Result<QuerySet> {
    let bytes = super::read_bytes(path)?;
    let entries: Vec<QueryEntry> = serde_json::from_slice(&bytes)
        .map_err(|e| Error::format(path, e.column() as u64, format!("bad query JSON: {e}")))?;
    QuerySet::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("psplat_part_{}_{}", std::process::id(), name))
    }

    fn sample_segments() -> SegmentSet {
        SegmentSet {
            seg_of_primitive: vec![0, 0, 1, 1, 1],
            counts: vec![2, 3],
            normals: vec![Vector3::z(), Vector3::x()],
            features: FeatureMatrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]),
        }
    }

    #[test]
    fn segments_round_trip() {
        let path = tmp("s.bin");
        let seg = sample_segments();
        save_segments(&path, &seg).unwrap();
        let back = load_segments(&path).unwrap();
        assert_eq!(back, seg);
        back.validate_partition().unwrap();
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn corrupt_segment_id_detected() {
        let path = tmp("bad.bin");
        let seg = sample_segments();
        save_segments(&path, &seg).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // primitive 3's id sits at offset 8 + 3*4; bump it out of range
        let off = 8 + 3 * 4;
        bytes[off..off + 4].copy_from_slice(&7u32.to_le_bytes());
        // id 7 implies 8 segments; record bytes no longer divide
        let err = parse_segments(&path, &bytes).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err:?}");
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn instances_round_trip_and_range_check() {
        let path = tmp("i.bin");
        let inst = InstancePartition {
            instance_of_super: vec![0, 1, 1, 2],
            instance_count: 3,
        };
        save_instances(&path, &inst).unwrap();
        assert_eq!(load_instances(&path).unwrap(), inst);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn pano_round_trip_with_unlabeled() {
        let path = tmp("p.bin");
        save_pano(&path, &[0, -1, 3], &[2, -1, 0]).unwrap();
        let (inst, class) = load_pano(&path).unwrap();
        assert_eq!(inst, vec![0, -1, 3]);
        assert_eq!(class, vec![2, -1, 0]);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn queries_round_trip() {
        let path = tmp("q.json");
        let q = QuerySet::new(vec![
            QueryEntry {
                name: "box".into(),
                kind: ClassKind::Thing,
                embedding: vec![1.0, 0.0],
            },
            QueryEntry {
                name: "floor".into(),
                kind: ClassKind::Stuff,
                embedding: vec![0.0, 1.0],
            },
        ])
        .unwrap();
        save_queries(&path, &q).unwrap();
        let back = load_queries(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.entries[1].kind, ClassKind::Stuff);
        assert_eq!(back.class_index("box"), Some(0));
        std::fs::remove_file(&path).ok();
    }
}
