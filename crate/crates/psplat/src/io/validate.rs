//! Format validation: identifies a file by magic/extension, checks declared
//! against actual sizes, and lists invariant violations.

use crate::error::{Error, Result};
use crate::feat;
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, Serialize)]
pub struct FormatReport {
    pub path: String,
    pub format: String,
    pub violations: Vec<String>,
}

impl FormatReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn violation_of(err: Error) -> String {
    err.to_string()
}

pub fn validate_file(path: &Path) -> Result<FormatReport> {
    let bytes = super::read_bytes(path)?;
    let mut report = FormatReport {
        path: path.display().to_string(),
        format: "unknown".into(),
        violations: Vec::new(),
    };

    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let magic: &[u8] = if bytes.len() >= 4 { &bytes[..4] } else { &[] };

    match (magic, ext) {
        (b"FMAP", _) => {
            report.format = "FMAP feature map".into();
            if let Err(e) = super::fmap::parse_feature_map(path, &bytes) {
                report.violations.push(violation_of(e));
            }
        }
        (b"FUSE", _) => {
            report.format = "FUSE fused feature cloud".into();
            match super::fmap::parse_fused(path, &bytes) {
                Err(e) => report.violations.push(violation_of(e)),
                Ok(fused) => {
                    for i in 0..fused.len() {
                        let row = fused.features.row(i);
                        if fused.valid[i] {
                            if !feat::is_unit(row, 1e-3) {
                                report.violations.push(format!(
                                    "primitive {i}: fused feature norm {:.6} not unit",
                                    feat::norm(row)
                                ));
                            }
                        } else if fused.confidence[i] != 0.0 || row.iter().any(|&v| v != 0.0) {
                            report
                                .violations
                                .push(format!("primitive {i}: unobserved row must be zero"));
                        }
                        if fused.confidence[i] < 0.0 {
                            report
                                .violations
                                .push(format!("primitive {i}: negative confidence"));
                        }
                    }
                }
            }
        }
        (b"TRIP", _) => {
            report.format = "TRIP field checkpoint".into();
            if let Err(e) = super::trip::parse_field(path, &bytes) {
                report.violations.push(violation_of(e));
            }
        }
        (b"SUPR", _) => {
            report.format = "SUPR super-primitive partition".into();
            match super::part::parse_segments(path, &bytes) {
                Err(e) => report.violations.push(violation_of(e)),
                Ok(seg) => {
                    if let Err(e) = seg.validate_partition() {
                        report.violations.push(violation_of(e));
                    }
                    for (s, n) in seg.normals.iter().enumerate() {
                        if (n.norm() - 1.0).abs() > 1e-3 {
                            report.violations.push(format!(
                                "segment {s}: aggregate normal norm {:.6} not unit",
                                n.norm()
                            ));
                        }
                    }
                }
            }
        }
        (b"INST", _) => {
            report.format = "INST instance partition".into();
            if let Err(e) = super::part::load_instances(path) {
                report.violations.push(violation_of(e));
            }
        }
        (b"PANO", _) => {
            report.format = "PANO panoptic labeling".into();
            if let Err(e) = super::part::load_pano(path) {
                report.violations.push(violation_of(e));
            }
        }
        _ if bytes.starts_with(b"ply") => {
            report.format = "PLY primitive cloud".into();
            match super::ply::parse_cloud(path, &bytes) {
                Err(e) => report.violations.push(violation_of(e)),
                Ok(cloud) => {
                    if let Some(normals) = cloud.normals() {
                        for (i, n) in normals.iter().enumerate() {
                            if (n.norm() - 1.0).abs() > 1e-3 {
                                report.violations.push(format!(
                                    "primitive {i}: normal norm {:.6} not unit",
                                    n.norm()
                                ));
                            }
                        }
                    }
                }
            }
        }
        _ if ext == "png" => {
            report.format = "16-bit PNG raster".into();
            if let Err(e) = super::raster::load_mask_png(path) {
                report.violations.push(violation_of(e));
            }
        }
        _ if ext == "json" => {
            report.format = "JSON".into();
            // try the known schemas in turn
            if super::cameras::load_cameras(path, false).is_ok()
                || super::part::load_queries(path).is_ok()
                || serde_json::from_slice::<serde_json::Value>(&bytes).is_ok()
            {
                // structurally valid JSON of some known or generic shape
            } else {
                report.violations.push("unparseable JSON".into());
            }
        }
        _ => {
            report
                .violations
                .push("unrecognized magic/extension".to_string());
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feat::FeatureMatrix;
    use crate::fusion::FusedFeatureCloud;

    fn tmp(name: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("psplat_val_{}_{}", std::process::id(), name))
    }

    #[test]
    fn valid_fuse_has_no_violations() {
        let path = tmp("ok.fuse");
        let fused = FusedFeatureCloud {
            features: FeatureMatrix::from_rows(&[vec![0.6, 0.8], vec![0.0, 0.0]]),
            confidence: vec![1.0, 0.0],
            obs_count: vec![2, 0],
            valid: vec![true, false],
        };
        super::super::fmap::save_fused(&path, &fused).unwrap();
        let report = validate_file(&path).unwrap();
        assert!(report.is_clean(), "{:?}", report.violations);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn truncated_trip_reports_size_violation() {
        use crate::field::{FieldConfig, FieldModel};
        use crate::geometry::Aabb;
        use nalgebra::Vector3;
        let path = tmp("t.trip");
        let cfg = FieldConfig {
            resolutions: vec![4],
            channels: 2,
            hidden: 4,
            aabb_expand: 0.0,
            init_scale: 0.1,
        };
        let aabb = Aabb {
            min: Vector3::zeros(),
            max: Vector3::new(1.0, 1.0, 1.0),
        };
        let model = FieldModel::new(&cfg, aabb, 3, 0).unwrap();
        super::super::trip::save_field(&path, &model).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 10);
        std::fs::write(&path, &bytes).unwrap();
        let report = validate_file(&path).unwrap();
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].contains("truncated"), "{:?}", report.violations);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn non_partitioning_supr_names_primitive() {
        use crate::supersegment::SegmentSet;
        use nalgebra::Vector3;
        let path = tmp("bad.supr");
        let seg = SegmentSet {
            seg_of_primitive: vec![0, 0, 1],
            counts: vec![2, 1],
            normals: vec![Vector3::z(), Vector3::z()],
            features: FeatureMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]),
        };
        super::super::part::save_segments(&path, &seg).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // ids start at byte 8; point primitive 2 at segment 0 so the stored
        // counts no longer partition the primitives
        let off = 8 + 2 * 4;
        bytes[off..off + 4].copy_from_slice(&0u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        let report = validate_file(&path).unwrap();
        assert!(!report.is_clean());
        assert!(
            report.violations.iter().any(|v| v.contains("primitive")),
            "{:?}",
            report.violations
        );
        std::fs::remove_file(&path).ok();
    }
}
