//! FMAP feature-map blobs and FUSE fused-cloud files.
//!
//! FMAP: magic "FMAP", u32 version=1, u32 H, u32 W, u32 D, then H*W*D f32
//! little-endian row-major. FUSE: magic "FUSE", u32 N, u32 D, then N*D f32
//! features, N f32 confidences, N u32 observation counts.

use super::{ByteReader, ByteWriter};
use crate::error::Result;
use crate::feat::FeatureMatrix;
use crate::fusion::{FeatureMap, FusedFeatureCloud};
use std::path::Path;

pub const FMAP_VERSION: u32 = 1;

pub fn save_feature_map(path: &Path, fmap: &FeatureMap) -> Result<()> {
    let mut w = ByteWriter::new();
    w.magic(b"FMAP")
        .u32(FMAP_VERSION)
        .u32(fmap.height)
        .u32(fmap.width)
        .u32(fmap.dim as u32)
        .f32_slice(fmap.data().iter().map(|&v| v as f32));
    super::atomic_write(path, &w.into_bytes())
}

pub fn load_feature_map(path: &Path) -> Result<FeatureMap> {
    let bytes = super::read_bytes(path)?;
    parse_feature_map(path, &bytes)
}

pub fn parse_feature_map(path: &Path, bytes: &[u8]) -> Result<FeatureMap> {
    let mut r = ByteReader::new(path, bytes);
    r.expect_magic(b"FMAP")?;
    let version = r.u32("version")?;
    if version != FMAP_VERSION {
        return Err(r.error(format!("unsupported FMAP version {version}")));
    }
    let h = r.u32("height")?;
    let w = r.u32("width")?;
    let d = r.u32("dim")? as usize;
    if d == 0 {
        return Err(r.error("zero feature dimension"));
    }
    let data = r.f32_slice(h as usize * w as usize * d, "feature data")?;
    r.finish()?;
    let mut fmap = FeatureMap::new(w, h, d, data.into_iter().map(f64::from).collect())?;
    // valid pixels hold unit vectors after load
    fmap.normalize_pixels();
    Ok(fmap)
}

pub fn save_fused(path: &Path, fused: &FusedFeatureCloud) -> Result<()> {
    let mut w = ByteWriter::new();
    w.magic(b"FUSE")
        .u32(fused.len() as u32)
        .u32(fused.dim() as u32)
        .f32_slice(fused.features.as_slice().iter().map(|&v| v as f32))
        .f32_slice(fused.confidence.iter().map(|&v| v as f32))
        .u32_slice(fused.obs_count.iter().copied());
    super::atomic_write(path, &w.into_bytes())
}

pub fn load_fused(path: &Path) -> Result<FusedFeatureCloud> {
    let bytes = super::read_bytes(path)?;
    parse_fused(path, &bytes)
}

pub fn parse_fused(path: &Path, bytes: &[u8]) -> Result<FusedFeatureCloud> {
    let mut r = ByteReader::new(path, bytes);
    r.expect_magic(b"FUSE")?;
    let n = r.u32("count")? as usize;
    let d = r.u32("dim")? as usize;
    if d == 0 {
        return Err(r.error("zero feature dimension"));
    }
    let feats = r.f32_slice(n * d, "features")?;
    let conf = r.f32_slice(n, "confidences")?;
    let obs = r.u32_slice(n, "observation counts")?;
    r.finish()?;
    let valid: Vec<bool> = obs.iter().map(|&c| c >= 1).collect();
    Ok(FusedFeatureCloud {
        features: FeatureMatrix::from_flat(n, d, feats.into_iter().map(f64::from).collect()),
        confidence: conf.into_iter().map(f64::from).collect(),
        obs_count: obs,
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn tmp(name: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("psplat_fmap_{}_{}", std::process::id(), name))
    }

    #[test]
    fn feature_map_round_trip_renormalizes() {
        let path = tmp("a.bin");
        let fmap = FeatureMap::new(2, 1, 2, vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        save_feature_map(&path, &fmap).unwrap();
        let back = load_feature_map(&path).unwrap();
        assert_eq!(back.pixel(0, 0), &[1.0, 0.0]); // normalized on load
        assert_eq!(back.pixel(1, 0), &[0.0, 0.0]); // invalid pixel untouched
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn fused_round_trip() {
        let path = tmp("b.bin");
        let fused = FusedFeatureCloud {
            features: FeatureMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]),
            confidence: vec![2.5, 0.0],
            obs_count: vec![3, 0],
            valid: vec![true, false],
        };
        save_fused(&path, &fused).unwrap();
        let back = load_fused(&path).unwrap();
        assert_eq!(back.obs_count, fused.obs_count);
        assert_eq!(back.valid, vec![true, false]);
        assert_eq!(back.features.row(0), &[1.0, 0.0]);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn truncated_fused_reports_offset() {
        let path = tmp("c.bin");
        let mut w = ByteWriter::new();
        w.magic(b"FUSE").u32(2).u32(4); // declares 2x4 but no data
        let bytes = w.into_bytes();
        match parse_fused(&path, &bytes).unwrap_err() {
            Error::Format { offset, message, .. } => {
                assert_eq!(offset, 12);
                assert!(message.contains("truncated"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
