//! Camera rig JSON: an array of pinhole views with row-major 4x4 poses and
//! optional per-view raster file references, resolved relative to the JSON.

use crate::error::{Error, Result};
use crate::geometry::CameraView;
use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraRecord {
    pub view_id: u32,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// row-major 4x4 world-to-camera rigid transform
    pub world_to_camera: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_file: Option<String>,
}

impl CameraRecord {
    pub fn from_view(view: &CameraView) -> Self {
        let m = &view.world_to_camera;
        let mut flat = Vec::with_capacity(16);
        for r in 0..4 {
            for c in 0..4 {
                flat.push(m[(r, c)]);
            }
        }
        let name = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
        };
        Self {
            view_id: view.view_id,
            width: view.width,
            height: view.height,
            fx: view.fx,
            fy: view.fy,
            cx: view.cx,
            cy: view.cy,
            world_to_camera: flat,
            depth_file: name(&view.depth_file),
            feature_file: name(&view.feature_file),
            mask_file: name(&view.mask_file),
        }
    }

    pub fn into_view(self, base_dir: &Path) -> Result<CameraView> {
        if self.world_to_camera.len() != 16 {
            return Err(Error::Config(format!(
                "view {}: world_to_camera must hold 16 floats, got {}",
                self.view_id,
                self.world_to_camera.len()
            )));
        }
        let mut m = Matrix4::zeros();
        for r in 0..4 {
            for c in 0..4 {
                m[(r, c)] = self.world_to_camera[r * 4 + c];
            }
        }
        let resolve = |f: Option<String>| f.map(|f| base_dir.join(f));
        let view = CameraView {
            view_id: self.view_id,
            width: self.width,
            height: self.height,
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            world_to_camera: m,
            depth: None,
            depth_file: resolve(self.depth_file),
            feature_file: resolve(self.feature_file),
            mask_file: resolve(self.mask_file),
        };
        view.validate()?;
        Ok(view)
    }
}

pub fn save_cameras(path: &Path, views: &[CameraView]) -> Result<()> {
    let records: Vec<CameraRecord> = views.iter().map(CameraRecord::from_view).collect();
    let json = serde_json::to_vec_pretty(&records)
        .map_err(|e| Error::Pipeline(format!("camera serialization failed: {e}")))?;
    super::atomic_write(path, &json)
}

/// Loads views and, when `with_depth` is set, their referenced depth maps.
pub fn load_cameras(path: &Path, with_depth: bool) -> Result<Vec<CameraView>> {
    let bytes = super::read_bytes(path)?;
    let records: Vec<CameraRecord> = serde_json::from_slice(&bytes)
        .map_err(|e| Error::format(path, e.column() as u64, format!("bad camera JSON: {e}")))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut views = Vec::with_capacity(records.len());
    for rec in records {
        let mut view = rec.into_view(base)?;
        if with_depth {
            if let Some(depth_path) = view.depth_file.clone() {
                view.depth = Some(super::raster::load_depth_png(&depth_path)?);
            }
        }
        views.push(view);
    }
    views.sort_by_key(|v| v.view_id);
    Ok(views)
}
