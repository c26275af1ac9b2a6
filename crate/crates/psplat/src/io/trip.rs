//! TRIP field checkpoints: magic "TRIP", u32 version, u32 L, u32 C, AABB as
//! 6 f64, then per level R_l followed by the xy/yz/xz plane tensors as f32,
//! then the decoder layer widths and row-major weight matrices as f32.

use super::{ByteReader, ByteWriter};
use crate::error::Result;
use crate::field::{FeatureDecoder, FieldModel, PlaneGrid, PyramidTriPlane, TriPlaneLevel};
use crate::geometry::Aabb;
use nalgebra::Vector3;
use std::path::Path;

pub const TRIP_VERSION: u32 = 1;

pub fn save_field(path: &Path, model: &FieldModel) -> Result<()> {
    let field = &model.field;
    let mut w = ByteWriter::new();
    w.magic(b"TRIP")
        .u32(TRIP_VERSION)
        .u32(field.levels.len() as u32)
        .u32(field.channels as u32);
    for a in 0..3 {
        w.f64(field.aabb.min[a]);
    }
    for a in 0..3 {
        w.f64(field.aabb.max[a]);
    }
    for level in &field.levels {
        w.u32(level.res as u32);
        for plane in &level.planes {
            w.f32_slice(plane.data.iter().map(|&v| v as f32));
        }
    }
    let widths = model.decoder.widths();
    w.u32(widths.len() as u32);
    for width in &widths {
        w.u32(*width as u32);
    }
    for layer in &model.decoder.layers {
        w.f32_slice(layer.w.iter().map(|&v| v as f32));
        w.f32_slice(layer.b.iter().map(|&v| v as f32));
    }
    super::atomic_write(path, &w.into_bytes())
}

pub fn load_field(path: &Path) -> Result<FieldModel> {
    let bytes = super::read_bytes(path)?;
    parse_field(path, &bytes)
}

pub fn parse_field(path: &Path, bytes: &[u8]) -> Result<FieldModel> {
    let mut r = ByteReader::new(path, bytes);
    r.expect_magic(b"TRIP")?;
    let version = r.u32("version")?;
    if version != TRIP_VERSION {
        return Err(r.error(format!("unsupported TRIP version {version}")));
    }
    let levels = r.u32("level count")? as usize;
    let channels = r.u32("channels")? as usize;
    if levels == 0 || channels == 0 {
        return Err(r.error("level count and channels must be positive"));
    }
    let mut min = Vector3::zeros();
    let mut max = Vector3::zeros();
    for a in 0..3 {
        min[a] = r.f64("aabb min")?;
    }
    for a in 0..3 {
        max[a] = r.f64("aabb max")?;
    }
    if (0..3).any(|a| !(max[a] > min[a])) {
        return Err(r.error("aabb must have positive extent on all axes"));
    }

    let mut field_levels = Vec::with_capacity(levels);
    let mut prev_res = 0usize;
    for li in 0..levels {
        let res = r.u32("plane resolution")? as usize;
        if res < 2 {
            return Err(r.error(format!("level {li}: resolution {res} < 2")));
        }
        if res <= prev_res {
            return Err(r.error(format!(
                "level {li}: resolution {res} not strictly increasing over {prev_res}"
            )));
        }
        prev_res = res;
        let mut planes = Vec::with_capacity(3);
        for name in ["xy", "yz", "xz"] {
            let data = r.f32_slice(res * res * channels, &format!("level {li} plane {name}"))?;
            planes.push(PlaneGrid {
                res,
                channels,
                data: data.into_iter().map(f64::from).collect(),
            });
        }
        let planes: [PlaneGrid; 3] = planes.try_into().unwrap();
        field_levels.push(TriPlaneLevel { res, planes });
    }

    let n_widths = r.u32("decoder width count")? as usize;
    if n_widths < 2 {
        return Err(r.error("decoder needs at least input and output widths"));
    }
    let mut widths = Vec::with_capacity(n_widths);
    for _ in 0..n_widths {
        widths.push(r.u32("decoder width")? as usize);
    }
    if widths[0] != 3 * channels * levels {
        return Err(r.error(format!(
            "decoder input width {} != 3*C*L = {}",
            widths[0],
            3 * channels * levels
        )));
    }
    let mut layers = Vec::with_capacity(n_widths - 1);
    for pair in widths.windows(2) {
        let (in_dim, out_dim) = (pair[0], pair[1]);
        let wdata = r.f32_slice(in_dim * out_dim, "decoder weights")?;
        let bdata = r.f32_slice(out_dim, "decoder biases")?;
        layers.push(crate::field::Linear {
            in_dim,
            out_dim,
            w: wdata.into_iter().map(f64::from).collect(),
            b: bdata.into_iter().map(f64::from).collect(),
        });
    }
    r.finish()?;

    let field = PyramidTriPlane {
        levels: field_levels,
        channels,
        aabb: Aabb { min, max },
    };
    let decoder = FeatureDecoder::from_layers(layers)?;
    Ok(FieldModel { field, decoder })
}
