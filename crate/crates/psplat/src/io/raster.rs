//! 16-bit grayscale PNG rasters: depth maps (millimeters, 0 = invalid) and
//! instance-mask label maps (mask ids, 0 = unlabeled).

use crate::cluster::MaskMap;
use crate::error::{Error, Result};
use crate::geometry::DepthMap;
use std::io::Cursor;
use std::path::Path;

fn encode_gray16(width: u32, height: u32, values: &[u16]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(Cursor::new(&mut out), width, height);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Sixteen);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Pipeline(format!("png encode: {e}")))?;
        let mut bytes = Vec::with_capacity(values.len() * 2);
        for v in values {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        writer
            .write_image_data(&bytes)
            .map_err(|e| Error::Pipeline(format!("png encode: {e}")))?;
    }
    Ok(out)
}

fn decode_gray16(path: &Path, bytes: &[u8]) -> Result<(u32, u32, Vec<u16>)> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(path, 0, format!("bad png: {e}")))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(Error::format(
            path,
            0,
            "expected 16-bit grayscale png".to_string(),
        ));
    }
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, 0, format!("bad png data: {e}")))?;
    let data = &buf[..frame.buffer_size()];
    let values = data
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((frame.width, frame.height, values))
}

pub fn save_depth_png(path: &Path, depth: &DepthMap) -> Result<()> {
    let mm: Vec<u16> = depth
        .meters
        .iter()
        .map(|&m| ((m * 1000.0).round().clamp(0.0, u16::MAX as f64)) as u16)
        .collect();
    let bytes = encode_gray16(depth.width, depth.height, &mm)?;
    super::atomic_write(path, &bytes)
}

pub fn load_depth_png(path: &Path) -> Result<DepthMap> {
    let bytes = super::read_bytes(path)?;
    let (width, height, mm) = decode_gray16(path, &bytes)?;
    let meters = mm.iter().map(|&v| v as f64 / 1000.0).collect();
    DepthMap::new(width, height, meters)
}

pub fn save_mask_png(path: &Path, mask: &MaskMap) -> Result<()> {
    let ids: Vec<u16> = mask
        .labels
        .iter()
        .map(|&v| {
            u16::try_from(v).unwrap_or_else(|_| panic!("mask id {v} exceeds 16-bit png range"))
        })
        .collect();
    let bytes = encode_gray16(mask.width, mask.height, &ids)?;
    super::atomic_write(path, &bytes)
}

pub fn load_mask_png(path: &Path) -> Result<MaskMap> {
    let bytes = super::read_bytes(path)?;
    let (width, height, ids) = decode_gray16(path, &bytes)?;
    Ok(MaskMap {
        width,
        height,
        labels: ids.into_iter().map(u32::from).collect(),
    })
}
