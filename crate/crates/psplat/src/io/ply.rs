//! Binary little-endian PLY with elements x,y,z (float32), optional
//! nx,ny,nz (float32), and optional red,green,blue (uint8).

use crate::error::{Error, Result};
use crate::geometry::PrimitiveCloud;
use nalgebra::{Point3, Vector3};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Prop {
    X,
    Y,
    Z,
    Nx,
    Ny,
    Nz,
    Red,
    Green,
    Blue,
}

impl Prop {
    fn parse(ty: &str, name: &str) -> Option<Self> {
        let p = match name {
            "x" => Prop::X,
            "y" => Prop::Y,
            "z" => Prop::Z,
            "nx" => Prop::Nx,
            "ny" => Prop::Ny,
            "nz" => Prop::Nz,
            "red" => Prop::Red,
            "green" => Prop::Green,
            "blue" => Prop::Blue,
            _ => return None,
        };
        let ok = match p {
            Prop::Red | Prop::Green | Prop::Blue => ty == "uchar" || ty == "uint8",
            _ => ty == "float" || ty == "float32",
        };
        ok.then_some(p)
    }

    fn size(self) -> usize {
        match self {
            Prop::Red | Prop::Green | Prop::Blue => 1,
            _ => 4,
        }
    }
}

pub fn save_cloud(path: &Path, cloud: &PrimitiveCloud) -> Result<()> {
    let mut header = String::new();
    header.push_str("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", cloud.len()));
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.normals().is_some() {
        header.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    if cloud.colors().is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str("end_header\n");

    let mut bytes = header.into_bytes();
    for i in 0..cloud.len() {
        let p = cloud.position(i);
        for v in [p.x, p.y, p.z] {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        if let Some(normals) = cloud.normals() {
            let n = normals[i];
            for v in [n.x, n.y, n.z] {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        if let Some(colors) = cloud.colors() {
            for v in colors[i] {
                bytes.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    super::atomic_write(path, &bytes)
}

pub fn load_cloud(path: &Path) -> Result<PrimitiveCloud> {
    let bytes = super::read_bytes(path)?;
    parse_cloud(path, &bytes)
}

pub fn parse_cloud(path: &Path, bytes: &[u8]) -> Result<PrimitiveCloud> {
    let fail = |offset: usize, msg: &str| Error::format(path, offset as u64, msg);

    // header is ascii lines up to end_header
    let mut pos = 0usize;
    let mut line_no = 0usize;
    let mut count: Option<usize> = None;
    let mut props: Vec<Prop> = Vec::new();
    let mut in_vertex_element = false;
    loop {
        let nl = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| fail(pos, "header not terminated by end_header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + nl])
            .map_err(|_| fail(pos, "non-utf8 header line"))?
            .trim_end_matches('\r')
            .trim();
        let line_start = pos;
        pos += nl + 1;

        match line_no {
            0 if line != "ply" => return Err(fail(line_start, "missing ply signature")),
            1 if line != "format binary_little_endian 1.0" => {
                return Err(fail(line_start, "only binary_little_endian 1.0 is supported"))
            }
            _ => {}
        }
        line_no += 1;
        if line_no <= 2 {
            continue;
        }

        if line == "end_header" {
            break;
        }
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("comment") => {}
            Some("element") => {
                let name = tok.next().unwrap_or("");
                if name == "vertex" {
                    in_vertex_element = true;
                    count = Some(
                        tok.next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| fail(line_start, "bad vertex count"))?,
                    );
                } else {
                    return Err(fail(line_start, "unsupported element"));
                }
            }
            Some("property") if in_vertex_element => {
                let ty = tok.next().unwrap_or("");
                let name = tok.next().unwrap_or("");
                let p = Prop::parse(ty, name)
                    .ok_or_else(|| fail(line_start, "unsupported vertex property"))?;
                props.push(p);
            }
            _ => return Err(fail(line_start, "unexpected header line")),
        }
    }

    let count = count.ok_or_else(|| fail(pos, "no vertex element declared"))?;
    for req in [Prop::X, Prop::Y, Prop::Z] {
        if !props.contains(&req) {
            return Err(fail(pos, "missing x/y/z properties"));
        }
    }
    let has_normals = props.contains(&Prop::Nx);
    if has_normals && !(props.contains(&Prop::Ny) && props.contains(&Prop::Nz)) {
        return Err(fail(pos, "incomplete normal properties"));
    }
    let has_colors = props.contains(&Prop::Red);
    if has_colors && !(props.contains(&Prop::Green) && props.contains(&Prop::Blue)) {
        return Err(fail(pos, "incomplete color properties"));
    }

    let stride: usize = props.iter().map(|p| p.size()).sum();
    let need = count * stride;
    if bytes.len() - pos < need {
        return Err(fail(
            bytes.len(),
            &format!(
                "vertex data truncated: need {need} bytes, have {}",
                bytes.len() - pos
            ),
        ));
    }

    let mut positions = Vec::with_capacity(count);
    let mut normals = has_normals.then(|| Vec::with_capacity(count));
    let mut colors = has_colors.then(|| Vec::with_capacity(count));

    for vi in 0..count {
        let mut off = pos + vi * stride;
        let mut xyz = [0f64; 3];
        let mut nrm = [0f64; 3];
        let mut rgb = [0f32; 3];
        for p in &props {
            match p {
                Prop::Red | Prop::Green | Prop::Blue => {
                    let v = bytes[off] as f32 / 255.0;
                    match p {
                        Prop::Red => rgb[0] = v,
                        Prop::Green => rgb[1] = v,
                        _ => rgb[2] = v,
                    }
                }
                _ => {
                    let v =
                        f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
                    if !v.is_finite() {
                        return Err(fail(off, "non-finite float in vertex data"));
                    }
                    match p {
                        Prop::X => xyz[0] = v,
                        Prop::Y => xyz[1] = v,
                        Prop::Z => xyz[2] = v,
                        Prop::Nx => nrm[0] = v,
                        Prop::Ny => nrm[1] = v,
                        Prop::Nz => nrm[2] = v,
                        _ => unreachable!(),
                    }
                }
            }
            off += p.size();
        }
        positions.push(Point3::new(xyz[0], xyz[1], xyz[2]));
        if let Some(ns) = normals.as_mut() {
            ns.push(Vector3::new(nrm[0], nrm[1], nrm[2]));
        }
        if let Some(cs) = colors.as_mut() {
            cs.push(rgb);
        }
    }

    let mut cloud = PrimitiveCloud::new(positions)?;
    if let Some(ns) = normals {
        // f32 storage wobbles the norm; renormalize before the strict check
        let ns = ns
            .into_iter()
            .map(|n| if n.norm() > 1e-9 { n.normalize() } else { n })
            .collect();
        cloud = cloud.with_normals(ns)?;
    }
    if let Some(cs) = colors {
        cloud = cloud.with_colors(cs)?;
    }
    Ok(cloud)
}
