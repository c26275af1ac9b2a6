//! Z-buffer point rasterization producing the synthetic depth, mask, and
//! feature rasters.

use crate::cluster::MaskMap;
use crate::fusion::FeatureMap;
use crate::geometry::{project, CameraView, DepthMap, PrimitiveCloud};
use rand::RngExt;
use rand_chacha::ChaCha12Rng;

const SPLAT_RADIUS: i64 = 1; // 3x3 pixel splat

/// Winner-point index per pixel after z-buffering with a 3-pixel splat.
pub struct RasterWinners {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f64>,
    pub winner: Vec<i64>, // -1 = empty
}

pub fn rasterize(cloud: &PrimitiveCloud, cam: &CameraView) -> RasterWinners {
    let (w, h) = (cam.width as i64, cam.height as i64);
    let mut depth = vec![f64::INFINITY; (w * h) as usize];
    let mut winner = vec![-1i64; (w * h) as usize];
    for (idx, p) in cloud.positions().iter().enumerate() {
        let Some(pd) = project(p, cam) else { continue };
        let cx = pd.u.round() as i64;
        let cy = pd.v.round() as i64;
        if cx < -SPLAT_RADIUS || cy < -SPLAT_RADIUS || cx >= w + SPLAT_RADIUS || cy >= h + SPLAT_RADIUS
        {
            continue;
        }
        for dy in -SPLAT_RADIUS..=SPLAT_RADIUS {
            for dx in -SPLAT_RADIUS..=SPLAT_RADIUS {
                let (x, y) = (cx + dx, cy + dy);
                if x < 0 || y < 0 || x >= w || y >= h {
                    continue;
                }
                let at = (y * w + x) as usize;
                if pd.depth < depth[at] {
                    depth[at] = pd.depth;
                    winner[at] = idx as i64;
                }
            }
        }
    }
    RasterWinners {
        width: cam.width,
        height: cam.height,
        depth,
        winner,
    }
}

/// Depth map quantized to millimeters so the in-memory raster matches a
/// save/load round trip through 16-bit PNG exactly.
pub fn depth_map_from(winners: &RasterWinners) -> DepthMap {
    let meters = winners
        .depth
        .iter()
        .map(|&d| {
            if d.is_finite() {
                (d * 1000.0).round().clamp(0.0, u16::MAX as f64) / 1000.0
            } else {
                0.0
            }
        })
        .collect();
    DepthMap::new(winners.width, winners.height, meters).expect("sized by construction")
}

/// Mask raster: winner's instance id + 1 (0 stays unlabeled), then each
/// thing object splits into two ids with probability `rho_m` along a random
/// line through its pixel centroid.
pub fn mask_from(
    winners: &RasterWinners,
    instance_of: &[i32],
    n_thing_objects: usize,
    n_instances: usize,
    rho_m: f64,
    rng: &mut ChaCha12Rng,
) -> MaskMap {
    let mut labels: Vec<u32> = winners
        .winner
        .iter()
        .map(|&wi| {
            if wi < 0 {
                0
            } else {
                let inst = instance_of[wi as usize];
                if inst < 0 {
                    0
                } else {
                    inst as u32 + 1
                }
            }
        })
        .collect();

    let mut next_id = n_instances as u32 + 1;
    let w = winners.width as usize;
    for obj in 0..n_thing_objects {
        // always draw (split?, angle) so the stream stays aligned across
        // objects regardless of outcomes
        let split = rng.random::<f64>() < rho_m;
        let theta = rng.random::<f64>() * std::f64::consts::TAU;
        if !split {
            continue;
        }
        let id = obj as u32 + 1;
        let mut cx = 0.0f64;
        let mut cy = 0.0f64;
        let mut count = 0usize;
        for (i, &l) in labels.iter().enumerate() {
            if l == id {
                cx += (i % w) as f64;
                cy += (i / w) as f64;
                count += 1;
            }
        }
        if count == 0 {
            continue;
        }
        cx /= count as f64;
        cy /= count as f64;
        let (s, c) = theta.sin_cos();
        let new_id = next_id;
        next_id += 1;
        for (i, l) in labels.iter_mut().enumerate() {
            if *l == id {
                let dx = (i % w) as f64 - cx;
                let dy = (i / w) as f64 - cy;
                if dx * c + dy * s > 0.0 {
                    *l = new_id;
                }
            }
        }
    }

    MaskMap {
        width: winners.width,
        height: winners.height,
        labels,
    }
}

/// Feature raster: winner's class embedding, perturbed per pixel by
/// sigma_f Gaussian noise, renormalized, then rounded through f32 so the
/// in-memory map equals an FMAP save/load round trip exactly.
pub fn feature_map_from(
    winners: &RasterWinners,
    class_of: &[i32],
    embeddings: &[Vec<f64>],
    dim: usize,
    sigma_f: f64,
    rng: &mut ChaCha12Rng,
) -> FeatureMap {
    let n_px = (winners.width * winners.height) as usize;
    let mut data = vec![0.0f64; n_px * dim];
    for (px, &wi) in winners.winner.iter().enumerate() {
        if wi < 0 {
            continue;
        }
        let class = class_of[wi as usize];
        if class < 0 {
            continue;
        }
        let e = &embeddings[class as usize];
        let out = &mut data[px * dim..(px + 1) * dim];
        if sigma_f > 0.0 {
            for (o, &v) in out.iter_mut().zip(e) {
                *o = v + sigma_f * gaussian(rng);
            }
            crate::feat::normalize(out, 1e-9);
        } else {
            out.copy_from_slice(e);
        }
        for o in out.iter_mut() {
            *o = *o as f32 as f64;
        }
    }
    FeatureMap::new(winners.width, winners.height, dim, data).expect("sized by construction")
}

/// Box-Muller standard normal draw.
pub fn gaussian(rng: &mut ChaCha12Rng) -> f64 {
    loop {
        let u1: f64 = rng.random();
        if u1 <= f64::MIN_POSITIVE {
            continue;
        }
        let u2: f64 = rng.random();
        return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
    }
}
