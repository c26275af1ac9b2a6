//! The latent pyramid tri-plane field, its MLP feature decoder, and the
//! confidence-weighted cosine distillation that fits both to a fused
//! feature cloud.
//!
//! A query at world position mu normalizes the position into the scene
//! bounds, bilinearly interpolates each of the three axis-aligned planes at
//! every resolution level, concatenates the three C-vectors per level, and
//! concatenates levels coarse-to-fine; the decoder lifts that latent code to
//! a unit-length language feature.

mod decoder;
mod distill;

pub use decoder::{DecodeTrace, FeatureDecoder, Linear};
pub use distill::{
    distill, loss, loss_value, BatchItem, DistillConfig, DistillHistory, FieldModel, GradStore,
};

use crate::error::{Error, Result};
use crate::geometry::Aabb;
use nalgebra::{Point3, Vector3};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    /// strictly increasing per-level plane resolutions
    pub resolutions: Vec<usize>,
    /// latent channels per plane
    pub channels: usize,
    /// decoder hidden width
    pub hidden: usize,
    /// fraction by which the cloud AABB grows per side before normalization
    pub aabb_expand: f64,
    /// plane values initialize uniform in [-init_scale, init_scale]
    pub init_scale: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            resolutions: vec![64, 128, 256],
            channels: 8,
            hidden: 128,
            aabb_expand: 0.05,
            init_scale: 1e-4,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolutions.is_empty() {
            return Err(Error::Config("field needs at least one level".into()));
        }
        for w in self.resolutions.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config(
                    "plane resolutions must be strictly increasing".into(),
                ));
            }
        }
        if self.resolutions[0] < 2 {
            return Err(Error::Config("plane resolution must be >= 2".into()));
        }
        if self.channels == 0 || self.hidden == 0 {
            return Err(Error::Config("channels and hidden width must be positive".into()));
        }
        Ok(())
    }
}

/// One R x R x C node grid; nodes sit at (i/(R-1), j/(R-1)) in the unit
/// square of its coordinate pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneGrid {
    pub res: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl PlaneGrid {
    pub fn zeros(res: usize, channels: usize) -> Self {
        Self {
            res,
            channels,
            data: vec![0.0; res * res * channels],
        }
    }

    #[inline]
    pub fn node_offset(&self, i: usize, j: usize) -> usize {
        (i * self.res + j) * self.channels
    }

    pub fn node(&self, i: usize, j: usize) -> &[f64] {
        let o = self.node_offset(i, j);
        &self.data[o..o + self.channels]
    }

    pub fn node_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let o = self.node_offset(i, j);
        &mut self.data[o..o + self.channels]
    }
}

/// Bilinear footprint of one plane lookup: four (node byte offset, weight)
/// pairs, reused by the backward pass.
#[derive(Debug, Clone, Copy)]
pub struct PlaneTap {
    pub corners: [(usize, f64); 4],
}

fn plane_tap(res: usize, channels: usize, a: f64, b: f64) -> PlaneTap {
    // a, b in [0,1]; scale onto the node lattice
    let fa = a * (res - 1) as f64;
    let fb = b * (res - 1) as f64;
    let i0 = (fa.floor() as usize).min(res - 2);
    let j0 = (fb.floor() as usize).min(res - 2);
    let ta = fa - i0 as f64;
    let tb = fb - j0 as f64;
    let off = |i: usize, j: usize| (i * res + j) * channels;
    PlaneTap {
        corners: [
            (off(i0, j0), (1.0 - ta) * (1.0 - tb)),
            (off(i0 + 1, j0), ta * (1.0 - tb)),
            (off(i0, j0 + 1), (1.0 - ta) * tb),
            (off(i0 + 1, j0 + 1), ta * tb),
        ],
    }
}

#[derive(Debug, Clone)]
pub struct TriPlaneLevel {
    pub res: usize,
    /// planes indexed xy, yz, xz
    pub planes: [PlaneGrid; 3],
}

/// Which normalized coordinates feed each plane, in (row, col) order.
const PLANE_AXES: [(usize, usize); 3] = [(0, 1), (1, 2), (0, 2)];

#[derive(Debug, Clone)]
pub struct PyramidTriPlane {
    pub levels: Vec<TriPlaneLevel>,
    pub channels: usize,
    pub aabb: Aabb,
}

/// Forward-pass record for one query: normalized position plus the bilinear
/// taps per (level, plane), enough to scatter latent gradients back into the
/// plane tensors.
#[derive(Debug, Clone)]
pub struct QueryTrace {
    pub taps: Vec<[PlaneTap; 3]>,
}

impl PyramidTriPlane {
    pub fn new(cfg: &FieldConfig, aabb: Aabb, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let levels = cfg
            .resolutions
            .iter()
            .map(|&res| {
                let mut mk = || {
                    let mut g = PlaneGrid::zeros(res, cfg.channels);
                    for v in g.data.iter_mut() {
                        *v = (rng.random::<f64>() * 2.0 - 1.0) * cfg.init_scale;
                    }
                    g
                };
                TriPlaneLevel {
                    res,
                    planes: [mk(), mk(), mk()],
                }
            })
            .collect();
        Ok(Self {
            levels,
            channels: cfg.channels,
            aabb,
        })
    }

    /// Length of the latent code: 3 * C * L.
    pub fn latent_dim(&self) -> usize {
        3 * self.channels * self.levels.len()
    }

    /// Latent code at a world position; out-of-bounds positions clamp onto
    /// the AABB before interpolation.
    pub fn query(&self, position: &Point3<f64>) -> Vec<f64> {
        self.query_traced(position).0
    }

    pub fn query_traced(&self, position: &Point3<f64>) -> (Vec<f64>, QueryTrace) {
        let u: Vector3<f64> = self.aabb.normalize_clamped(position);
        let c = self.channels;
        let mut out = vec![0.0; self.latent_dim()];
        let mut taps = Vec::with_capacity(self.levels.len());
        for (li, level) in self.levels.iter().enumerate() {
            let mut level_taps = [PlaneTap {
                corners: [(0, 0.0); 4],
            }; 3];
            for (pi, &(ra, rb)) in PLANE_AXES.iter().enumerate() {
                let tap = plane_tap(level.res, c, u[ra], u[rb]);
                let plane = &level.planes[pi];
                let seg = &mut out[(li * 3 + pi) * c..(li * 3 + pi + 1) * c];
                for &(off, w) in &tap.corners {
                    if w != 0.0 {
                        for (o, v) in seg.iter_mut().zip(&plane.data[off..off + c]) {
                            *o += w * v;
                        }
                    }
                }
                level_taps[pi] = tap;
            }
            taps.push(level_taps);
        }
        (out, QueryTrace { taps })
    }

    /// Scatters a latent-code gradient back into per-plane gradient buffers
    /// laid out like [`FieldModel`] plane tensors (level-major, xy/yz/xz).
    pub fn backprop_latent(&self, trace: &QueryTrace, d_latent: &[f64], plane_grads: &mut [Vec<f64>]) {
        let c = self.channels;
        for (li, level_taps) in trace.taps.iter().enumerate() {
            for pi in 0..3 {
                let grad = &mut plane_grads[li * 3 + pi];
                let dseg = &d_latent[(li * 3 + pi) * c..(li * 3 + pi + 1) * c];
                for &(off, w) in &level_taps[pi].corners {
                    if w != 0.0 {
                        for (g, d) in grad[off..off + c].iter_mut().zip(dseg) {
                            *g += w * d;
                        }
                    }
                }
            }
        }
    }
}
