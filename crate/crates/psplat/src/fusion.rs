//! Multi-view 2D feature fusion: back-projects per-view feature maps onto
//! primitives, pools samples into a per-primitive fused feature, and scores
//! each with a confidence
//!
//!   gamma = (obs_count / m) / (sum_d Var_d + eps), clamped to gamma_max,
//!
//! where the variance is the per-dimension population variance of the
//! observed samples. Occlusion handling is sample exclusion through the
//! depth test rather than continuous weights.

use crate::error::{Error, Result};
use crate::feat::{self, FeatureMatrix};
use crate::geometry::{visible_projection, CameraView, PrimitiveCloud};

/// Minimum pre-normalization norm for a bilinear sample or pooled mean to
/// count as non-degenerate.
const DEGENERATE_NORM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub depth_tol: f64,
    pub eps: f64,
    pub gamma_max: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            depth_tol: 0.05,
            eps: 1e-6,
            gamma_max: 1e4,
        }
    }
}

/// H x W x D row-major feature raster; all-zero pixels are invalid (no
/// feature), every other pixel is kept unit-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub width: u32,
    pub height: u32,
    pub dim: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(width: u32, height: u32, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width as usize * height as usize * dim {
            return Err(Error::Config(format!(
                "feature map buffer {} != {}x{}x{}",
                data.len(),
                width,
                height,
                dim
            )));
        }
        Ok(Self {
            width,
            height,
            dim,
            data,
        })
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[f64] {
        let i = (y as usize * self.width as usize + x as usize) * self.dim;
        &self.data[i..i + self.dim]
    }

    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [f64] {
        let i = (y as usize * self.width as usize + x as usize) * self.dim;
        &mut self.data[i..i + self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Unit-normalizes every valid (non-zero) pixel in place.
    pub fn normalize_pixels(&mut self) {
        for px in self.data.chunks_exact_mut(self.dim) {
            feat::normalize(px, DEGENERATE_NORM);
        }
    }

    /// Bilinear sample at continuous pixel coordinates, renormalized to unit
    /// length. None when out of frame or when the interpolated vector is
    /// degenerate (all four corners invalid).
    pub fn sample_bilinear(&self, u: f64, v: f64) -> Option<Vec<f64>> {
        let (w, h) = (self.width as f64, self.height as f64);
        if u < 0.0 || v < 0.0 || u > w - 1.0 || v > h - 1.0 {
            return None;
        }
        // each axis clamps independently so 1-pixel-wide maps still work
        let x0 = (u.floor() as u32).min(self.width.saturating_sub(2));
        let y0 = (v.floor() as u32).min(self.height.saturating_sub(2));
        let x1 = if self.width == 1 { 0 } else { x0 + 1 };
        let y1 = if self.height == 1 { 0 } else { y0 + 1 };
        let tx = (u - x0 as f64).clamp(0.0, 1.0);
        let ty = (v - y0 as f64).clamp(0.0, 1.0);

        let mut out = vec![0.0; self.dim];
        let mut add = |x: u32, y: u32, w: f64| {
            if w == 0.0 {
                return;
            }
            for (o, s) in out.iter_mut().zip(self.pixel(x, y)) {
                *o += w * s;
            }
        };
        add(x0, y0, (1.0 - tx) * (1.0 - ty));
        add(x1, y0, tx * (1.0 - ty));
        add(x0, y1, (1.0 - tx) * ty);
        add(x1, y1, tx * ty);

        feat::normalize(&mut out, DEGENERATE_NORM).then_some(out)
    }
}

/// Per-primitive fused feature f2d and confidence gamma2d; rows with no
/// observation are all-zero with confidence 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeatureCloud {
    pub features: FeatureMatrix,
    pub confidence: Vec<f64>,
    pub obs_count: Vec<u32>,
    pub valid: Vec<bool>,
}

impl FusedFeatureCloud {
    pub fn len(&self) -> usize {
        self.confidence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.confidence.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn valid_indices(&self) -> Vec<u32> {
        self.valid
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| v.then_some(i as u32))
            .collect()
    }
}

/// Feature sample for every primitive visible in this view: the bilinearly
/// interpolated map value at the projected pixel, renormalized.
pub fn gather_observations(
    cloud: &PrimitiveCloud,
    view: &CameraView,
    fmap: &FeatureMap,
    depth_tol: f64,
) -> Result<Vec<Option<Vec<f64>>>> {
    check_dims(view, fmap)?;
    Ok(cloud
        .positions()
        .iter()
        .map(|p| {
            visible_projection(p, view, depth_tol)
                .and_then(|pd| fmap.sample_bilinear(pd.u, pd.v))
        })
        .collect())
}

fn check_dims(view: &CameraView, fmap: &FeatureMap) -> Result<()> {
    if fmap.width != view.width || fmap.height != view.height {
        return Err(Error::Config(format!(
            "view {}: feature map {}x{} does not match view {}x{}",
            view.view_id, fmap.width, fmap.height, view.width, view.height
        )));
    }
    Ok(())
}

/// The pooling operation: arithmetic mean of the samples, renormalized.
/// Returns None for an empty sample list; the degenerate zero-mean case
/// falls back to the first sample and sets the flag.
pub fn pool(samples: &[Vec<f64>]) -> Option<(Vec<f64>, bool)> {
    let first = samples.first()?;
    let mut mean = vec![0.0; first.len()];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    let inv = 1.0 / samples.len() as f64;
    for m in mean.iter_mut() {
        *m *= inv;
    }
    if feat::normalize(&mut mean, DEGENERATE_NORM) {
        Some((mean, false))
    } else {
        Some((first.clone(), true))
    }
}

/// Confidence: (obs/m) / (sum of per-dimension variances + eps),
/// clamped to gamma_max; zero when unobserved.
pub fn confidence(
    obs_count: u32,
    total_views: u32,
    per_dim_variance: &[f64],
    eps: f64,
    gamma_max: f64,
) -> f64 {
    debug_assert!(obs_count <= total_views);
    if obs_count == 0 {
        return 0.0;
    }
    let obs = obs_count as f64 / total_views as f64;
    let var_sum: f64 = per_dim_variance.iter().sum();
    (obs / (var_sum + eps)).min(gamma_max)
}

struct Accumulator {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    count: Vec<u32>,
    first_view: Vec<u32>,
}

/// Fuses all views into the per-primitive feature cloud. Deterministic:
/// views are processed in ascending view_id order and each primitive's
/// accumulation is independent of scheduling.
pub fn fuse(
    cloud: &PrimitiveCloud,
    views: &[CameraView],
    feature_maps: &[FeatureMap],
    cfg: &FusionConfig,
) -> Result<FusedFeatureCloud> {
    if views.len() != feature_maps.len() {
        return Err(Error::Config(format!(
            "{} views but {} feature maps",
            views.len(),
            feature_maps.len()
        )));
    }
    if views.is_empty() {
        return Err(Error::Config("fusion requires at least one view".into()));
    }
    let dim = feature_maps[0].dim;
    for (view, fmap) in views.iter().zip(feature_maps) {
        check_dims(view, fmap)?;
        if fmap.dim != dim {
            return Err(Error::Config("feature maps disagree on dimension".into()));
        }
    }
    let mut order: Vec<usize> = (0..views.len()).collect();
    order.sort_by_key(|&i| views[i].view_id);

    let n = cloud.len();
    let mut acc = Accumulator {
        sum: vec![0.0; n * dim],
        sum_sq: vec![0.0; n * dim],
        count: vec![0; n],
        first_view: vec![u32::MAX; n],
    };

    for &vi in &order {
        accumulate_view(cloud, &views[vi], &feature_maps[vi], cfg.depth_tol, vi as u32, dim, &mut acc);
    }

    let mut features = FeatureMatrix::zeros(n, dim);
    let mut conf = vec![0.0; n];
    let mut obs = vec![0u32; n];
    let mut valid = vec![false; n];
    let m = views.len() as u32;
    let mut any = false;

    for i in 0..n {
        let c = acc.count[i];
        obs[i] = c;
        if c == 0 {
            continue;
        }
        any = true;
        valid[i] = true;
        let inv = 1.0 / c as f64;
        let sum = &acc.sum[i * dim..(i + 1) * dim];
        let sum_sq = &acc.sum_sq[i * dim..(i + 1) * dim];
        let mut mean: Vec<f64> = sum.iter().map(|s| s * inv).collect();
        // population variance per dimension; exactly 0 for a single sample
        let vars: Vec<f64> = if c == 1 {
            vec![0.0; dim]
        } else {
            sum_sq
                .iter()
                .zip(&mean)
                .map(|(sq, m)| (sq * inv - m * m).max(0.0))
                .collect()
        };
        conf[i] = confidence(c, m, &vars, cfg.eps, cfg.gamma_max);

        if !feat::normalize(&mut mean, DEGENERATE_NORM) {
            // zero-mean degenerate pool: fall back to the first sample
            let vi = acc.first_view[i] as usize;
            let pd = visible_projection(&cloud.position(i), &views[vi], cfg.depth_tol)
                .expect("first observing view no longer sees primitive");
            mean = feature_maps[vi]
                .sample_bilinear(pd.u, pd.v)
                .expect("first observation no longer samples");
        }
        features.set_row(i, &mean);
    }

    if !any {
        return Err(Error::Pipeline(
            "no overlap between cameras and cloud".into(),
        ));
    }

    Ok(FusedFeatureCloud {
        features,
        confidence: conf,
        obs_count: obs,
        valid,
    })
}

fn accumulate_view(
    cloud: &PrimitiveCloud,
    view: &CameraView,
    fmap: &FeatureMap,
    depth_tol: f64,
    view_index: u32,
    dim: usize,
    acc: &mut Accumulator,
) {
    let body = |i: usize, sum: &mut [f64], sum_sq: &mut [f64], count: &mut u32, first: &mut u32| {
        let Some(pd) = visible_projection(&cloud.position(i), view, depth_tol) else {
            return;
        };
        let Some(sample) = fmap.sample_bilinear(pd.u, pd.v) else {
            return;
        };
        for d in 0..dim {
            sum[d] += sample[d];
            sum_sq[d] += sample[d] * sample[d];
        }
        *count += 1;
        if *first == u32::MAX {
            *first = view_index;
        }
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        acc.sum
            .par_chunks_mut(dim)
            .zip_eq(acc.sum_sq.par_chunks_mut(dim))
            .zip_eq(acc.count.par_iter_mut())
            .zip_eq(acc.first_view.par_iter_mut())
            .enumerate()
            .for_each(|(i, (((sum, sum_sq), count), first))| body(i, sum, sum_sq, count, first));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for i in 0..cloud.len() {
            let (sum, sum_sq) = (
                &mut acc.sum[i * dim..(i + 1) * dim],
                &mut acc.sum_sq[i * dim..(i + 1) * dim],
            );
            body(i, sum, sum_sq, &mut acc.count[i], &mut acc.first_view[i]);
        }
    }
}
