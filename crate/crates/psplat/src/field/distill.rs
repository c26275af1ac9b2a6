//! Confidence-weighted cosine distillation of the tri-plane field + decoder
//! onto a fused feature cloud, optimized with adaptive-moment gradient
//! descent and hand-written reverse-mode differentiation.
//!
//!   L_feat = sum_i gamma_i * |1 - cos(decode(query(mu_i)), f2d_i)|
//!
//! The absolute value differentiates as identity because 1 - cos >= 0 for
//! unit vectors.

use super::decoder::{d_cos_d_y, FeatureDecoder};
use super::{FieldConfig, PyramidTriPlane};
use crate::error::{Error, Result};
use crate::feat::{dot, FeatureMatrix};
use crate::fusion::FusedFeatureCloud;
use crate::geometry::{Aabb, PrimitiveCloud};
use nalgebra::Point3;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Fixed gradient-reduction fan-in: results are bit-identical for any rayon
/// thread count because chunk boundaries depend only on the batch.
const GRAD_CHUNKS: usize = 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// when > 0, record the full-dataset loss every this many iterations
    pub full_eval_every: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            iterations: 30_000,
            batch_size: 4096,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            full_eval_every: 0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Config("distill iterations must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("distill batch size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("moment decay rates must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// The trainable pair: latent pyramid tri-plane plus feature decoder.
#[derive(Debug, Clone)]
pub struct FieldModel {
    pub field: PyramidTriPlane,
    pub decoder: FeatureDecoder,
}

impl FieldModel {
    pub fn new(cfg: &FieldConfig, aabb: Aabb, out_dim: usize, seed: u64) -> Result<Self> {
        let expanded = aabb.expanded(cfg.aabb_expand);
        let field = PyramidTriPlane::new(cfg, expanded, seed)?;
        let decoder = FeatureDecoder::new(field.latent_dim(), cfg.hidden, out_dim, seed ^ 0x5eed);
        Ok(Self { field, decoder })
    }

    pub fn decode_at(&self, position: &Point3<f64>) -> Result<Vec<f64>> {
        self.decoder.decode(&self.field.query(position))
    }

    /// Decoded features for every primitive: unit-length rows, a pure
    /// function of position.
    pub fn field_features(&self, cloud: &PrimitiveCloud) -> Result<FeatureMatrix> {
        let dim = self.decoder.out_dim();
        let n = cloud.len();
        let mut out = FeatureMatrix::zeros(n, dim);

        let rows: Result<Vec<Vec<f64>>> = {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                cloud
                    .positions()
                    .par_iter()
                    .map(|p| self.decode_at(p))
                    .collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                cloud.positions().iter().map(|p| self.decode_at(p)).collect()
            }
        };
        for (i, row) in rows?.into_iter().enumerate() {
            out.set_row(i, &row);
        }
        Ok(out)
    }

    fn plane_tensor_count(&self) -> usize {
        self.field.levels.len() * 3
    }

    pub fn tensor_count(&self) -> usize {
        self.plane_tensor_count() + self.decoder.layers.len() * 2
    }

    pub fn tensor(&self, k: usize) -> &[f64] {
        let np = self.plane_tensor_count();
        if k < np {
            &self.field.levels[k / 3].planes[k % 3].data
        } else {
            let li = (k - np) / 2;
            if (k - np) % 2 == 0 {
                &self.decoder.layers[li].w
            } else {
                &self.decoder.layers[li].b
            }
        }
    }

    pub fn tensor_mut(&mut self, k: usize) -> &mut [f64] {
        let np = self.plane_tensor_count();
        if k < np {
            &mut self.field.levels[k / 3].planes[k % 3].data
        } else {
            let li = (k - np) / 2;
            if (k - np) % 2 == 0 {
                &mut self.decoder.layers[li].w
            } else {
                &mut self.decoder.layers[li].b
            }
        }
    }

    pub fn param_count(&self) -> usize {
        (0..self.tensor_count()).map(|k| self.tensor(k).len()).sum()
    }
}

/// Gradients (or moment estimates) shaped like the model parameters.
#[derive(Debug, Clone)]
pub struct GradStore {
    pub planes: Vec<Vec<f64>>,
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl GradStore {
    pub fn zeros_like(model: &FieldModel) -> Self {
        let planes = model
            .field
            .levels
            .iter()
            .flat_map(|l| l.planes.iter().map(|p| vec![0.0; p.data.len()]))
            .collect();
        let layers = model
            .decoder
            .layers
            .iter()
            .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
            .collect();
        Self { planes, layers }
    }

    pub fn add(&mut self, other: &GradStore) {
        for (a, b) in self.planes.iter_mut().zip(&other.planes) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for ((aw, ab), (bw, bb)) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in aw.iter_mut().zip(bw) {
                *x += y;
            }
            for (x, y) in ab.iter_mut().zip(bb) {
                *x += y;
            }
        }
    }

    /// Tensor view aligned with [`FieldModel::tensor`] indices.
    pub fn tensor(&self, k: usize) -> &[f64] {
        if k < self.planes.len() {
            &self.planes[k]
        } else {
            let li = (k - self.planes.len()) / 2;
            if (k - self.planes.len()) % 2 == 0 {
                &self.layers[li].0
            } else {
                &self.layers[li].1
            }
        }
    }

    pub fn tensor_mut(&mut self, k: usize) -> &mut [f64] {
        if k < self.planes.len() {
            &mut self.planes[k]
        } else {
            let n = self.planes.len();
            let li = (k - n) / 2;
            if (k - n) % 2 == 0 {
                &mut self.layers[li].0
            } else {
                &mut self.layers[li].1
            }
        }
    }

    pub fn tensor_count(&self) -> usize {
        self.planes.len() + self.layers.len() * 2
    }
}

/// One distillation sample: position, unit target feature, confidence weight.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub position: Point3<f64>,
    pub target: &'a [f64],
    pub weight: f64,
}

/// L_feat over the batch plus gradients for every parameter tensor.
pub fn loss(model: &FieldModel, batch: &[BatchItem<'_>]) -> Result<(f64, GradStore)> {
    if batch.is_empty() {
        return Err(Error::Config("loss needs a non-empty batch".into()));
    }
    let chunk_len = batch.len().div_ceil(GRAD_CHUNKS);
    let partials: Result<Vec<(f64, GradStore)>> = {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            batch
                .par_chunks(chunk_len)
                .map(|chunk| loss_chunk(model, chunk))
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            batch.chunks(chunk_len).map(|chunk| loss_chunk(model, chunk)).collect()
        }
    };
    // reduce in chunk order: bit-stable regardless of scheduling
    let mut total = 0.0;
    let mut grads = GradStore::zeros_like(model);
    for (l, g) in partials? {
        total += l;
        grads.add(&g);
    }
    Ok((total, grads))
}

fn loss_chunk(model: &FieldModel, chunk: &[BatchItem<'_>]) -> Result<(f64, GradStore)> {
    let mut grads = GradStore::zeros_like(model);
    let mut total = 0.0;
    for item in chunk {
        let (latent, qtrace) = model.field.query_traced(&item.position);
        let (f, dtrace) = model.decoder.decode_traced(&latent)?;
        let cos = dot(&f, item.target);
        total += item.weight * (1.0 - cos);
        if dtrace.degenerate || item.weight == 0.0 {
            // zero-output fallback has no defined gradient; weight 0
            // contributes nothing
            continue;
        }
        let d_y: Vec<f64> = d_cos_d_y(&dtrace.y, dtrace.y_norm, item.target)
            .into_iter()
            .map(|d| -item.weight * d)
            .collect();
        let d_latent = model.decoder.backprop(&dtrace, &d_y, &mut grads.layers);
        model.field.backprop_latent(&qtrace, &d_latent, &mut grads.planes);
    }
    Ok((total, grads))
}

/// Forward-only loss, used for full-dataset evaluations.
pub fn loss_value(model: &FieldModel, batch: &[BatchItem<'_>]) -> Result<f64> {
    let chunk_len = batch.len().div_ceil(GRAD_CHUNKS).max(1);
    let partials: Result<Vec<f64>> = {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            batch
                .par_chunks(chunk_len)
                .map(|chunk| {
                    let mut s = 0.0;
                    for item in chunk {
                        let f = model.decode_at(&item.position)?;
                        s += item.weight * (1.0 - dot(&f, item.target));
                    }
                    Ok(s)
                })
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            batch
                .chunks(chunk_len)
                .map(|chunk| {
                    let mut s = 0.0;
                    for item in chunk {
                        let f = model.decode_at(&item.position)?;
                        s += item.weight * (1.0 - dot(&f, item.target));
                    }
                    Ok(s)
                })
                .collect()
        }
    };
    Ok(partials?.iter().sum())
}

struct Adam {
    m: GradStore,
    v: GradStore,
    t: u64,
}

impl Adam {
    fn new(model: &FieldModel) -> Self {
        Self {
            m: GradStore::zeros_like(model),
            v: GradStore::zeros_like(model),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut FieldModel, grads: &GradStore, cfg: &DistillConfig) {
        self.t += 1;
        let b1 = cfg.beta1;
        let b2 = cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for k in 0..grads.tensor_count() {
            let g = grads.tensor(k);
            let m = self.m.tensor_mut(k);
            for (mi, gi) in m.iter_mut().zip(g) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
            }
            let v = self.v.tensor_mut(k);
            for (vi, gi) in v.iter_mut().zip(g) {
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            }
            let m = self.m.tensor(k);
            let v = self.v.tensor(k);
            let theta = model.tensor_mut(k);
            for i in 0..theta.len() {
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistillHistory {
    /// batch loss per iteration
    pub batch_loss: Vec<f64>,
    /// (iteration, full-dataset loss) samples when full_eval_every > 0
    pub full_loss: Vec<(usize, f64)>,
}

/// Trains the model on uniformly resampled valid primitives. Primitives with
/// no observation (gamma = 0 / invalid) are never sampled. Deterministic for
/// a fixed seed.
pub fn distill(
    model: &mut FieldModel,
    fused: &FusedFeatureCloud,
    cloud: &PrimitiveCloud,
    cfg: &DistillConfig,
) -> Result<DistillHistory> {
    cfg.validate()?;
    if fused.len() != cloud.len() {
        return Err(Error::Config(format!(
            "fused cloud has {} rows but cloud has {} primitives",
            fused.len(),
            cloud.len()
        )));
    }
    let valid = fused.valid_indices();
    if valid.is_empty() {
        return Err(Error::Pipeline(
            "distillation requires at least one observed primitive".into(),
        ));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model);
    let mut history = DistillHistory {
        batch_loss: Vec::with_capacity(cfg.iterations),
        full_loss: Vec::new(),
    };
    let full_batch: Vec<BatchItem<'_>> = valid
        .iter()
        .map(|&i| BatchItem {
            position: cloud.position(i as usize),
            target: fused.features.row(i as usize),
            weight: fused.confidence[i as usize],
        })
        .collect();

    for iter in 0..cfg.iterations {
        let batch: Vec<BatchItem<'_>> = (0..cfg.batch_size)
            .map(|_| {
                let idx = valid[rng.random_range(0..valid.len())] as usize;
                BatchItem {
                    position: cloud.position(idx),
                    target: fused.features.row(idx),
                    weight: fused.confidence[idx],
                }
            })
            .collect();
        let (l, grads) = loss(model, &batch)?;
        adam.step(model, &grads, cfg);
        history.batch_loss.push(l);
        if cfg.full_eval_every > 0 && (iter + 1) % cfg.full_eval_every == 0 {
            history.full_loss.push((iter + 1, loss_value(model, &full_batch)?));
        }
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feat;
    use nalgebra::Vector3;

    fn unit_aabb() -> Aabb {
        Aabb {
            min: Vector3::zeros(),
            max: Vector3::new(1.0, 1.0, 1.0),
        }
    }

    fn tiny_model(seed: u64) -> FieldModel {
        let cfg = FieldConfig {
            resolutions: vec![4],
            channels: 1,
            hidden: 4,
            aabb_expand: 0.0,
            init_scale: 0.8,
        };
        let mut model = FieldModel::new(&cfg, unit_aabb(), 3, seed).unwrap();
        // nonzero biases keep pre-activations away from the rectifier kink
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 77);
        for layer in model.decoder.layers.iter_mut() {
            for b in layer.b.iter_mut() {
                *b = rng.random::<f64>() * 0.4 - 0.2;
            }
        }
        model
    }

    fn random_batch(seed: u64, n: usize, dim: usize) -> (Vec<Point3<f64>>, Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let positions: Vec<Point3<f64>> = (0..n)
            .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let targets: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut t: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                assert!(feat::normalize(&mut t, 1e-9));
                t
            })
            .collect();
        let weights: Vec<f64> = (0..n).map(|_| 0.5 + rng.random::<f64>() * 1.5).collect();
        (positions, targets, weights)
    }

    #[test]
    fn zero_loss_when_decoded_equals_target() {
        let model = tiny_model(5);
        let p = Point3::new(0.3, 0.6, 0.2);
        let target = model.decode_at(&p).unwrap();
        let batch = [BatchItem {
            position: p,
            target: &target,
            weight: 3.0,
        }];
        let (l, grads) = loss(&model, &batch).unwrap();
        assert!(l.abs() < 1e-12);
        // cos is maximal: its gradient along the normalized output vanishes
        for k in 0..grads.tensor_count() {
            for g in grads.tensor(k) {
                assert!(g.abs() < 1e-9, "gradient {g} should vanish at cos=1");
            }
        }
    }

    #[test]
    fn orthogonal_target_loss_is_weight() {
        let model = tiny_model(6);
        let p = Point3::new(0.25, 0.5, 0.75);
        let f = model.decode_at(&p).unwrap();
        // build a unit target orthogonal to f
        let mut t = vec![0.0; f.len()];
        t[0] = -f[1];
        t[1] = f[0];
        let n = feat::norm(&t);
        assert!(n > 1e-6);
        t.iter_mut().for_each(|v| *v /= n);
        assert!(feat::dot(&f, &t).abs() < 1e-12);
        let batch = [BatchItem {
            position: p,
            target: &t,
            weight: 2.0,
        }];
        let (l, _) = loss(&model, &batch).unwrap();
        assert!((l - 2.0).abs() < 1e-9);
    }

    #[test]
    fn finite_difference_gradient_check_small() {
        let mut model = tiny_model(9);
        let (positions, targets, weights) = random_batch(10, 6, 3);
        let batch: Vec<BatchItem<'_>> = positions
            .iter()
            .zip(&targets)
            .zip(&weights)
            .map(|((p, t), &w)| BatchItem {
                position: *p,
                target: t,
                weight: w,
            })
            .collect();
        let (_, grads) = loss(&model, &batch).unwrap();
        let h = 1e-4;
        let mut max_rel: f64 = 0.0;
        for k in 0..model.tensor_count() {
            for i in 0..model.tensor(k).len() {
                let orig = model.tensor(k)[i];
                model.tensor_mut(k)[i] = orig + h;
                let (lp, _) = loss(&model, &batch).unwrap();
                model.tensor_mut(k)[i] = orig - h;
                let (lm, _) = loss(&model, &batch).unwrap();
                model.tensor_mut(k)[i] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = grads.tensor(k)[i];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
                max_rel = max_rel.max(rel);
            }
        }
        assert!(max_rel < 1e-4, "max relative gradient error {max_rel:.3e}");
    }

    #[test]
    fn first_step_is_bounded_by_learning_rate() {
        let mut model = tiny_model(11);
        let before = model.clone();
        let (positions, targets, weights) = random_batch(12, 4, 3);
        let batch: Vec<BatchItem<'_>> = positions
            .iter()
            .zip(&targets)
            .zip(&weights)
            .map(|((p, t), &w)| BatchItem {
                position: *p,
                target: t,
                weight: w,
            })
            .collect();
        let cfg = DistillConfig {
            iterations: 1,
            batch_size: 4,
            learning_rate: 1e-2,
            ..DistillConfig::default()
        };
        let (_, grads) = loss(&model, &batch).unwrap();
        let mut adam = Adam::new(&model);
        adam.step(&mut model, &grads, &cfg);
        for k in 0..model.tensor_count() {
            for (after, orig) in model.tensor(k).iter().zip(before.tensor(k)) {
                assert!((after - orig).abs() <= cfg.learning_rate * 1.000001);
            }
        }
    }

    #[test]
    fn distill_same_seed_bitwise_identical() {
        let cloud = PrimitiveCloud::new(vec![
            Point3::new(0.1, 0.1, 0.1),
            Point3::new(0.9, 0.2, 0.4),
            Point3::new(0.5, 0.8, 0.6),
        ])
        .unwrap();
        let e = 1.0 / 3f64.sqrt();
        let fused = FusedFeatureCloud {
            features: FeatureMatrix::from_rows(&[
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![e, e, e],
            ]),
            confidence: vec![1.0, 2.0, 0.5],
            obs_count: vec![1, 1, 1],
            valid: vec![true, true, true],
        };
        let cfg = DistillConfig {
            iterations: 25,
            batch_size: 8,
            seed: 3,
            ..DistillConfig::default()
        };
        let run = || {
            let mut model = tiny_model(2);
            distill(&mut model, &fused, &cloud, &cfg).unwrap().batch_loss
        };
        let (a, b) = (run(), run());
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn distill_rejects_all_invalid() {
        let cloud = PrimitiveCloud::new(vec![Point3::new(0.0, 0.0, 0.0); 2]).unwrap();
        let fused = FusedFeatureCloud {
            features: FeatureMatrix::zeros(2, 3),
            confidence: vec![0.0, 0.0],
            obs_count: vec![0, 0],
            valid: vec![false, false],
        };
        let mut model = tiny_model(0);
        assert!(matches!(
            distill(&mut model, &fused, &cloud, &DistillConfig::default()),
            Err(Error::Pipeline(_))
        ));
    }

    #[test]
    fn synthetic_three_class_fit() {
        // three spatial clusters with orthogonal class embeddings; after a
        // short run the decoded features align with the targets
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let mut positions = Vec::new();
        let mut targets_idx = Vec::new();
        let centers = [
            Point3::new(0.2, 0.2, 0.2),
            Point3::new(0.8, 0.3, 0.5),
            Point3::new(0.4, 0.8, 0.8),
        ];
        for (ci, c) in centers.iter().enumerate() {
            for _ in 0..120 {
                positions.push(Point3::new(
                    c.x + (rng.random::<f64>() - 0.5) * 0.15,
                    c.y + (rng.random::<f64>() - 0.5) * 0.15,
                    c.z + (rng.random::<f64>() - 0.5) * 0.15,
                ));
                targets_idx.push(ci);
            }
        }
        let n = positions.len();
        let mut feats = FeatureMatrix::zeros(n, 8);
        for (i, &ci) in targets_idx.iter().enumerate() {
            feats.row_mut(i)[ci] = 1.0;
        }
        let cloud = PrimitiveCloud::new(positions).unwrap();
        let fused = FusedFeatureCloud {
            features: feats,
            confidence: vec![1.0; n],
            obs_count: vec![1; n],
            valid: vec![true; n],
        };
        let fcfg = FieldConfig {
            resolutions: vec![8, 16],
            channels: 4,
            hidden: 32,
            aabb_expand: 0.05,
            init_scale: 1e-2,
        };
        let mut model = FieldModel::new(&fcfg, cloud.aabb(), 8, 0).unwrap();
        let cfg = DistillConfig {
            iterations: 2000,
            batch_size: 128,
            learning_rate: 3e-3,
            seed: 0,
            full_eval_every: 100,
            ..DistillConfig::default()
        };
        let history = distill(&mut model, &fused, &cloud, &cfg).unwrap();

        let decoded = model.field_features(&cloud).unwrap();
        let mut cos_sum = 0.0;
        let mut correct = 0usize;
        for i in 0..n {
            let f = decoded.row(i);
            assert!((feat::norm(f) - 1.0).abs() < 1e-4);
            cos_sum += feat::dot(f, fused.features.row(i));
            let argmax = (0..8)
                .max_by(|&a, &b| f[a].partial_cmp(&f[b]).unwrap())
                .unwrap();
            if argmax == targets_idx[i] {
                correct += 1;
            }
        }
        let mean_cos = cos_sum / n as f64;
        assert!(mean_cos >= 0.99, "mean cosine only {mean_cos:.4}");
        assert!(correct as f64 / n as f64 >= 0.99);

        // full-dataset loss, smoothed with window 5, is non-increasing
        let full: Vec<f64> = history.full_loss.iter().map(|&(_, l)| l).collect();
        assert!(full.len() >= 10);
        let smoothed: Vec<f64> = full
            .windows(5)
            .map(|w| w.iter().sum::<f64>() / 5.0)
            .collect();
        for pair in smoothed.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-9,
                "smoothed loss increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn identical_positions_decode_identically() {
        let model = tiny_model(33);
        let p = Point3::new(0.4, 0.4, 0.4);
        let cloud = PrimitiveCloud::new(vec![p, p]).unwrap();
        let f = model.field_features(&cloud).unwrap();
        assert_eq!(f.row(0), f.row(1));
    }
}
