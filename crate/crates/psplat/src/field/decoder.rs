//! The 3D language feature decoder: latent code -> two rectifier hidden
//! layers -> linear output -> L2 normalization.

use crate::error::{Error, Result};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Pre-normalization outputs below this norm decode to the e1 fallback.
const ZERO_OUTPUT_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    /// row-major out_dim x in_dim
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            w: vec![0.0; out_dim * in_dim],
            b: vec![0.0; out_dim],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.in_dim);
        out.clear();
        out.reserve(self.out_dim);
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b[o];
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            out.push(acc);
        }
    }
}

/// MLP with layer widths [3*C*L, hidden, hidden, d_out], rectifier hidden
/// activations and a unit-normalized output.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDecoder {
    pub layers: Vec<Linear>,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct DecodeTrace {
    /// input to each layer (post-activation of the previous one)
    pub inputs: Vec<Vec<f64>>,
    /// pre-activation of each layer
    pub pre: Vec<Vec<f64>>,
    /// pre-normalization output y and its norm
    pub y: Vec<f64>,
    pub y_norm: f64,
    pub degenerate: bool,
}

impl FeatureDecoder {
    /// He-style uniform init, seeded.
    pub fn new(latent_dim: usize, hidden: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let widths = [latent_dim, hidden, hidden, out_dim];
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let mut layer = Linear::zeros(fan_in, fan_out);
                let bound = (6.0 / fan_in as f64).sqrt();
                for v in layer.w.iter_mut() {
                    *v = (rng.random::<f64>() * 2.0 - 1.0) * bound;
                }
                layer
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Linear>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("decoder needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Config("decoder layer widths do not chain".into()));
            }
        }
        Ok(Self { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.in_dim()];
        w.extend(self.layers.iter().map(|l| l.out_dim));
        w
    }

    /// Unit-length decoded feature; a zero pre-normalization output falls
    /// back to the basis vector e1 (flagged in the trace).
    pub fn decode(&self, latent: &[f64]) -> Result<Vec<f64>> {
        Ok(self.decode_traced(latent)?.0)
    }

    pub fn decode_traced(&self, latent: &[f64]) -> Result<(Vec<f64>, DecodeTrace)> {
        if latent.len() != self.in_dim() {
            return Err(Error::Config(format!(
                "latent length {} != decoder input width {}",
                latent.len(),
                self.in_dim()
            )));
        }
        let n_layers = self.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut x = latent.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward(&x, &mut z);
            inputs.push(x);
            if li + 1 < n_layers {
                x = z.iter().map(|&v| v.max(0.0)).collect();
            } else {
                x = z.clone();
            }
            pre.push(z);
        }
        let y = x;
        let y_norm = crate::feat::norm(&y);
        let (out, degenerate) = if y_norm < ZERO_OUTPUT_NORM {
            let mut e1 = vec![0.0; self.out_dim()];
            e1[0] = 1.0;
            (e1, true)
        } else {
            (y.iter().map(|v| v / y_norm).collect(), false)
        };
        Ok((
            out,
            DecodeTrace {
                inputs,
                pre,
                y,
                y_norm,
                degenerate,
            },
        ))
    }

    /// Backward pass from a gradient on the pre-normalization output y.
    /// Accumulates into per-layer (dW, db) buffers and returns the gradient
    /// with respect to the latent input.
    pub fn backprop(
        &self,
        trace: &DecodeTrace,
        d_y: &[f64],
        layer_grads: &mut [(Vec<f64>, Vec<f64>)],
    ) -> Vec<f64> {
        debug_assert_eq!(layer_grads.len(), self.layers.len());
        let mut d_out = d_y.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            // through the activation: identity at the output layer,
            // rectifier mask elsewhere
            if li + 1 < self.layers.len() {
                for (d, z) in d_out.iter_mut().zip(&trace.pre[li]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let x = &trace.inputs[li];
            let (dw, db) = &mut layer_grads[li];
            let mut d_in = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let d = d_out[o];
                if d != 0.0 {
                    db[o] += d;
                    let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                    let drow = &mut dw[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for i in 0..layer.in_dim {
                        drow[i] += d * x[i];
                        d_in[i] += d * row[i];
                    }
                }
            }
            d_out = d_in;
        }
        d_out
    }
}

/// Gradient of (y / |y|) . t with respect to y, for the cosine loss chain.
pub fn d_cos_d_y(y: &[f64], y_norm: f64, target: &[f64]) -> Vec<f64> {
    let inv = 1.0 / y_norm;
    let yt: f64 = y.iter().zip(target).map(|(a, b)| a * b).sum();
    let s = yt * inv * inv * inv;
    y.iter()
        .zip(target)
        .map(|(yv, tv)| tv * inv - yv * s)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feat::norm;

    #[test]
    fn constant_network_outputs_normalized_bias() {
        // all-zero weights with a nonzero output bias: every latent decodes
        // to b / |b|
        let mut dec = FeatureDecoder::new(4, 8, 3, 0);
        for layer in dec.layers.iter_mut() {
            layer.w.iter_mut().for_each(|v| *v = 0.0);
            layer.b.iter_mut().for_each(|v| *v = 0.0);
        }
        dec.layers[2].b = vec![3.0, 0.0, 4.0];
        for latent in [vec![0.0; 4], vec![1.0, -2.0, 0.5, 9.0]] {
            let f = dec.decode(&latent).unwrap();
            assert!((f[0] - 0.6).abs() < 1e-12);
            assert_eq!(f[1], 0.0);
            assert!((f[2] - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn output_is_unit() {
        let dec = FeatureDecoder::new(6, 16, 8, 42);
        let latent: Vec<f64> = (0..6).map(|i| (i as f64 - 2.5) * 0.3).collect();
        let f = dec.decode(&latent).unwrap();
        assert!((norm(&f) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_output_falls_back_to_e1() {
        let mut dec = FeatureDecoder::new(2, 4, 3, 0);
        for layer in dec.layers.iter_mut() {
            layer.w.iter_mut().for_each(|v| *v = 0.0);
            layer.b.iter_mut().for_each(|v| *v = 0.0);
        }
        let (f, trace) = dec.decode_traced(&[1.0, 1.0]).unwrap();
        assert!(trace.degenerate);
        assert_eq!(f, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let dec = FeatureDecoder::new(4, 8, 3, 0);
        assert!(matches!(dec.decode(&[0.0; 5]), Err(Error::Config(_))));
    }

    #[test]
    fn golden_forward_matches_independent_oracle() {
        // independent straight-line reimplementation of the forward pass
        let dec = FeatureDecoder::new(3, 4, 2, 0);
        let g = [0.25, -0.5, 1.0];

        let lin = |layer: &Linear, x: &[f64]| -> Vec<f64> {
            (0..layer.out_dim)
                .map(|o| {
                    layer.b[o]
                        + (0..layer.in_dim)
                            .map(|i| layer.w[o * layer.in_dim + i] * x[i])
                            .sum::<f64>()
                })
                .collect()
        };
        let relu = |v: Vec<f64>| v.into_iter().map(|x| if x > 0.0 { x } else { 0.0 }).collect::<Vec<_>>();
        let h1 = relu(lin(&dec.layers[0], &g));
        let h2 = relu(lin(&dec.layers[1], &h1));
        let y = lin(&dec.layers[2], &h2);
        let n = (y[0] * y[0] + y[1] * y[1]).sqrt();
        let expected: Vec<f64> = y.iter().map(|v| v / n).collect();

        let got = dec.decode(&g).unwrap();
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
