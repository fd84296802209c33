//! Small fully-connected rectifier networks used as kernel feature maps.

use rand::Rng;

use crate::error::{invalid, Result};

/// One affine layer, `out = w * input + b`, with `w` stored row-major
/// (`out_dim` rows of `in_dim` entries).
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// A feed-forward network with rectifier activations on every hidden layer
/// and a linear output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureNet {
    layers: Vec<Layer>,
}

/// Per-layer inputs recorded during a forward pass, for backpropagation.
pub(crate) struct Trace {
    /// `inputs[l]` is the input to layer `l` (post-activation of layer `l-1`).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
}

impl FeatureNet {
    /// Random initialization, uniform on `±1/sqrt(fan_in)` for weights and biases.
    pub fn random<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(invalid(format!(
                "network widths {widths:?} need an input and an output width, all positive"
            )));
        }
        let layers = widths
            .windows(2)
            .map(|w| {
                let (in_dim, out_dim) = (w[0], w[1]);
                let bound = 1.0 / (in_dim as f64).sqrt();
                let mut draw = || rng.random_range(-bound..bound);
                Layer {
                    in_dim,
                    out_dim,
                    weights: (0..in_dim * out_dim).map(|_| draw()).collect(),
                    bias: (0..out_dim).map(|_| draw()).collect(),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(invalid(format!("layer {i} has inconsistent shapes")));
            }
            if i > 0 && layers[i - 1].out_dim != l.in_dim {
                return Err(invalid(format!("layer {i} input does not match previous output")));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].in_dim];
        w.extend(self.layers.iter().map(|l| l.out_dim));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let mut out = affine(l, &h);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            h = out;
        }
        h
    }

    pub(crate) fn forward_traced(&self, x: &[f64]) -> (Vec<f64>, Trace) {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let z = affine(l, &h);
            inputs.push(h);
            h = if i < last {
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
        }
        (h, Trace { inputs, pre })
    }

    /// Accumulate `d(loss)/d(params)` into `grad` given `d(loss)/d(output)`.
    pub(crate) fn backward(&self, trace: &Trace, grad_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.num_params());
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |acc, l| {
                let start = *acc;
                *acc += l.weights.len() + l.bias.len();
                Some(start)
            })
            .collect();
        let last = self.layers.len() - 1;
        let mut delta = grad_out.to_vec();
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            if li < last {
                for (d, z) in delta.iter_mut().zip(&trace.pre[li]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &trace.inputs[li];
            let off = offsets[li];
            let (gw, gb) = grad[off..off + l.weights.len() + l.bias.len()].split_at_mut(l.weights.len());
            for o in 0..l.out_dim {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut gw[o * l.in_dim..(o + 1) * l.in_dim];
                for (g, xi) in row.iter_mut().zip(input) {
                    *g += d * xi;
                }
                gb[o] += d;
            }
            if li > 0 {
                let mut prev = vec![0.0; l.in_dim];
                for (&d, row) in delta.iter().zip(l.weights.chunks(l.in_dim)) {
                    if d == 0.0 {
                        continue;
                    }
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                delta = prev;
            }
        }
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.bias);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_params(), "parameter vector length");
        let mut rest = p;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, r) = r.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = r;
        }
    }
}

fn affine(l: &Layer, x: &[f64]) -> Vec<f64> {
    (0..l.out_dim)
        .map(|o| {
            let row = &l.weights[o * l.in_dim..(o + 1) * l.in_dim];
            row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + l.bias[o]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;

    #[test]
    fn shapes_and_params_round_trip() {
        let mut rng = RandomSource::new(4).rng();
        let mut net = FeatureNet::random(&[3, 8, 8, 2], &mut rng).unwrap();
        assert_eq!(net.widths(), vec![3, 8, 8, 2]);
        assert_eq!(net.num_params(), 3 * 8 + 8 + 8 * 8 + 8 + 8 * 2 + 2);
        let y = net.forward(&[0.1, -0.2, 0.3]);
        assert_eq!(y.len(), 2);
        let p = net.params();
        net.set_params(&p);
        assert_eq!(net.forward(&[0.1, -0.2, 0.3]), y);
        assert!(FeatureNet::random(&[3], &mut rng).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = RandomSource::new(12).rng();
        let net = FeatureNet::random(&[2, 5, 3], &mut rng).unwrap();
        let x = [0.7, -0.4];
        // loss = sum_k c_k * out_k
        let c = [0.3, -1.2, 0.8];
        let (_, trace) = net.forward_traced(&x);
        let mut g = vec![0.0; net.num_params()];
        net.backward(&trace, &c, &mut g);
        let p0 = net.params();
        let loss = |p: &[f64]| {
            let mut n = net.clone();
            n.set_params(p);
            n.forward(&x).iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()
        };
        for i in 0..p0.len() {
            let h = 1e-6;
            let mut up = p0.clone();
            up[i] += h;
            let mut dn = p0.clone();
            dn[i] -= h;
            let fd = (loss(&up) - loss(&dn)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "param {i}: fd {fd} vs {}", g[i]);
        }
    }
}
