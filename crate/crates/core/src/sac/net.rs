//! Dense network stack with reverse-mode gradients and Adam. Sized for
//! small control policies; no external ML runtime.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("need at least an input and an output dimension")]
    TooFewLayers,
    #[error("flat parameter vector has {got} values, network needs {want}")]
    ParamCount { got: usize, want: usize },
    #[error("shape mismatch: {0}")]
    Shape(&'static str),
}

/// One affine layer computing `y = x · wᵀ + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// Weights, shape `[out, in]`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Fully connected network with rectifier hidden activations and a linear
/// head.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Per-layer inputs and pre-activations retained for the backward pass.
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

/// Parameter gradients in the same shapes as the network.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub w: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

impl Mlp {
    /// Glorot-uniform initialization over the given layer sizes.
    pub fn new(dims: &[usize], rng: &mut impl Rng) -> Result<Mlp, NetError> {
        if dims.len() < 2 {
            return Err(NetError::TooFewLayers);
        }
        let layers = dims
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w = Array2::from_shape_fn((fan_out, fan_in), |_| {
                    rng.gen_range(-scale..scale)
                });
                Dense {
                    w,
                    b: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].w.ncols()];
        dims.extend(self.layers.iter().map(|l| l.w.nrows()));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Batched forward pass; rows are samples.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.w.t()) + &layer.b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            h = z;
        }
        h
    }

    /// Forward pass that retains everything the backward pass needs.
    pub fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            inputs.push(h.clone());
            let z = h.dot(&layer.w.t()) + &layer.b;
            pre.push(z.clone());
            h = if i < last { z.mapv(|v| v.max(0.0)) } else { z };
        }
        (h, MlpCache { inputs, pre })
    }

    /// Reverse-mode pass: given dL/d(output), produce parameter gradients
    /// and dL/d(input).
    pub fn backward(&self, cache: &MlpCache, grad_out: &Array2<f64>) -> (MlpGrads, Array2<f64>) {
        let last = self.layers.len() - 1;
        let mut grads = MlpGrads {
            w: Vec::with_capacity(self.layers.len()),
            b: Vec::with_capacity(self.layers.len()),
        };
        let mut g = grad_out.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if i < last {
                // Rectifier gate on the hidden pre-activations.
                g.zip_mut_with(&cache.pre[i], |gv, &z| {
                    if z <= 0.0 {
                        *gv = 0.0;
                    }
                });
            }
            grads.w.push(g.t().dot(&cache.inputs[i]));
            grads.b.push(g.sum_axis(Axis(0)));
            g = g.dot(&layer.w);
        }
        grads.w.reverse();
        grads.b.reverse();
        (grads, g)
    }

    /// Parameters in a stable flat order: per layer, row-major weights then
    /// biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for layer in &self.layers {
            out.extend(layer.w.iter());
            out.extend(layer.b.iter());
        }
        out
    }

    pub fn load_flat(&mut self, params: &[f64]) -> Result<(), NetError> {
        if params.len() != self.n_params() {
            return Err(NetError::ParamCount {
                got: params.len(),
                want: self.n_params(),
            });
        }
        let mut at = 0;
        for layer in &mut self.layers {
            for v in layer.w.iter_mut() {
                *v = params[at];
                at += 1;
            }
            for v in layer.b.iter_mut() {
                *v = params[at];
                at += 1;
            }
        }
        Ok(())
    }

    /// Polyak blend toward another network of identical shape:
    /// `θ ← τ·θ_src + (1−τ)·θ`.
    pub fn soft_update_from(&mut self, src: &Mlp, tau: f64) -> Result<(), NetError> {
        if self.dims() != src.dims() {
            return Err(NetError::Shape("soft update across different shapes"));
        }
        for (dst, s) in self.layers.iter_mut().zip(&src.layers) {
            dst.w.zip_mut_with(&s.w, |d, &sv| *d = tau * sv + (1.0 - tau) * *d);
            dst.b.zip_mut_with(&s.b, |d, &sv| *d = tau * sv + (1.0 - tau) * *d);
        }
        Ok(())
    }
}

impl MlpGrads {
    /// Gradients in the same flat order as [`Mlp::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.w.iter().zip(&self.b) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// Adam state over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// One bias-corrected update in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NetError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NetError::Shape("adam buffers do not match parameters"));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }

    /// Apply one step directly to a network.
    pub fn step_net(&mut self, net: &mut Mlp, grads: &MlpGrads) -> Result<(), NetError> {
        let mut params = net.flatten();
        self.step(&mut params, &grads.flatten())?;
        net.load_flat(&params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(rng_seed: u64, dims: &[usize]) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        Mlp::new(dims, &mut rng).unwrap()
    }

    #[test]
    fn forward_matches_hand_computation() {
        let mut net = tiny(0, &[2, 2, 1]);
        net.load_flat(&[
            1.0, 0.0, // w0 row 0
            0.0, -1.0, // w0 row 1
            0.5, -0.5, // b0
            1.0, 2.0, // w1
            0.25, // b1
        ])
        .unwrap();
        // Hidden: relu([x0 + 0.5, -x1 - 0.5]); out = h0 + 2 h1 + 0.25.
        let x = ndarray::arr2(&[[1.0, 1.0], [0.0, -2.0]]);
        let y = net.forward(&x);
        assert!((y[[0, 0]] - (1.5 + 2.0 * 0.0 + 0.25)).abs() < 1e-12);
        assert!((y[[1, 0]] - (0.5 + 2.0 * 1.5 + 0.25)).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let net = tiny(7, &[3, 4, 2]);
        let x = ndarray::arr2(&[[0.3, -0.7, 1.1], [0.9, 0.2, -0.4], [-1.2, 0.5, 0.1]]);
        // Scalar loss: weighted sum of outputs, so grad_out is the weights.
        let weights = ndarray::arr2(&[[1.0, -2.0], [0.5, 1.5], [-1.0, 0.25]]);
        let loss = |net: &Mlp| (net.forward(&x) * &weights).sum();
        let (_, cache) = net.forward_cached(&x);
        let (grads, _) = net.backward(&cache, &weights);
        let analytic = grads.flatten();
        let mut params = net.flatten();
        let h = 1e-6;
        for i in 0..params.len() {
            let orig = params[i];
            let mut probe = net.clone();
            params[i] = orig + h;
            probe.load_flat(&params).unwrap();
            let up = loss(&probe);
            params[i] = orig - h;
            probe.load_flat(&params).unwrap();
            let down = loss(&probe);
            params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let denom = analytic[i].abs().max(fd.abs()).max(1e-6);
            assert!(
                (analytic[i] - fd).abs() / denom < 1e-4,
                "param {i}: analytic {} vs fd {}",
                analytic[i],
                fd
            );
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let net = tiny(9, &[3, 5, 2]);
        let x = ndarray::arr2(&[[0.4, -0.2, 0.9]]);
        let weights = ndarray::arr2(&[[0.7, -1.3]]);
        let (_, cache) = net.forward_cached(&x);
        let (_, dx) = net.backward(&cache, &weights);
        let h = 1e-6;
        for j in 0..3 {
            let mut up = x.clone();
            up[[0, j]] += h;
            let mut down = x.clone();
            down[[0, j]] -= h;
            let fd = ((net.forward(&up) * &weights).sum() - (net.forward(&down) * &weights).sum())
                / (2.0 * h);
            assert!((dx[[0, j]] - fd).abs() < 1e-6, "input {j}");
        }
    }

    #[test]
    fn flatten_round_trips() {
        let net = tiny(3, &[4, 8, 8, 2]);
        let params = net.flatten();
        assert_eq!(params.len(), net.n_params());
        let mut other = tiny(4, &[4, 8, 8, 2]);
        other.load_flat(&params).unwrap();
        assert_eq!(other, net);
        assert!(matches!(
            other.load_flat(&params[1..]),
            Err(NetError::ParamCount { .. })
        ));
    }

    #[test]
    fn soft_update_is_convex_blend() {
        let a = tiny(1, &[2, 3, 1]);
        let mut b = tiny(2, &[2, 3, 1]);
        let before = b.flatten();
        let tau = 0.25;
        b.soft_update_from(&a, tau).unwrap();
        for ((blended, src), old) in b.flatten().iter().zip(a.flatten()).zip(before) {
            assert!((blended - (tau * src + (1.0 - tau) * old)).abs() < 1e-12);
        }
        // tau = 1 is a hard copy.
        let mut c = tiny(5, &[2, 3, 1]);
        c.soft_update_from(&a, 1.0).unwrap();
        assert_eq!(c, a);
    }

    #[test]
    fn adam_descends_a_quadratic() {
        // Minimize (p - 3)^2 elementwise.
        let mut params = vec![0.0; 4];
        let mut adam = Adam::new(4, 0.05);
        for _ in 0..2000 {
            let grads: Vec<f64> = params.iter().map(|p| 2.0 * (p - 3.0)).collect();
            adam.step(&mut params, &grads).unwrap();
        }
        for p in params {
            assert!((p - 3.0).abs() < 1e-3, "p = {p}");
        }
    }
}
