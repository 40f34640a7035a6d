//! Small dense networks for the policy search: ReLU MLPs with manual
//! batched backprop and an Adam optimizer. Everything is `f64` and plain
//! `Vec`, which keeps runs bit-deterministic and the whole optimizer state
//! serializable for campaign resume.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::trainer::matmul_acc;

/// Fully-connected ReLU network; the output layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    /// Per layer: `(out x in)` row-major weights.
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

/// Activations cached by [`Mlp::forward`]; `acts[0]` is the input batch and
/// `acts[i]` the post-ReLU output of layer `i-1`.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub acts: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
    pub batch: usize,
}

/// Per-layer parameter gradients.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub d_w: Vec<Vec<f64>>,
    pub d_b: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(sizes.len() >= 2);
        let mut w = Vec::new();
        let mut b = Vec::new();
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            w.push(
                (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect(),
            );
            b.push(vec![0.0; fan_out]);
        }
        Self {
            sizes: sizes.to_vec(),
            w,
            b,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Batched forward over `batch` rows; returns the cache for backprop.
    pub fn forward(&self, x: &[f64], batch: usize) -> MlpCache {
        assert_eq!(x.len(), batch * self.in_dim());
        let layers = self.w.len();
        let mut acts = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(layers);
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let mut z = vec![0.0; batch * n_out];
            // z = a * w^T
            let mut w_t = vec![0.0; self.w[l].len()];
            transpose(&self.w[l], &mut w_t, n_out, n_in);
            matmul_acc(&acts[l], &w_t, &mut z, batch, n_in, n_out);
            for row in z.chunks_exact_mut(n_out) {
                for (v, &bias) in row.iter_mut().zip(&self.b[l]) {
                    *v += bias;
                }
            }
            pre.push(z.clone());
            if l + 1 < layers {
                for v in z.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            acts.push(z);
        }
        MlpCache { acts, pre, batch }
    }

    /// Output of the final layer for a cached forward pass.
    pub fn output<'c>(&self, cache: &'c MlpCache) -> &'c [f64] {
        cache.acts.last().unwrap()
    }

    /// Backpropagates `d_out` (batch x out); returns parameter gradients and
    /// the gradient with respect to the input batch.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64]) -> (MlpGrads, Vec<f64>) {
        let layers = self.w.len();
        let batch = cache.batch;
        assert_eq!(d_out.len(), batch * self.out_dim());
        let mut d_w = vec![Vec::new(); layers];
        let mut d_b = vec![Vec::new(); layers];
        let mut grad = d_out.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < layers {
                // gate by the hidden ReLU
                for (g, &z) in grad.iter_mut().zip(&cache.pre[l]) {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            // dW = grad^T (out x batch) * acts[l] (batch x in)
            let mut g_t = vec![0.0; grad.len()];
            transpose(&grad, &mut g_t, batch, n_out);
            let mut dw = vec![0.0; n_out * n_in];
            matmul_acc(&g_t, &cache.acts[l], &mut dw, n_out, batch, n_in);
            let mut db = vec![0.0; n_out];
            for row in grad.chunks_exact(n_out) {
                for (d, &g) in db.iter_mut().zip(row) {
                    *d += g;
                }
            }
            d_w[l] = dw;
            d_b[l] = db;
            // dX = grad (batch x out) * w (out x in)
            let mut dx = vec![0.0; batch * n_in];
            matmul_acc(&grad, &self.w[l], &mut dx, batch, n_out, n_in);
            grad = dx;
        }
        (MlpGrads { d_w, d_b }, grad)
    }

    /// `self = (1 - tau) * self + tau * other`, the Polyak target update.
    pub fn lerp_from(&mut self, other: &Mlp, tau: f64) {
        for (wt, ws) in self.w.iter_mut().zip(&other.w) {
            for (t, &s) in wt.iter_mut().zip(ws) {
                *t += tau * (s - *t);
            }
        }
        for (bt, bs) in self.b.iter_mut().zip(&other.b) {
            for (t, &s) in bt.iter_mut().zip(bs) {
                *t += tau * (s - *t);
            }
        }
    }
}

pub(crate) fn transpose(src: &[f64], dst: &mut [f64], m: usize, n: usize) {
    debug_assert_eq!(src.len(), m * n);
    for i in 0..m {
        for j in 0..n {
            dst[j * m + i] = src[i * n + j];
        }
    }
}

/// Adam state matching an [`Mlp`]'s parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m_w: net.w.iter().map(|w| vec![0.0; w.len()]).collect(),
            v_w: net.w.iter().map(|w| vec![0.0; w.len()]).collect(),
            m_b: net.b.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_b: net.b.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let apply = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        };
        for l in 0..net.w.len() {
            apply(&mut net.w[l], &grads.d_w[l], &mut self.m_w[l], &mut self.v_w[l]);
            apply(&mut net.b[l], &grads.d_b[l], &mut self.m_b[l], &mut self.v_b[l]);
        }
    }
}

/// Scalar Adam, used for the entropy temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarAdam {
    pub lr: f64,
    t: u64,
    m: f64,
    v: f64,
}

impl ScalarAdam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            t: 0,
            m: 0.0,
            v: 0.0,
        }
    }

    pub fn step(&mut self, param: &mut f64, grad: f64) {
        self.t += 1;
        self.m = 0.9 * self.m + 0.1 * grad;
        self.v = 0.999 * self.v + 0.001 * grad * grad;
        let m_hat = self.m / (1.0 - 0.9f64.powi(self.t as i32));
        let v_hat = self.v / (1.0 - 0.999f64.powi(self.t as i32));
        *param -= self.lr * m_hat / (v_hat.sqrt() + 1e-8);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::new(&[3, 8, 5, 2], &mut rng);
        let batch = 4;
        let x: Vec<f64> = (0..batch * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..batch * 2).map(|_| rng.random_range(-1.0..1.0)).collect();

        // L = 0.5 * sum((out - target)^2)
        let loss = |net: &Mlp, x: &[f64]| -> f64 {
            let cache = net.forward(x, batch);
            net.output(&cache)
                .iter()
                .zip(&target)
                .map(|(o, t)| 0.5 * (o - t) * (o - t))
                .sum()
        };

        let cache = net.forward(&x, batch);
        let d_out: Vec<f64> = net
            .output(&cache)
            .iter()
            .zip(&target)
            .map(|(o, t)| o - t)
            .collect();
        let (grads, dx) = net.backward(&cache, &d_out);

        let h = 1e-6;
        for l in 0..net.w.len() {
            for i in (0..net.w[l].len()).step_by(7) {
                let orig = net.w[l][i];
                net.w[l][i] = orig + h;
                let up = loss(&net, &x);
                net.w[l][i] = orig - h;
                let down = loss(&net, &x);
                net.w[l][i] = orig;
                let fd = (up - down) / (2.0 * h);
                assert!(
                    (grads.d_w[l][i] - fd).abs() < 1e-6 * fd.abs().max(1.0),
                    "layer {l} w[{i}]: {} vs {fd}",
                    grads.d_w[l][i]
                );
            }
        }
        // input gradient
        let mut x_pert = x.clone();
        for i in 0..x.len() {
            let orig = x_pert[i];
            x_pert[i] = orig + h;
            let up = loss(&net, &x_pert);
            x_pert[i] = orig - h;
            let down = loss(&net, &x_pert);
            x_pert[i] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((dx[i] - fd).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn adam_reduces_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Mlp::new(&[2, 8, 1], &mut rng);
        let mut opt = Adam::new(&net, 1e-2);
        let x = vec![0.3, -0.7, 0.9, 0.1, -0.5, 0.4];
        let target = [0.5, -0.2, 0.8];
        let loss_of = |net: &Mlp| {
            let c = net.forward(&x, 3);
            net.output(&c)
                .iter()
                .zip(&target)
                .map(|(o, t)| 0.5 * (o - t) * (o - t))
                .sum::<f64>()
        };
        let before = loss_of(&net);
        for _ in 0..200 {
            let cache = net.forward(&x, 3);
            let d_out: Vec<f64> = net
                .output(&cache)
                .iter()
                .zip(&target)
                .map(|(o, t)| o - t)
                .collect();
            let (grads, _) = net.backward(&cache, &d_out);
            opt.step(&mut net, &grads);
        }
        assert!(loss_of(&net) < before * 0.05);
    }

    #[test]
    fn polyak_moves_towards_source() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = Mlp::new(&[2, 4, 1], &mut rng);
        let b = Mlp::new(&[2, 4, 1], &mut rng);
        let before = (a.w[0][0] - b.w[0][0]).abs();
        a.lerp_from(&b, 0.5);
        assert!((a.w[0][0] - b.w[0][0]).abs() < before);
        a.lerp_from(&b, 1.0);
        assert_eq!(a.w[0][0], b.w[0][0]);
    }
}
