//! Desk-scale CNN training engine.
//!
//! Self-contained forward/backward/SGD over the layer kinds the network
//! model admits (conv, fc, ReLU, max-pool), with two compression hooks wired
//! through the whole path:
//!
//! - weight fake-quantization with a straight-through estimator: the forward
//!   pass uses quantized weights, the backward pass treats the quantizer as
//!   identity, and the update lands on the underlying float weights;
//! - mask-enforced pruning: weight gradients are multiplied by the layer's
//!   0/1 mask before the update, so pruned coordinates stay exactly zero.
//!
//! Everything is generic over the scalar type: training runs in `f32`,
//! gradient checks instantiate the identical code with `f64`.

mod checkpoint;
mod data;
mod ops;

pub use checkpoint::{checkpoint_restore, checkpoint_save};
pub use data::{load_idx, synthetic_dataset, synthetic_digits, Dataset};
pub(crate) use ops::matmul_acc;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::compress::quantize_weights;
use crate::net::{LayerKind, NetError, NetworkSpec, Tensor4};
use crate::{scalar, Scalar};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: bad magic: expected {expected:#010x}, got {got:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        got: u32,
    },
    #[error("{path}: truncated: wanted {wanted} bytes, had {had}")]
    Truncated {
        path: String,
        wanted: usize,
        had: usize,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("bad train config: {0}")]
    BadConfig(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// SGD hyperparameters for one training run.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 32,
            epochs: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(TrainError::BadConfig("learning rate must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::BadConfig("momentum must be in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(TrainError::BadConfig(
                "batch size and epochs must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Weights, bias, pruning mask, and quantizer depth of one neural layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelLayer<T> {
    /// `(c_out, c_in, f_y, f_x)` row-major; `(c_out, c_in)` for fc.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    /// 1 = kept, 0 = pruned. Pruned weights are zero and stay zero.
    pub mask: Vec<u8>,
    /// Weight fake-quantization depth; `None` disables quantization.
    pub q_bits: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerShape {
    in_c: usize,
    in_h: usize,
    in_w: usize,
    /// conv output before pooling (equals spec `y`/`x`; 1 for fc)
    out_h: usize,
    out_w: usize,
    /// after optional pooling
    pooled_h: usize,
    pooled_w: usize,
}

/// A trainable CNN realizing a [`NetworkSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub net: NetworkSpec,
    pub layers: Vec<ModelLayer<T>>,
    /// Activation fake-quantization depth (applied post-ReLU); `None` off.
    pub act_bits: Option<u32>,
    pub seed: u64,
    shapes: Vec<LayerShape>,
}

impl<T: Scalar> Model<T> {
    /// Initializes weights Kaiming-uniform from the seed; biases zero,
    /// masks all-ones, weight quantization off, activations at 10 bits.
    pub fn new(net: NetworkSpec, seed: u64) -> Result<Self, TrainError> {
        net.validate()?;
        let shapes = layer_shapes(&net);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(net.layers.len());
        for layer in &net.layers {
            let spec = layer.spec;
            let n_w = spec.param_count() as usize;
            let fan_in = (spec.c_in * spec.f_y * spec.f_x) as f64;
            let bound = (6.0 / fan_in).sqrt();
            let weights: Vec<T> = (0..n_w)
                .map(|_| scalar(rng.random_range(-bound..bound)))
                .collect();
            layers.push(ModelLayer {
                weights,
                bias: vec![T::zero(); spec.c_out],
                mask: vec![1u8; n_w],
                q_bits: None,
            });
        }
        Ok(Self {
            net,
            layers,
            act_bits: Some(10),
            seed,
            shapes,
        })
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Class count = flattened size of the final layer output.
    pub fn num_classes(&self) -> usize {
        let last = self.shapes.last().expect("validated net has layers");
        self.net.layers.last().expect("nonempty").spec.c_out * last.pooled_h * last.pooled_w
    }

    /// The weights the forward pass actually uses: masked, then fake-
    /// quantized at the layer's depth, then masked again.
    pub fn effective_weights(&self, layer: usize) -> Vec<T> {
        let l = &self.layers[layer];
        let mut w: Vec<T> = l
            .weights
            .iter()
            .zip(&l.mask)
            .map(|(&v, &m)| if m == 0 { T::zero() } else { v })
            .collect();
        if let Some(bits) = l.q_bits {
            w = quantize_weights(&w, bits);
            for (v, &m) in w.iter_mut().zip(&l.mask) {
                if m == 0 {
                    *v = T::zero();
                }
            }
        }
        w
    }

    /// Logits for a batch `(n, c, h, w)`, shaped `(n, classes, 1, 1)`.
    pub fn forward(&self, batch: &Tensor4<T>) -> Result<Tensor4<T>, TrainError> {
        let cache = self.forward_cached(batch)?;
        Ok(cache.into_logits())
    }

    fn check_input(&self, batch: &Tensor4<T>) -> Result<(), TrainError> {
        let [_, c, h, w] = batch.dims();
        if (c, h, w) != self.net.input_shape {
            return Err(TrainError::Shape(format!(
                "batch is {c}x{h}x{w}, model wants {:?}",
                self.net.input_shape
            )));
        }
        Ok(())
    }

    pub(crate) fn forward_cached(&self, batch: &Tensor4<T>) -> Result<BatchCache<T>, TrainError> {
        self.check_input(batch)?;
        let n = batch.dims()[0];
        let mut inputs: Vec<Tensor4<T>> = vec![batch.clone()];
        let mut pre_act = Vec::with_capacity(self.layers.len());
        let mut pool_idx = Vec::with_capacity(self.layers.len());
        let mut eff_w = Vec::with_capacity(self.layers.len());

        for (l, layer) in self.net.layers.iter().enumerate() {
            let spec = layer.spec;
            let shape = self.shapes[l];
            let w = self.effective_weights(l);
            let input = &inputs[l];

            // linear part
            let mut z = Tensor4::zeros([n, spec.c_out, shape.out_h, shape.out_w]);
            match spec.kind {
                LayerKind::Conv => {
                    let k = spec.c_in * spec.f_y * spec.f_x;
                    let cols = spec.y * spec.x;
                    let mut patches = vec![T::zero(); k * cols];
                    let in_stride = shape.in_c * shape.in_h * shape.in_w;
                    let out_stride = spec.c_out * cols;
                    for s in 0..n {
                        ops::im2col(
                            &input.data()[s * in_stride..(s + 1) * in_stride],
                            &spec,
                            &mut patches,
                        );
                        matmul_acc(
                            &w,
                            &patches,
                            &mut z.data_mut()[s * out_stride..(s + 1) * out_stride],
                            spec.c_out,
                            k,
                            cols,
                        );
                    }
                    for s in 0..n {
                        let out = &mut z.data_mut()[s * out_stride..(s + 1) * out_stride];
                        for c_o in 0..spec.c_out {
                            let b = self.layers[l].bias[c_o];
                            for v in &mut out[c_o * cols..(c_o + 1) * cols] {
                                *v = *v + b;
                            }
                        }
                    }
                }
                LayerKind::Fc => {
                    // z[n x c_out] = input[n x c_in] * w^T[c_in x c_out]
                    let mut w_t = vec![T::zero(); w.len()];
                    ops::transpose(&w, &mut w_t, spec.c_out, spec.c_in);
                    matmul_acc(input.data(), &w_t, z.data_mut(), n, spec.c_in, spec.c_out);
                    for s in 0..n {
                        let row = &mut z.data_mut()[s * spec.c_out..(s + 1) * spec.c_out];
                        for (v, &b) in row.iter_mut().zip(&self.layers[l].bias) {
                            *v = *v + b;
                        }
                    }
                }
            }
            pre_act.push(z.clone());

            // activation + activation fake-quantization
            let mut a = z;
            if layer.activation.is_some() {
                for v in a.data_mut() {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
                if let Some(bits) = self.act_bits {
                    quantize_activations(a.data_mut(), bits);
                }
            }

            // pooling
            let idx = if let Some(p) = layer.pool {
                let (c, h, w_) = (spec.c_out, shape.out_h, shape.out_w);
                let (ph, pw) = (shape.pooled_h, shape.pooled_w);
                let mut pooled = Tensor4::zeros([n, c, ph, pw]);
                let mut arg = vec![0u32; n * c * ph * pw];
                let in_stride = c * h * w_;
                let out_stride = c * ph * pw;
                for s in 0..n {
                    let mut sample_arg = vec![0u32; out_stride];
                    ops::maxpool(
                        &a.data()[s * in_stride..(s + 1) * in_stride],
                        c,
                        h,
                        w_,
                        p,
                        &mut pooled.data_mut()[s * out_stride..(s + 1) * out_stride],
                        &mut sample_arg,
                    );
                    for (dst, &v) in arg[s * out_stride..(s + 1) * out_stride]
                        .iter_mut()
                        .zip(&sample_arg)
                    {
                        *dst = v + (s * in_stride) as u32;
                    }
                }
                a = pooled;
                Some(arg)
            } else {
                None
            };
            pool_idx.push(idx);
            eff_w.push(w);
            inputs.push(a);
        }

        Ok(BatchCache {
            inputs,
            pre_act,
            pool_idx,
            eff_w,
        })
    }

    /// Backpropagates `d_logits` through the cached forward pass.
    ///
    /// Straight-through estimator: gradients are taken at the effective
    /// (masked, quantized) weights and the quantizer/activation-quantizer
    /// are treated as identity.
    pub(crate) fn backward(
        &self,
        cache: &BatchCache<T>,
        d_logits: &Tensor4<T>,
    ) -> Vec<LayerGrads<T>> {
        let n = cache.inputs[0].dims()[0];
        let l_count = self.layers.len();
        let mut grads: Vec<LayerGrads<T>> = self
            .layers
            .iter()
            .map(|l| LayerGrads {
                d_weights: vec![T::zero(); l.weights.len()],
                d_bias: vec![T::zero(); l.bias.len()],
            })
            .collect();

        let mut grad = d_logits.clone();
        for l in (0..l_count).rev() {
            let layer = &self.net.layers[l];
            let spec = layer.spec;
            let shape = self.shapes[l];

            // pool backward: scatter into the pre-pool shape
            if layer.pool.is_some() {
                let idx = cache.pool_idx[l].as_ref().expect("pooled layer has argmax");
                let mut up = Tensor4::zeros([n, spec.c_out, shape.out_h, shape.out_w]);
                for (&i, &g) in idx.iter().zip(grad.data()) {
                    let v = &mut up.data_mut()[i as usize];
                    *v = *v + g;
                }
                grad = up;
            }

            // ReLU backward on the pre-activation (quantizer is identity)
            if layer.activation.is_some() {
                for (g, &z) in grad.data_mut().iter_mut().zip(cache.pre_act[l].data()) {
                    if z <= T::zero() {
                        *g = T::zero();
                    }
                }
            }

            let input = &cache.inputs[l];
            let w = &cache.eff_w[l];
            match spec.kind {
                LayerKind::Conv => {
                    let k = spec.c_in * spec.f_y * spec.f_x;
                    let cols = spec.y * spec.x;
                    let in_stride = shape.in_c * shape.in_h * shape.in_w;
                    let out_stride = spec.c_out * cols;
                    let mut patches = vec![T::zero(); k * cols];
                    let mut patches_t = vec![T::zero(); k * cols];
                    let mut w_t = vec![T::zero(); w.len()];
                    ops::transpose(w, &mut w_t, spec.c_out, k);
                    let mut d_patches = vec![T::zero(); k * cols];
                    let need_dx = l > 0;
                    let mut d_in = if need_dx {
                        Tensor4::zeros([n, shape.in_c, shape.in_h, shape.in_w])
                    } else {
                        Tensor4::zeros([1, 1, 1, 1])
                    };
                    for s in 0..n {
                        let g_mat = &grad.data()[s * out_stride..(s + 1) * out_stride];
                        // bias: row sums
                        for c_o in 0..spec.c_out {
                            let mut acc = T::zero();
                            for &g in &g_mat[c_o * cols..(c_o + 1) * cols] {
                                acc = acc + g;
                            }
                            grads[l].d_bias[c_o] = grads[l].d_bias[c_o] + acc;
                        }
                        // dW += g_mat (c_out x cols) * patches^T (cols x k)
                        ops::im2col(
                            &input.data()[s * in_stride..(s + 1) * in_stride],
                            &spec,
                            &mut patches,
                        );
                        ops::transpose(&patches, &mut patches_t, k, cols);
                        matmul_acc(g_mat, &patches_t, &mut grads[l].d_weights, spec.c_out, cols, k);
                        if need_dx {
                            // dPatches = w^T (k x c_out) * g_mat (c_out x cols)
                            for v in d_patches.iter_mut() {
                                *v = T::zero();
                            }
                            matmul_acc(&w_t, g_mat, &mut d_patches, k, spec.c_out, cols);
                            ops::col2im_acc(
                                &d_patches,
                                &spec,
                                &mut d_in.data_mut()[s * in_stride..(s + 1) * in_stride],
                            );
                        }
                    }
                    if need_dx {
                        grad = d_in;
                    }
                }
                LayerKind::Fc => {
                    // dB = column sums of g (n x c_out)
                    for s in 0..n {
                        let row = &grad.data()[s * spec.c_out..(s + 1) * spec.c_out];
                        for (b, &g) in grads[l].d_bias.iter_mut().zip(row) {
                            *b = *b + g;
                        }
                    }
                    // dW (c_out x c_in) = g^T (c_out x n) * input (n x c_in)
                    let mut g_t = vec![T::zero(); n * spec.c_out];
                    ops::transpose(grad.data(), &mut g_t, n, spec.c_out);
                    matmul_acc(&g_t, input.data(), &mut grads[l].d_weights, spec.c_out, n, spec.c_in);
                    if l > 0 {
                        // dX (n x c_in) = g (n x c_out) * w (c_out x c_in)
                        let mut d_in =
                            Tensor4::zeros([n, shape.in_c, shape.in_h, shape.in_w]);
                        matmul_acc(grad.data(), w, d_in.data_mut(), n, spec.c_out, spec.c_in);
                        grad = d_in;
                    }
                }
            }
        }
        grads
    }
}

pub(crate) struct BatchCache<T> {
    /// `inputs[l]` feeds layer `l`; the last entry is the network output.
    inputs: Vec<Tensor4<T>>,
    pre_act: Vec<Tensor4<T>>,
    pool_idx: Vec<Option<Vec<u32>>>,
    eff_w: Vec<Vec<T>>,
}

impl<T: Scalar> BatchCache<T> {
    pub(crate) fn logits(&self) -> &Tensor4<T> {
        self.inputs.last().expect("forward produced output")
    }

    fn into_logits(mut self) -> Tensor4<T> {
        self.inputs.pop().expect("forward produced output")
    }
}

pub(crate) struct LayerGrads<T> {
    pub d_weights: Vec<T>,
    pub d_bias: Vec<T>,
}

fn layer_shapes(net: &NetworkSpec) -> Vec<LayerShape> {
    let (mut c, mut h, mut w) = net.input_shape;
    let mut shapes = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        let spec = layer.spec;
        let (in_c, in_h, in_w) = match spec.kind {
            LayerKind::Conv => (c, h, w),
            LayerKind::Fc => (c * h * w, 1, 1),
        };
        let (out_h, out_w) = match spec.kind {
            LayerKind::Conv => (spec.y, spec.x),
            LayerKind::Fc => (1, 1),
        };
        let (pooled_h, pooled_w) = match layer.pool {
            Some(p) => (out_h / p, out_w / p),
            None => (out_h, out_w),
        };
        shapes.push(LayerShape {
            in_c,
            in_h,
            in_w,
            out_h,
            out_w,
            pooled_h,
            pooled_w,
        });
        c = spec.c_out;
        h = pooled_h;
        w = pooled_w;
    }
    shapes
}

/// Snaps non-negative activations to a `bits`-wide uniform grid scaled by
/// the batch maximum. No-op on an all-zero buffer.
fn quantize_activations<T: Scalar>(data: &mut [T], bits: u32) {
    let max = data.iter().fold(T::zero(), |m, &v| if v > m { v } else { m });
    if max <= T::zero() {
        return;
    }
    let levels = scalar::<T>(((1u64 << bits) - 1) as f64);
    let scale = max / levels;
    for v in data.iter_mut() {
        *v = (*v / scale).round() * scale;
    }
}

/// Softmax cross-entropy; returns mean loss and per-logit gradients.
pub fn cross_entropy<T: Scalar>(
    logits: &Tensor4<T>,
    labels: &[u8],
) -> Result<(f64, Tensor4<T>), TrainError> {
    let [n, c, h, w] = logits.dims();
    let classes = c * h * w;
    if n != labels.len() {
        return Err(TrainError::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    let mut d = Tensor4::zeros(logits.dims());
    let mut loss = 0.0f64;
    let scale = scalar::<T>(1.0 / n as f64);
    for s in 0..n {
        let row = &logits.data()[s * classes..(s + 1) * classes];
        let label = labels[s] as usize;
        if label >= classes {
            return Err(TrainError::Shape(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let max = row.iter().fold(T::neg_infinity(), |m, &v| if v > m { v } else { m });
        let mut sum = T::zero();
        for &v in row {
            sum = sum + (v - max).exp();
        }
        let log_sum = max + sum.ln();
        loss += (log_sum - row[label]).to_f64().unwrap_or(f64::INFINITY);
        let d_row = &mut d.data_mut()[s * classes..(s + 1) * classes];
        for (j, (dv, &v)) in d_row.iter_mut().zip(row).enumerate() {
            let softmax = (v - log_sum).exp();
            let target = if j == label { T::one() } else { T::zero() };
            *dv = (softmax - target) * scale;
        }
    }
    Ok((loss / n as f64, d))
}

/// One full pass of mini-batch SGD with momentum; returns the mean loss.
///
/// Deterministic given the config seed; weight gradients pass straight
/// through the quantizer and are masked before the update.
pub fn train_epoch<T: Scalar>(
    model: &mut Model<T>,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<f64, TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    order.shuffle(&mut rng);

    let lr = scalar::<T>(config.learning_rate);
    let mom = scalar::<T>(config.momentum);
    let mut velocity: Vec<LayerGrads<T>> = model
        .layers
        .iter()
        .map(|l| LayerGrads {
            d_weights: vec![T::zero(); l.weights.len()],
            d_bias: vec![T::zero(); l.bias.len()],
        })
        .collect();

    let mut loss_sum = 0.0f64;
    for chunk in order.chunks(config.batch_size) {
        let (batch, labels) = dataset.batch::<T>(chunk);
        let cache = model.forward_cached(&batch)?;
        let (loss, d_logits) = cross_entropy(cache.logits(), &labels)?;
        let grads = model.backward(&cache, &d_logits);
        for ((layer, g), v) in model.layers.iter_mut().zip(&grads).zip(&mut velocity) {
            for i in 0..layer.weights.len() {
                let masked = if layer.mask[i] == 0 { T::zero() } else { g.d_weights[i] };
                v.d_weights[i] = mom * v.d_weights[i] + masked;
                layer.weights[i] = layer.weights[i] - lr * v.d_weights[i];
            }
            for i in 0..layer.bias.len() {
                v.d_bias[i] = mom * v.d_bias[i] + g.d_bias[i];
                layer.bias[i] = layer.bias[i] - lr * v.d_bias[i];
            }
        }
        loss_sum += loss * chunk.len() as f64;
    }
    Ok(loss_sum / n as f64)
}

/// Runs `config.epochs` epochs with per-epoch derived seeds; returns the
/// mean loss of each epoch.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<Vec<f64>, TrainError> {
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let cfg = TrainConfig {
            seed: config.seed.wrapping_add(epoch as u64),
            ..*config
        };
        losses.push(train_epoch(model, dataset, &cfg)?);
    }
    Ok(losses)
}

/// Top-1 accuracy on a dataset; argmax ties resolve to the lowest class.
pub fn evaluate<T: Scalar>(model: &Model<T>, dataset: &Dataset) -> Result<f64, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let n = dataset.len();
    let mut correct = 0u64;
    let idxs: Vec<usize> = (0..n).collect();
    for chunk in idxs.chunks(256) {
        let (batch, labels) = dataset.batch::<T>(chunk);
        let logits = model.forward(&batch)?;
        let classes = logits.len() / chunk.len();
        for (s, &label) in labels.iter().enumerate() {
            let row = &logits.data()[s * classes..(s + 1) * classes];
            let mut best = 0usize;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            if best == label as usize {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / n as f64)
}

/// Compares analytic gradients against central finite differences
/// (step `1e-4`) with quantization disabled; returns the max relative error.
///
/// Relative error uses a `1e-6` floor so that coordinates with true zero
/// gradient do not amplify finite-difference noise.
pub fn gradient_check(
    model: &Model<f64>,
    images: &Tensor4<f64>,
    labels: &[u8],
) -> Result<f64, TrainError> {
    const H: f64 = 1e-4;
    let mut probe = model.clone();
    probe.act_bits = None;
    for layer in &mut probe.layers {
        layer.q_bits = None;
    }

    let cache = probe.forward_cached(images)?;
    let (_, d_logits) = cross_entropy(cache.logits(), labels)?;
    let analytic = probe.backward(&cache, &d_logits);

    let loss_at = |m: &Model<f64>| -> Result<f64, TrainError> {
        let logits = m.forward(images)?;
        Ok(cross_entropy(&logits, labels)?.0)
    };

    let mut max_rel = 0.0f64;
    let mut rel = |a: f64, fd: f64| {
        let denom = a.abs().max(fd.abs()).max(1e-6);
        let r = (a - fd).abs() / denom;
        if r > max_rel {
            max_rel = r;
        }
    };

    for l in 0..probe.layers.len() {
        for i in 0..probe.layers[l].weights.len() {
            let orig = probe.layers[l].weights[i];
            probe.layers[l].weights[i] = orig + H;
            let up = loss_at(&probe)?;
            probe.layers[l].weights[i] = orig - H;
            let down = loss_at(&probe)?;
            probe.layers[l].weights[i] = orig;
            let masked_analytic = if probe.layers[l].mask[i] == 0 {
                0.0
            } else {
                analytic[l].d_weights[i]
            };
            rel(masked_analytic, (up - down) / (2.0 * H));
        }
        for i in 0..probe.layers[l].bias.len() {
            let orig = probe.layers[l].bias[i];
            probe.layers[l].bias[i] = orig + H;
            let up = loss_at(&probe)?;
            probe.layers[l].bias[i] = orig - H;
            let down = loss_at(&probe)?;
            probe.layers[l].bias[i] = orig;
            rel(analytic[l].d_bias[i], (up - down) / (2.0 * H));
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests;
