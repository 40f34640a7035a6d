//! Per-layer compression state and the operators that apply it.
//!
//! [`CompressionState`] tracks a continuous quantization depth `Q` and a
//! pruning remaining amount `P` per layer. Each optimization step adds a
//! bounded delta scaled by `gamma^t`, so later steps move less — the
//! incremental updates telescope to the closed-form discounted sum.
//! [`quantize_weights`] snaps weights to a symmetric uniform grid,
//! [`prune_mask`] keeps the largest-magnitude fraction, and
//! [`apply_compression`] applies both to a trainer model (prune first, then
//! quantize over the survivors).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trainer::Model;
use crate::{scalar, Scalar};

/// Quantization depth bounds, in bits.
pub const Q_MIN: f64 = 1.0;
pub const Q_MAX: f64 = 8.0;
/// Pruning remaining-amount bounds.
pub const P_MIN: f64 = 0.01;
pub const P_MAX: f64 = 1.0;
/// Per-step action bounds before discounting.
pub const DELTA_Q_MAX: f64 = 1.0;
pub const DELTA_P_MAX: f64 = 0.05;

#[derive(Debug, Error)]
pub enum CompressError {
    #[error("layer {layer}: delta ({dq}, {dp}) outside bounds (|dq| <= {DELTA_Q_MAX}, |dp| <= {DELTA_P_MAX})")]
    DeltaBounds { layer: usize, dq: f64, dp: f64 },
    #[error("expected {expected} per-layer values, got {got}")]
    LayerCount { expected: usize, got: usize },
    #[error("gamma {0} outside (0, 1]")]
    BadGamma(f64),
}

/// Per-layer quantization depth and pruning remaining amount, with the
/// step index and discount factor that drive the schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionState {
    q: Vec<f64>,
    p: Vec<f64>,
    t: u32,
    gamma: f64,
}

impl CompressionState {
    /// Fresh state at full precision: `Q = 8` bits, `P = 1.0` everywhere.
    pub fn new(layers: usize, gamma: f64) -> Result<Self, CompressError> {
        Self::with_initial(vec![Q_MAX; layers], vec![P_MAX; layers], gamma)
    }

    pub fn with_initial(q: Vec<f64>, p: Vec<f64>, gamma: f64) -> Result<Self, CompressError> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(CompressError::BadGamma(gamma));
        }
        if q.len() != p.len() {
            return Err(CompressError::LayerCount {
                expected: q.len(),
                got: p.len(),
            });
        }
        Ok(Self {
            q: q.into_iter().map(|v| v.clamp(Q_MIN, Q_MAX)).collect(),
            p: p.into_iter().map(|v| v.clamp(P_MIN, P_MAX)).collect(),
            t: 0,
            gamma,
        })
    }

    pub fn layers(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn step_index(&self) -> u32 {
        self.t
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Advances the schedule one step: adds `delta * gamma^t` per layer,
    /// clamps to the valid ranges, and increments the step index.
    pub fn update(&self, deltas: &[(f64, f64)]) -> Result<Self, CompressError> {
        if deltas.len() != self.q.len() {
            return Err(CompressError::LayerCount {
                expected: self.q.len(),
                got: deltas.len(),
            });
        }
        const TOL: f64 = 1e-9;
        for (layer, &(dq, dp)) in deltas.iter().enumerate() {
            if dq.abs() > DELTA_Q_MAX + TOL || dp.abs() > DELTA_P_MAX + TOL {
                return Err(CompressError::DeltaBounds { layer, dq, dp });
            }
        }
        let discount = self.gamma.powi(self.t as i32);
        let mut next = self.clone();
        for (i, &(dq, dp)) in deltas.iter().enumerate() {
            next.q[i] = (self.q[i] + dq * discount).clamp(Q_MIN, Q_MAX);
            next.p[i] = (self.p[i] + dp * discount).clamp(P_MIN, P_MAX);
        }
        next.t += 1;
        Ok(next)
    }

    /// `(effective_bits, p)` per layer, the cost model's input.
    pub fn assignments(&self) -> Vec<(u32, f64)> {
        self.q
            .iter()
            .zip(&self.p)
            .map(|(&q, &p)| (effective_bits(q), p))
            .collect()
    }
}

/// Rounds a continuous quantization depth to the integer bit-width used for
/// fine-tuning and cost evaluation (half away from zero).
pub fn effective_bits(q: f64) -> u32 {
    (q.round().clamp(Q_MIN, Q_MAX)) as u32
}

/// Symmetric uniform fake-quantization to `q_bits` weight levels.
///
/// For `q_bits >= 2` the scale is `max|w| / (2^(q_bits-1) - 1)` and values
/// snap to `scale * round(w / scale)`; for `q_bits = 1` every nonzero weight
/// becomes `sign(w) * mean|w|` over the nonzero entries. Idempotent, and odd
/// for `q_bits >= 2`.
pub fn quantize_weights<T: Scalar>(weights: &[T], q_bits: u32) -> Vec<T> {
    assert!((1..=8).contains(&q_bits), "q_bits {q_bits} outside [1, 8]");
    if q_bits == 1 {
        let (sum, count) = weights.iter().fold((T::zero(), 0u64), |(s, n), &w| {
            if w == T::zero() {
                (s, n)
            } else {
                (s + w.abs(), n + 1)
            }
        });
        if count == 0 {
            return vec![T::zero(); weights.len()];
        }
        // already binarized: keep the shared magnitude bit-exact
        let first = weights.iter().find(|&&w| w != T::zero()).copied().unwrap();
        let magnitude = if weights.iter().all(|&w| w == T::zero() || w.abs() == first.abs()) {
            first.abs()
        } else {
            sum / scalar::<T>(count as f64)
        };
        return weights
            .iter()
            .map(|&w| {
                if w == T::zero() {
                    T::zero()
                } else {
                    w.signum() * magnitude
                }
            })
            .collect();
    }
    let max_abs = weights
        .iter()
        .fold(T::zero(), |m, &w| if w.abs() > m { w.abs() } else { m });
    if max_abs == T::zero() {
        return vec![T::zero(); weights.len()];
    }
    let levels = scalar::<T>(((1u32 << (q_bits - 1)) - 1) as f64);
    let scale = max_abs / levels;
    weights.iter().map(|&w| (w / scale).round() * scale).collect()
}

/// Keeps the `round(remaining * n)` largest-magnitude entries (at least one);
/// ties keep the lower flat index. Returns a 0/1 mask.
pub fn prune_mask<T: Scalar>(weights: &[T], remaining: f64) -> Vec<u8> {
    assert!(
        remaining > 0.0 && remaining <= 1.0,
        "remaining {remaining} outside (0, 1]"
    );
    let n = weights.len();
    let keep = ((remaining * n as f64).round() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        weights[b]
            .abs()
            .partial_cmp(&weights[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut mask = vec![0u8; n];
    for &i in order.iter().take(keep) {
        mask[i] = 1;
    }
    mask
}

/// Prunes and fake-quantizes every layer of a model in place.
///
/// Per layer: recompute the mask from current magnitudes at `P_l`, zero the
/// pruned weights, then quantize the survivors at `effective_bits(Q_l)`
/// (pruning first, so the quantization scale never sees pruned values). The
/// mask and bit-width are stored on the model and enforced by later
/// fine-tuning.
pub fn apply_compression<T: Scalar>(
    model: &mut Model<T>,
    state: &CompressionState,
) -> Result<(), CompressError> {
    if model.layers.len() != state.layers() {
        return Err(CompressError::LayerCount {
            expected: model.layers.len(),
            got: state.layers(),
        });
    }
    for (layer, (&q, &p)) in model.layers.iter_mut().zip(state.q.iter().zip(&state.p)) {
        let mask = prune_mask(&layer.weights, p);
        for (w, &m) in layer.weights.iter_mut().zip(&mask) {
            if m == 0 {
                *w = T::zero();
            }
        }
        let bits = effective_bits(q);
        let quantized = quantize_weights(&layer.weights, bits);
        for ((w, &m), v) in layer.weights.iter_mut().zip(&mask).zip(quantized) {
            *w = if m == 0 { T::zero() } else { v };
        }
        layer.mask = mask;
        layer.q_bits = Some(bits);
    }
    Ok(())
}
