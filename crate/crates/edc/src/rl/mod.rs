//! The multi-step compression environment and policy search.
//!
//! An episode starts from the uncompressed model (`Q = 8` bits, `P = 1.0`
//! everywhere) and takes up to `max_steps` bounded quantization/pruning
//! steps. After each step the model is fine-tuned and re-evaluated; the
//! reward multiplies the accuracy ratio (raised to `lambda`) by the energy
//! ratio, so holding accuracy while cutting modeled energy pays off. The
//! episode ends at the step limit or when accuracy falls below the floor.
//!
//! Two optimizers search over episodes: soft actor-critic ([`sac_train`])
//! and a seeded random-shooting baseline ([`random_search`]). Both report
//! the best feasible configuration ever visited: minimal modeled energy
//! among states whose accuracy stayed at or above the floor.

mod env;
mod mlp;
mod sac;
mod search;

pub use env::{surrogate_env, AccuracyBackend, CompressionEnv, SurrogateAccuracy, TrainerBackend};
pub use mlp::{Adam, Mlp};
pub use sac::{sac_train, ReplayBuffer, SacAgent, SacConfig, SacRun, Transition};
pub use search::{multistep_vs_onestep_pruning, pruning_schedule, random_search, PruningComparison, RandomRun};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compress::{CompressError, DELTA_P_MAX, DELTA_Q_MAX};
use crate::cost::{CostConstants, CostError, DataflowKind};
use crate::trainer::TrainError;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("reward inputs must be positive, got alpha {alpha}, alpha_prev {alpha_prev}, beta {beta}, beta_prev {beta_prev}")]
    NonPositiveReward {
        alpha: f64,
        alpha_prev: f64,
        beta: f64,
        beta_prev: f64,
    },
    #[error("step on a finished episode")]
    EpisodeFinished,
    #[error("bad env config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Compress(#[from] CompressError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Restricts which half of the action vector takes effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ablate {
    #[default]
    None,
    /// Quantization only: pruning deltas are zeroed, `P` stays 1.0.
    Quant,
    /// Pruning only: quantization deltas are zeroed, `Q` stays 8.
    Prune,
}

/// Environment parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvConfig {
    pub dataflow: DataflowKind,
    /// Schedule discount for the per-step deltas.
    pub gamma: f64,
    /// Accuracy exponent in the reward.
    pub lambda: f64,
    /// History window length in the state encoding.
    pub tau: usize,
    pub max_steps: u32,
    /// Absolute accuracy threshold ending the episode; `None` means
    /// baseline accuracy minus 0.03.
    pub accuracy_floor: Option<f64>,
    /// Per-step bounds the unit action is scaled by.
    pub delta_q_max: f64,
    pub delta_p_max: f64,
    pub finetune_epochs: usize,
    /// Steps at the start of each episode without fine-tuning.
    pub skip_finetune_steps: u32,
    pub seed: u64,
    pub constants: CostConstants,
    pub ablate: Ablate,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dataflow: DataflowKind::Xy,
            gamma: 0.9,
            lambda: 3.0,
            tau: 4,
            max_steps: 32,
            accuracy_floor: None,
            delta_q_max: DELTA_Q_MAX,
            delta_p_max: DELTA_P_MAX,
            finetune_epochs: 1,
            skip_finetune_steps: 0,
            seed: 0,
            constants: CostConstants::default(),
            ablate: Ablate::None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(RlError::BadConfig("gamma must be in (0, 1]".into()));
        }
        if self.lambda < 1.0 {
            return Err(RlError::BadConfig("lambda must be >= 1".into()));
        }
        if self.tau < 1 || self.max_steps < 1 {
            return Err(RlError::BadConfig("tau and max_steps must be >= 1".into()));
        }
        if self.delta_q_max <= 0.0 || self.delta_q_max > DELTA_Q_MAX {
            return Err(RlError::BadConfig(format!(
                "delta_q_max must be in (0, {DELTA_Q_MAX}]"
            )));
        }
        if self.delta_p_max <= 0.0 || self.delta_p_max > DELTA_P_MAX {
            return Err(RlError::BadConfig(format!(
                "delta_p_max must be in (0, {DELTA_P_MAX}]"
            )));
        }
        Ok(())
    }
}

/// Flattened observation: `Q` and `P` for all layers over the last `tau`
/// steps (padded with the initial values early in the episode), the last
/// `tau` rewards (padded with the neutral reward 1.0), and the normalized
/// step index. Dimension: `2*L*tau + tau + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState(pub Vec<f64>);

impl EnvState {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `2L` values in `[-1, 1]`: per-layer quantization directions, then
/// per-layer pruning directions. Out-of-range components are clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionVector(Vec<f64>);

impl ActionVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Scales the unit action into per-layer `(dq, dp)` deltas, applying
    /// the ablation mask.
    pub fn deltas(&self, dq_max: f64, dp_max: f64, ablate: Ablate) -> Vec<(f64, f64)> {
        let layers = self.0.len() / 2;
        (0..layers)
            .map(|l| {
                let dq = match ablate {
                    Ablate::Prune => 0.0,
                    _ => self.0[l] * dq_max,
                };
                let dp = match ablate {
                    Ablate::Quant => 0.0,
                    _ => self.0[layers + l] * dp_max,
                };
                (dq, dp)
            })
            .collect()
    }
}

/// One environment transition plus the measurements behind it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u32,
    pub state: EnvState,
    pub action: ActionVector,
    pub reward: f64,
    pub next_state: EnvState,
    pub done: bool,
    pub accuracy: f64,
    pub energy: f64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

/// Best feasible configuration seen so far: minimal modeled energy subject
/// to accuracy at or above the floor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestConfig {
    pub episode: usize,
    pub step: u32,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub accuracy: f64,
    pub energy: f64,
    /// Hex-encoded model checkpoint at the best step (trainer backend only).
    pub checkpoint: Option<String>,
}

impl BestConfig {
    pub fn checkpoint_bytes(&self) -> Option<Vec<u8>> {
        self.checkpoint
            .as_deref()
            .and_then(|h| crate::report::from_hex(h).ok())
    }
}

/// An episode's ordered records plus summary figures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub steps: u32,
    pub total_reward: f64,
    pub mean_reward: f64,
    pub final_accuracy: f64,
    pub final_energy: f64,
    pub records: Vec<StepRecord>,
}

/// Outcome of a search run. `best` is `None` when no visited configuration
/// ever met the accuracy floor; that is a reported result, not an error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Option<BestConfig>,
    pub episodes: Vec<EpisodeSummary>,
}

impl SearchResult {
    /// Mean episode return over the final `n` episodes.
    pub fn mean_return_last(&self, n: usize) -> f64 {
        let start = self.episodes.len().saturating_sub(n);
        let tail = &self.episodes[start..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().map(|e| e.total_reward).sum::<f64>() / tail.len() as f64
    }
}

/// `r = (alpha / alpha_prev)^lambda * beta_prev / beta`.
pub fn compute_reward(
    alpha: f64,
    alpha_prev: f64,
    beta: f64,
    beta_prev: f64,
    lambda: f64,
) -> Result<f64, RlError> {
    if alpha <= 0.0 || alpha_prev <= 0.0 || beta <= 0.0 || beta_prev <= 0.0 {
        return Err(RlError::NonPositiveReward {
            alpha,
            alpha_prev,
            beta,
            beta_prev,
        });
    }
    Ok((alpha / alpha_prev).powf(lambda) * beta_prev / beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_examples() {
        assert!((compute_reward(0.9, 0.9, 50.0, 100.0, 3.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(
            (compute_reward(0.891, 0.9, 100.0, 100.0, 3.0).unwrap() - 0.970299).abs() < 1e-12
        );
        // lambda = 1: halved accuracy exactly offsets halved energy
        assert!((compute_reward(0.45, 0.9, 50.0, 100.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        // identity step
        assert!((compute_reward(0.7, 0.7, 42.0, 42.0, 3.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reward_rejects_non_positive() {
        assert!(compute_reward(0.0, 0.9, 1.0, 1.0, 3.0).is_err());
        assert!(compute_reward(0.9, 0.9, -1.0, 1.0, 3.0).is_err());
    }

    #[test]
    fn reward_matches_direct_evaluation_and_unit_invariance() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let a = rng.random_range(0.01..1.0f64);
            let ap = rng.random_range(0.01..1.0f64);
            let b = rng.random_range(0.1..1e6f64);
            let bp = rng.random_range(0.1..1e6f64);
            let l = rng.random_range(1.0..5.0f64);
            let r = compute_reward(a, ap, b, bp, l).unwrap();
            let direct = (a / ap).powf(l) * (bp / b);
            assert!((r - direct).abs() <= 1e-12 * direct.abs());
            // scaling both energies by c leaves the reward unchanged
            let c = rng.random_range(0.001..1000.0f64);
            let scaled = compute_reward(a, ap, b * c, bp * c, l).unwrap();
            assert!((scaled - r).abs() <= 1e-9 * r.abs());
        }
    }

    #[test]
    fn action_vector_clamps_and_scales() {
        let a = ActionVector::new(vec![-2.0, 0.5, 1.5, -0.25]);
        assert_eq!(a.as_slice(), &[-1.0, 0.5, 1.0, -0.25]);
        let d = a.deltas(1.0, 0.05, Ablate::None);
        assert_eq!(d, vec![(-1.0, 0.05), (0.5, -0.0125)]);
        let d = a.deltas(1.0, 0.05, Ablate::Quant);
        assert_eq!(d, vec![(-1.0, 0.0), (0.5, 0.0)]);
        let d = a.deltas(1.0, 0.05, Ablate::Prune);
        assert_eq!(d, vec![(0.0, 0.05), (0.0, -0.0125)]);
    }
}
