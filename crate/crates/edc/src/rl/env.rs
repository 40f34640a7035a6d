//! The compression environment.
//!
//! [`CompressionEnv`] owns one model instance (or a trainer-free surrogate),
//! advances the per-layer schedule on each action, fine-tunes, measures
//! accuracy and modeled energy, and emits the reward. Resetting restores the
//! baseline checkpoint and the full-precision schedule.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::{
    compute_reward, ActionVector, Ablate, BestConfig, EnvConfig, EnvState, RlError, StepRecord,
};
use crate::compress::{apply_compression, CompressionState};
use crate::cost::network_energy;
use crate::net::NetworkSpec;
use crate::trainer::{
    checkpoint_restore, checkpoint_save, evaluate, train_epoch, Dataset, Model, TrainConfig,
};

/// Measured accuracy floor used when an episode's model collapses; keeps
/// the reward positive as required by its definition.
const ACCURACY_EPS: f64 = 1e-6;

/// Real accuracy backend: fine-tunes and evaluates an actual model.
#[derive(Debug, Clone)]
pub struct TrainerBackend {
    baseline: Vec<u8>,
    model: Model<f32>,
    train_set: Dataset,
    eval_set: Dataset,
    train_cfg: TrainConfig,
}

impl TrainerBackend {
    /// Snapshots `model` as the episode-start checkpoint.
    pub fn new(model: Model<f32>, train_set: Dataset, eval_set: Dataset, train_cfg: TrainConfig) -> Self {
        Self {
            baseline: checkpoint_save(&model),
            model,
            train_set,
            eval_set,
            train_cfg,
        }
    }
}

/// Deterministic synthetic accuracy for trainer-free optimizer tests:
/// a quadratic penalty in how far each layer is pushed from the
/// uncompressed point, mildly increasing with layer depth.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SurrogateAccuracy {
    pub base: f64,
    pub quant_penalty: f64,
    pub prune_penalty: f64,
}

impl Default for SurrogateAccuracy {
    fn default() -> Self {
        Self {
            base: 0.95,
            quant_penalty: 4e-4,
            prune_penalty: 2e-2,
        }
    }
}

impl SurrogateAccuracy {
    pub fn accuracy(&self, q: &[f64], p: &[f64]) -> f64 {
        let layers = q.len() as f64;
        let mut drop = 0.0;
        for (l, (&ql, &pl)) in q.iter().zip(p).enumerate() {
            let weight = 1.0 + 0.1 * l as f64;
            drop += weight
                * (self.quant_penalty * (8.0 - ql).powi(2) + self.prune_penalty * (1.0 - pl).powi(2));
        }
        (self.base - drop / layers).clamp(ACCURACY_EPS, 1.0)
    }
}

/// How the environment measures accuracy.
#[derive(Debug, Clone)]
pub enum AccuracyBackend {
    Trainer(Box<TrainerBackend>),
    Surrogate(SurrogateAccuracy),
}

/// The multi-step quantization/pruning environment.
#[derive(Debug)]
pub struct CompressionEnv {
    net: NetworkSpec,
    config: EnvConfig,
    backend: AccuracyBackend,
    schedule: CompressionState,
    steps_taken: u32,
    done: bool,
    episode_seed: u64,
    baseline_accuracy: f64,
    baseline_energy: f64,
    floor: f64,
    alpha_prev: f64,
    beta_prev: f64,
    q_hist: Vec<Vec<f64>>,
    p_hist: Vec<Vec<f64>>,
    r_hist: Vec<f64>,
    records: Vec<StepRecord>,
    episode: usize,
    best: Option<BestConfig>,
}

impl CompressionEnv {
    /// Builds the environment and performs the initial reset.
    pub fn new(
        net: NetworkSpec,
        config: EnvConfig,
        backend: AccuracyBackend,
    ) -> Result<Self, RlError> {
        config.validate()?;
        net.validate().map_err(crate::trainer::TrainError::from)?;
        let layers = net.layers.len();
        let schedule = CompressionState::new(layers, config.gamma)?;
        let mut env = Self {
            net,
            config,
            backend,
            schedule,
            steps_taken: 0,
            done: false,
            episode_seed: 0,
            baseline_accuracy: 0.0,
            baseline_energy: 0.0,
            floor: 0.0,
            alpha_prev: 0.0,
            beta_prev: 0.0,
            q_hist: Vec::new(),
            p_hist: Vec::new(),
            r_hist: Vec::new(),
            records: Vec::new(),
            episode: 0,
            best: None,
        };
        env.reset_seeded(0, env.config.seed)?;
        Ok(env)
    }

    pub fn layer_count(&self) -> usize {
        self.net.layers.len()
    }

    pub fn action_dim(&self) -> usize {
        2 * self.layer_count()
    }

    pub fn state_dim(&self) -> usize {
        2 * self.layer_count() * self.config.tau + self.config.tau + 1
    }

    pub fn tau(&self) -> usize {
        self.config.tau
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn network(&self) -> &NetworkSpec {
        &self.net
    }

    /// `(baseline accuracy, baseline energy)` measured at the last reset.
    pub fn baseline(&self) -> (f64, f64) {
        (self.baseline_accuracy, self.baseline_energy)
    }

    pub fn accuracy_floor(&self) -> f64 {
        self.floor
    }

    pub fn schedule(&self) -> &CompressionState {
        &self.schedule
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn steps_taken(&self) -> u32 {
        self.steps_taken
    }

    /// Best feasible configuration across every episode so far.
    pub fn best(&self) -> Option<&BestConfig> {
        self.best.as_ref()
    }

    /// Injects a previously saved best configuration when a campaign
    /// resumes; later episodes only replace it with lower energy.
    pub fn set_best(&mut self, best: Option<BestConfig>) {
        self.best = best;
    }

    /// Drains the current episode's step records.
    pub fn take_records(&mut self) -> Vec<StepRecord> {
        std::mem::take(&mut self.records)
    }

    /// Resets for the given logical episode index with a fresh seed for
    /// the fine-tuning streams.
    pub fn reset_seeded(&mut self, episode: usize, episode_seed: u64) -> Result<EnvState, RlError> {
        self.episode_seed = episode_seed;
        self.episode = episode;
        self.steps_taken = 0;
        self.done = false;
        self.records.clear();
        self.schedule = CompressionState::new(self.layer_count(), self.config.gamma)?;

        if let AccuracyBackend::Trainer(backend) = &mut self.backend {
            backend.model = checkpoint_restore(&backend.baseline)?;
        }
        self.baseline_accuracy = self.measure_accuracy()?;
        self.baseline_energy = self.measure_energy()?;
        self.floor = self
            .config
            .accuracy_floor
            .unwrap_or(self.baseline_accuracy - 0.03);
        self.alpha_prev = self.baseline_accuracy;
        self.beta_prev = self.baseline_energy;

        let tau = self.config.tau;
        self.q_hist = vec![self.schedule.q().to_vec(); tau];
        self.p_hist = vec![self.schedule.p().to_vec(); tau];
        self.r_hist = vec![1.0; tau];
        Ok(self.state_vector())
    }

    /// Resets reusing the configured seed (episode index 0).
    pub fn reset(&mut self) -> Result<EnvState, RlError> {
        self.reset_seeded(0, self.config.seed)
    }

    /// Applies one action: schedule update, compression, fine-tuning,
    /// evaluation, reward. Errors if the episode is already done.
    pub fn step(&mut self, action: &ActionVector) -> Result<(EnvState, f64, bool), RlError> {
        if self.done {
            return Err(RlError::EpisodeFinished);
        }
        let state_before = self.state_vector();
        let deltas = action.deltas(
            self.config.delta_q_max,
            self.config.delta_p_max,
            self.config.ablate,
        );
        self.schedule = self.schedule.update(&deltas)?;

        if let AccuracyBackend::Trainer(backend) = &mut self.backend {
            apply_compression(&mut backend.model, &self.schedule)?;
            if self.steps_taken >= self.config.skip_finetune_steps {
                for epoch in 0..self.config.finetune_epochs {
                    let cfg = TrainConfig {
                        seed: self
                            .episode_seed
                            .wrapping_add(7919 * self.steps_taken as u64)
                            .wrapping_add(epoch as u64),
                        ..backend.train_cfg
                    };
                    train_epoch(&mut backend.model, &backend.train_set, &cfg)?;
                }
            }
        }

        let alpha = self.measure_accuracy()?.max(ACCURACY_EPS);
        let beta = self.measure_energy()?;
        let reward = compute_reward(alpha, self.alpha_prev, beta, self.beta_prev, self.config.lambda)?;

        self.steps_taken += 1;
        self.done = self.steps_taken >= self.config.max_steps || alpha < self.floor;

        self.q_hist.remove(0);
        self.q_hist.push(self.schedule.q().to_vec());
        self.p_hist.remove(0);
        self.p_hist.push(self.schedule.p().to_vec());
        self.r_hist.remove(0);
        self.r_hist.push(reward);

        if alpha >= self.floor && self.best.as_ref().is_none_or(|b| beta < b.energy) {
            let checkpoint = match &self.backend {
                AccuracyBackend::Trainer(b) => {
                    Some(crate::report::to_hex(&checkpoint_save(&b.model)))
                }
                AccuracyBackend::Surrogate(_) => None,
            };
            self.best = Some(BestConfig {
                episode: self.episode,
                step: self.steps_taken,
                q: self.schedule.q().to_vec(),
                p: self.schedule.p().to_vec(),
                accuracy: alpha,
                energy: beta,
                checkpoint,
            });
        }

        self.alpha_prev = alpha;
        self.beta_prev = beta;
        let next_state = self.state_vector();
        self.records.push(StepRecord {
            step: self.steps_taken,
            state: state_before,
            action: action.clone(),
            reward,
            next_state: next_state.clone(),
            done: self.done,
            accuracy: alpha,
            energy: beta,
            q: self.schedule.q().to_vec(),
            p: self.schedule.p().to_vec(),
        });
        Ok((next_state, reward, self.done))
    }

    /// Builds the flattened observation from the history windows.
    pub fn state_vector(&self) -> EnvState {
        let mut v = Vec::with_capacity(self.state_dim());
        for snapshot in &self.q_hist {
            v.extend_from_slice(snapshot);
        }
        for snapshot in &self.p_hist {
            v.extend_from_slice(snapshot);
        }
        v.extend_from_slice(&self.r_hist);
        v.push(self.steps_taken as f64 / self.config.max_steps as f64);
        EnvState(v)
    }

    fn measure_accuracy(&mut self) -> Result<f64, RlError> {
        match &self.backend {
            AccuracyBackend::Trainer(backend) => {
                Ok(evaluate(&backend.model, &backend.eval_set)?)
            }
            AccuracyBackend::Surrogate(s) => {
                Ok(s.accuracy(self.schedule.q(), self.schedule.p()))
            }
        }
    }

    fn measure_energy(&self) -> Result<f64, RlError> {
        let report = network_energy(
            &self.net,
            &self.schedule.assignments(),
            self.config.dataflow,
            &self.config.constants,
        )?;
        Ok(report.total())
    }

    /// Uniform random action in bounds, for warmup and random shooting.
    pub fn random_action(&self, rng: &mut ChaCha8Rng) -> ActionVector {
        ActionVector::new(
            (0..self.action_dim())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
    }
}

/// Convenience constructor for the surrogate environment over a network.
pub fn surrogate_env(
    net: NetworkSpec,
    config: EnvConfig,
    surrogate: SurrogateAccuracy,
) -> Result<CompressionEnv, RlError> {
    CompressionEnv::new(net, config, AccuracyBackend::Surrogate(surrogate))
}
