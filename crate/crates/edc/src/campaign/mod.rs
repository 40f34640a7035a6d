//! End-to-end compression campaigns.
//!
//! A campaign is described by a JSON [`CampaignConfig`]: which network,
//! which dataset (or the trainer-free surrogate), which dataflow(s), which
//! optimizer, and the unit-cost constants (given directly or calibrated to
//! a data-movement share). The runner builds the environment, drives the
//! chosen optimizer episode by episode, checkpoints its full state at every
//! episode boundary for resumption, and emits the history CSV, the best
//! configuration JSON, the best-model checkpoint, and an SVG chart.

mod compare;
mod validate;

pub use compare::{run_compare, CompareReport, CompareRow};
pub use validate::{compare_counts, run_estimate, run_oracle_validate, EstimateOutput, OracleRow};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{calibrate_energy_constants, CostConstants, CostError, DataflowKind};
use crate::net::{parse_network, NetError, NetworkSpec};
use crate::report::atomic_write;
use crate::rl::{
    random_search, sac_train, AccuracyBackend, Ablate, BestConfig, CompressionEnv, EnvConfig,
    RlError, SacConfig, SearchResult, SurrogateAccuracy, TrainerBackend,
};
use crate::trainer::{
    load_idx, synthetic_dataset, synthetic_digits, train, Dataset, Model, TrainConfig, TrainError,
};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad campaign config: {0}")]
    BadConfig(String),
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Rl(#[from] RlError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Where the training/evaluation data comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    /// 8x8 blob fixture.
    Synthetic {
        #[serde(default = "default_data_seed")]
        seed: u64,
        #[serde(default = "default_synth_train")]
        train: usize,
        #[serde(default = "default_synth_test")]
        test: usize,
        #[serde(default = "default_classes")]
        classes: usize,
    },
    /// 28x28 rendered digit set (MNIST stand-in).
    Digits {
        #[serde(default = "default_data_seed")]
        seed: u64,
        #[serde(default = "default_digits_train")]
        train: usize,
        #[serde(default = "default_digits_test")]
        test: usize,
    },
    /// Real IDX files from a directory with the standard MNIST names.
    Mnist {
        dir: PathBuf,
        #[serde(default = "default_digits_train")]
        train_limit: usize,
        #[serde(default = "default_digits_test")]
        test_limit: usize,
    },
}

fn default_data_seed() -> u64 {
    7
}
fn default_synth_train() -> usize {
    512
}
fn default_synth_test() -> usize {
    256
}
fn default_classes() -> usize {
    10
}
fn default_digits_train() -> usize {
    10_000
}
fn default_digits_test() -> usize {
    2_000
}

impl DatasetSource {
    /// Loads `(train, eval)` splits.
    pub fn load(&self) -> Result<(Dataset, Dataset), CampaignError> {
        match self {
            DatasetSource::Synthetic {
                seed,
                train,
                test,
                classes,
            } => {
                let train_set = synthetic_dataset(*seed, *train, *classes);
                let eval_set = synthetic_dataset(seed.wrapping_add(1), *test, *classes);
                Ok((train_set, eval_set))
            }
            DatasetSource::Digits { seed, train, test } => Ok((
                synthetic_digits(*seed, *train),
                synthetic_digits(seed.wrapping_add(1), *test),
            )),
            DatasetSource::Mnist {
                dir,
                train_limit,
                test_limit,
            } => {
                let train_set = load_idx(
                    dir.join("train-images-idx3-ubyte"),
                    dir.join("train-labels-idx1-ubyte"),
                )?;
                let eval_set = load_idx(
                    dir.join("t10k-images-idx3-ubyte"),
                    dir.join("t10k-labels-idx1-ubyte"),
                )?;
                Ok((train_set.take(*train_limit), eval_set.take(*test_limit)))
            }
        }
    }
}

/// Maps the CLI's `--dataset {mnist|synthetic}` onto a source, picking the
/// synthetic generator that matches the network's input shape.
pub fn dataset_for_cli(name: &str, net: &NetworkSpec) -> Result<DatasetSource, CampaignError> {
    match name {
        "mnist" => {
            let dir = std::env::var("EDC_MNIST_DIR").unwrap_or_else(|_| "data/mnist".into());
            Ok(DatasetSource::Mnist {
                dir: PathBuf::from(dir),
                train_limit: default_digits_train(),
                test_limit: default_digits_test(),
            })
        }
        "synthetic" => match net.input_shape {
            (1, 28, 28) => Ok(DatasetSource::Digits {
                seed: default_data_seed(),
                train: default_digits_train(),
                test: default_digits_test(),
            }),
            (1, 8, 8) => Ok(DatasetSource::Synthetic {
                seed: default_data_seed(),
                train: default_synth_train(),
                test: default_synth_test(),
                classes: default_classes(),
            }),
            other => Err(CampaignError::BadConfig(format!(
                "no synthetic generator for input shape {other:?}"
            ))),
        },
        other => Err(CampaignError::BadConfig(format!(
            "unknown dataset {other:?} (expected mnist or synthetic)"
        ))),
    }
}

/// Accuracy backend selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Real fine-tuning on a dataset.
    #[default]
    Train,
    /// Trainer-free synthetic accuracy for fast optimizer runs.
    Surrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sac,
    Random,
}

/// Unit constants: given directly or calibrated so the uncompressed
/// network's data-movement share hits a target.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstantsSource {
    Calibrate { calibrate: f64 },
    Explicit(CostConstants),
}

impl Default for ConstantsSource {
    fn default() -> Self {
        ConstantsSource::Explicit(CostConstants::default())
    }
}

/// Tunable environment fields exposed in the config file; the rest of
/// [`EnvConfig`] is filled from the campaign.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvOverrides {
    pub gamma: f64,
    pub lambda: f64,
    pub tau: usize,
    pub max_steps: u32,
    pub accuracy_floor: Option<f64>,
    pub finetune_epochs: usize,
    pub skip_finetune_steps: u32,
}

impl Default for EnvOverrides {
    fn default() -> Self {
        let d = EnvConfig::default();
        Self {
            gamma: d.gamma,
            lambda: d.lambda,
            tau: d.tau,
            max_steps: d.max_steps,
            accuracy_floor: d.accuracy_floor,
            finetune_epochs: d.finetune_epochs,
            skip_finetune_steps: d.skip_finetune_steps,
        }
    }
}

/// Full campaign description; the unit the CLI and tests drive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignConfig {
    /// Path to a network description, or the bundled names `lenet5` /
    /// `vgg_small`.
    pub network: String,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_dataset")]
    pub dataset: DatasetSource,
    /// `xy`, `fxfy`, `xfx`, `cico`, or `all`.
    #[serde(default = "default_dataflow")]
    pub dataflow: String,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub env: EnvOverrides,
    #[serde(default)]
    pub constants: ConstantsSource,
    #[serde(default)]
    pub sac: SacOverrides,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub surrogate: SurrogateAccuracy,
    /// Epochs of baseline pre-training before the first episode.
    #[serde(default = "default_baseline_epochs")]
    pub baseline_epochs: usize,
    #[serde(default)]
    pub ablate: Ablate,
}

fn default_dataset() -> DatasetSource {
    DatasetSource::Synthetic {
        seed: default_data_seed(),
        train: default_synth_train(),
        test: default_synth_test(),
        classes: default_classes(),
    }
}
fn default_dataflow() -> String {
    "xy".into()
}
fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Sac
}
fn default_episodes() -> usize {
    20
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_baseline_epochs() -> usize {
    3
}

/// SAC fields exposed in the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SacOverrides {
    pub hidden: [usize; 2],
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub updates_per_step: usize,
    pub lr: f64,
    pub rl_gamma: f64,
    pub polyak: f64,
    pub init_alpha: f64,
    pub random_steps: u64,
    pub learn_start: usize,
}

impl Default for SacOverrides {
    fn default() -> Self {
        let d = SacConfig::default();
        Self {
            hidden: d.hidden,
            buffer_capacity: d.buffer_capacity,
            batch_size: d.batch_size,
            updates_per_step: d.updates_per_step,
            lr: d.lr,
            rl_gamma: d.rl_gamma,
            polyak: d.polyak,
            init_alpha: d.init_alpha,
            random_steps: d.random_steps,
            learn_start: d.learn_start,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOverrides {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for TrainOverrides {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            learning_rate: d.learning_rate,
            momentum: d.momentum,
            batch_size: d.batch_size,
        }
    }
}

impl CampaignConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self, CampaignError> {
        Ok(serde_json::from_slice(bytes)?)
    }

    /// Loads the network description, resolving the bundled names.
    pub fn load_network(&self) -> Result<NetworkSpec, CampaignError> {
        load_network_arg(&self.network)
    }

    /// The dataflows this campaign covers.
    pub fn dataflows(&self) -> Result<Vec<DataflowKind>, CampaignError> {
        parse_dataflow_selector(&self.dataflow)
    }

    pub fn resolve_constants(&self, net: &NetworkSpec, dataflow: DataflowKind) -> Result<CostConstants, CampaignError> {
        match self.constants {
            ConstantsSource::Explicit(k) => Ok(k),
            ConstantsSource::Calibrate { calibrate } => {
                Ok(calibrate_energy_constants(net, dataflow, calibrate)?)
            }
        }
    }

    fn sac_config(&self) -> SacConfig {
        SacConfig {
            hidden: self.sac.hidden,
            buffer_capacity: self.sac.buffer_capacity,
            batch_size: self.sac.batch_size,
            updates_per_step: self.sac.updates_per_step,
            lr: self.sac.lr,
            rl_gamma: self.sac.rl_gamma,
            polyak: self.sac.polyak,
            init_alpha: self.sac.init_alpha,
            target_entropy: None,
            random_steps: self.sac.random_steps,
            learn_start: self.sac.learn_start,
            episodes: self.episodes,
            seed: self.seed,
        }
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            momentum: self.train.momentum,
            batch_size: self.train.batch_size,
            epochs: 1,
            seed: self.seed,
        }
    }

    fn env_config(&self, dataflow: DataflowKind, constants: CostConstants) -> EnvConfig {
        EnvConfig {
            dataflow,
            gamma: self.env.gamma,
            lambda: self.env.lambda,
            tau: self.env.tau,
            max_steps: self.env.max_steps,
            accuracy_floor: self.env.accuracy_floor,
            finetune_epochs: self.env.finetune_epochs,
            skip_finetune_steps: self.env.skip_finetune_steps,
            seed: self.seed,
            constants,
            ablate: self.ablate,
            ..EnvConfig::default()
        }
    }

    /// Identity of everything that affects results; resuming requires it to
    /// match, while `episodes` and `out_dir` may change.
    fn fingerprint(&self) -> String {
        let mut probe = self.clone();
        probe.episodes = 0;
        probe.out_dir = PathBuf::new();
        serde_json::to_string(&probe).expect("config serializes")
    }
}

/// Resolves a `--network` argument: bundled name or file path.
pub fn load_network_arg(arg: &str) -> Result<NetworkSpec, CampaignError> {
    let bytes = match arg {
        "lenet5" => crate::net::lenet5_json().as_bytes().to_vec(),
        "vgg_small" => crate::net::vgg_small_json().as_bytes().to_vec(),
        path => std::fs::read(Path::new(path)).map_err(io_err(Path::new(path)))?,
    };
    Ok(parse_network(&bytes)?)
}

/// Parses `xy|fxfy|xfx|cico|all` into a dataflow list.
pub fn parse_dataflow_selector(s: &str) -> Result<Vec<DataflowKind>, CampaignError> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(DataflowKind::ALL.to_vec());
    }
    DataflowKind::parse(s)
        .map(|d| vec![d])
        .ok_or_else(|| CampaignError::BadConfig(format!("unknown dataflow {s:?}")))
}

/// Builds the environment for one dataflow of a campaign, including
/// baseline pre-training in trainer mode.
pub fn build_env(cfg: &CampaignConfig, dataflow: DataflowKind) -> Result<CompressionEnv, CampaignError> {
    let net = cfg.load_network()?;
    let constants = cfg.resolve_constants(&net, dataflow)?;
    let env_config = cfg.env_config(dataflow, constants);
    let backend = match cfg.mode {
        Mode::Surrogate => AccuracyBackend::Surrogate(cfg.surrogate),
        Mode::Train => {
            let (train_set, eval_set) = cfg.dataset.load()?;
            if (train_set.images.dims()[1], train_set.images.dims()[2], train_set.images.dims()[3])
                != net.input_shape
            {
                return Err(CampaignError::BadConfig(format!(
                    "dataset shape {:?} does not match network input {:?}",
                    &train_set.images.dims()[1..],
                    net.input_shape
                )));
            }
            let mut model = Model::<f32>::new(net.clone(), cfg.seed)?;
            if cfg.baseline_epochs > 0 {
                let pretrain = TrainConfig {
                    epochs: cfg.baseline_epochs,
                    ..cfg.train_config()
                };
                train(&mut model, &train_set, &pretrain)?;
            }
            AccuracyBackend::Trainer(Box::new(TrainerBackend::new(
                model,
                train_set,
                eval_set,
                cfg.train_config(),
            )))
        }
    };
    Ok(CompressionEnv::new(net, env_config, backend)?)
}

/// Serialized between episodes so interrupted campaigns resume exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignState {
    pub fingerprint: String,
    pub optimizer: OptimizerKind,
    pub sac: Option<crate::rl::SacRun>,
    pub random: Option<crate::rl::RandomRun>,
    pub best: Option<BestConfig>,
}

/// Outcome of one compression campaign.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressOutcome {
    pub dataflow: DataflowKind,
    pub baseline_accuracy: f64,
    pub baseline_energy: f64,
    pub accuracy_floor: f64,
    pub result: SearchResult,
    /// Energy reduction factor of the best feasible configuration.
    pub energy_reduction: Option<f64>,
    pub feasible: bool,
}

/// Summary written to `best.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestSummary {
    pub dataflow: DataflowKind,
    pub feasible: bool,
    pub baseline_accuracy: f64,
    pub baseline_energy: f64,
    pub accuracy_floor: f64,
    pub best: Option<BestJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestJson {
    pub episode: usize,
    pub step: u32,
    pub q: Vec<f64>,
    pub effective_bits: Vec<u32>,
    pub p: Vec<f64>,
    pub accuracy: f64,
    pub energy: f64,
    pub energy_reduction: f64,
}

/// Runs (or resumes) one campaign for one dataflow, writing artifacts into
/// `out_dir`: `history.csv`, `best.json`, `campaign.svg`,
/// `campaign_state.json`, and `best_model.ckpt` in trainer mode.
pub fn run_compress(
    cfg: &CampaignConfig,
    dataflow: DataflowKind,
    out_dir: &Path,
) -> Result<CompressOutcome, CampaignError> {
    let mut env = build_env(cfg, dataflow)?;
    let sac_cfg = cfg.sac_config();
    let state_path = out_dir.join("campaign_state.json");
    let fingerprint = cfg.fingerprint();

    let mut state = match std::fs::read(&state_path) {
        Ok(bytes) => {
            let saved: CampaignState = serde_json::from_slice(&bytes)?;
            if saved.fingerprint == fingerprint && saved.optimizer == cfg.optimizer {
                env.set_best(saved.best.clone());
                saved
            } else {
                fresh_state(cfg, &env, &sac_cfg, &fingerprint)
            }
        }
        Err(_) => fresh_state(cfg, &env, &sac_cfg, &fingerprint),
    };

    loop {
        let done = match cfg.optimizer {
            OptimizerKind::Sac => {
                let run = state.sac.as_mut().expect("sac state present");
                if run.episodes_done >= cfg.episodes {
                    true
                } else {
                    run.run_episode(&mut env, &sac_cfg)?;
                    false
                }
            }
            OptimizerKind::Random => {
                let run = state.random.as_mut().expect("random state present");
                if run.episodes_done >= cfg.episodes {
                    true
                } else {
                    run.run_episode(&mut env, cfg.seed)?;
                    false
                }
            }
        };
        state.best = env.best().cloned();
        atomic_write(&state_path, serde_json::to_string(&state)?.as_bytes())
            .map_err(io_err(&state_path))?;
        if done {
            break;
        }
    }

    let episodes = match cfg.optimizer {
        OptimizerKind::Sac => state.sac.as_ref().unwrap().episodes.clone(),
        OptimizerKind::Random => state.random.as_ref().unwrap().episodes.clone(),
    };
    let result = SearchResult {
        best: state.best.clone(),
        episodes,
    };

    let (baseline_accuracy, baseline_energy) = env.baseline();
    let energy_reduction = result.best.as_ref().map(|b| baseline_energy / b.energy);
    let outcome = CompressOutcome {
        dataflow,
        baseline_accuracy,
        baseline_energy,
        accuracy_floor: env.accuracy_floor(),
        feasible: result.best.is_some(),
        energy_reduction,
        result,
    };
    write_compress_artifacts(&outcome, out_dir)?;
    Ok(outcome)
}

fn fresh_state(
    cfg: &CampaignConfig,
    env: &CompressionEnv,
    sac_cfg: &SacConfig,
    fingerprint: &str,
) -> CampaignState {
    CampaignState {
        fingerprint: fingerprint.to_string(),
        optimizer: cfg.optimizer,
        sac: match cfg.optimizer {
            OptimizerKind::Sac => Some(crate::rl::SacRun::new(env, sac_cfg)),
            OptimizerKind::Random => None,
        },
        random: match cfg.optimizer {
            OptimizerKind::Random => Some(crate::rl::RandomRun::new()),
            OptimizerKind::Sac => None,
        },
        best: None,
    }
}

fn write_compress_artifacts(outcome: &CompressOutcome, out_dir: &Path) -> Result<(), CampaignError> {
    let history = crate::report::history_csv(&outcome.result.episodes);
    let history_path = out_dir.join("history.csv");
    atomic_write(&history_path, history.as_bytes()).map_err(io_err(&history_path))?;

    let best = outcome.result.best.as_ref();
    let summary = BestSummary {
        dataflow: outcome.dataflow,
        feasible: outcome.feasible,
        baseline_accuracy: outcome.baseline_accuracy,
        baseline_energy: outcome.baseline_energy,
        accuracy_floor: outcome.accuracy_floor,
        best: best.map(|b| BestJson {
            episode: b.episode,
            step: b.step,
            q: b.q.clone(),
            effective_bits: b.q.iter().map(|&q| crate::compress::effective_bits(q)).collect(),
            p: b.p.clone(),
            accuracy: b.accuracy,
            energy: b.energy,
            energy_reduction: outcome.baseline_energy / b.energy,
        }),
    };
    let best_path = out_dir.join("best.json");
    atomic_write(&best_path, serde_json::to_string_pretty(&summary)?.as_bytes())
        .map_err(io_err(&best_path))?;

    if let Some(bytes) = best.and_then(|b| b.checkpoint_bytes()) {
        let ckpt_path = out_dir.join("best_model.ckpt");
        atomic_write(&ckpt_path, &bytes).map_err(io_err(&ckpt_path))?;
    }

    let svg = crate::report::campaign_svg(&outcome.result.episodes, outcome.baseline_energy);
    let svg_path = out_dir.join("campaign.svg");
    atomic_write(&svg_path, svg.as_bytes()).map_err(io_err(&svg_path))?;
    Ok(())
}

/// Convenience wrapper: run every dataflow the config selects, each into
/// its own subdirectory when there is more than one.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<Vec<CompressOutcome>, CampaignError> {
    let dataflows = cfg.dataflows()?;
    let mut outcomes = Vec::new();
    for df in &dataflows {
        let out_dir = if dataflows.len() == 1 {
            cfg.out_dir.clone()
        } else {
            cfg.out_dir.join(df.name())
        };
        outcomes.push(run_compress(cfg, *df, &out_dir)?);
    }
    Ok(outcomes)
}

/// Runs the configured optimizer without touching the filesystem; used by
/// tests and `cmd_compare`'s ablation columns.
pub fn run_search_in_memory(
    cfg: &CampaignConfig,
    dataflow: DataflowKind,
) -> Result<CompressOutcome, CampaignError> {
    let mut env = build_env(cfg, dataflow)?;
    let result = match cfg.optimizer {
        OptimizerKind::Sac => sac_train(&mut env, &cfg.sac_config())?,
        OptimizerKind::Random => random_search(&mut env, cfg.episodes, cfg.seed)?,
    };
    let (baseline_accuracy, baseline_energy) = env.baseline();
    Ok(CompressOutcome {
        dataflow,
        baseline_accuracy,
        baseline_energy,
        accuracy_floor: env.accuracy_floor(),
        feasible: result.best.is_some(),
        energy_reduction: result.best.as_ref().map(|b| baseline_energy / b.energy),
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surrogate_config(out: &Path) -> CampaignConfig {
        CampaignConfig {
            network: "lenet5".into(),
            mode: Mode::Surrogate,
            dataset: default_dataset(),
            dataflow: "xy".into(),
            optimizer: OptimizerKind::Random,
            episodes: 3,
            seed: 5,
            out_dir: out.to_path_buf(),
            env: EnvOverrides::default(),
            constants: ConstantsSource::default(),
            sac: SacOverrides::default(),
            train: TrainOverrides::default(),
            surrogate: SurrogateAccuracy::default(),
            baseline_epochs: 0,
            ablate: Ablate::None,
        }
    }

    #[test]
    fn config_parses_with_defaults() {
        let cfg = CampaignConfig::from_json(br#"{"network": "lenet5"}"#).unwrap();
        assert_eq!(cfg.episodes, 20);
        assert!(matches!(cfg.mode, Mode::Train));
        assert!(matches!(cfg.optimizer, OptimizerKind::Sac));
        assert_eq!(cfg.env.max_steps, 32);
        assert_eq!(cfg.env.gamma, 0.9);
        assert_eq!(cfg.env.lambda, 3.0);
    }

    #[test]
    fn constants_source_accepts_both_forms() {
        let cfg = CampaignConfig::from_json(
            br#"{"network": "lenet5", "constants": {"calibrate": 0.72}}"#,
        )
        .unwrap();
        assert!(matches!(
            cfg.constants,
            ConstantsSource::Calibrate { calibrate } if calibrate == 0.72
        ));
        let cfg = CampaignConfig::from_json(
            br#"{"network": "lenet5", "constants": {
                "e_adder": 1.0, "e_bit": 2.0, "e_reg": 0.0, "a_bits": 10,
                "lut_area_unit": 1.0, "ram_area_per_bit": 1.0}}"#,
        )
        .unwrap();
        assert!(matches!(
            cfg.constants,
            ConstantsSource::Explicit(k) if k.e_bit == 2.0
        ));
    }

    #[test]
    fn compress_emits_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = surrogate_config(dir.path());
        let outcome = run_compress(&cfg, DataflowKind::Xy, dir.path()).unwrap();
        assert_eq!(outcome.result.episodes.len(), 3);
        for name in ["history.csv", "best.json", "campaign.svg", "campaign_state.json"] {
            assert!(dir.path().join(name).exists(), "{name} missing");
        }
        let history = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
        assert!(history.starts_with("episode,step,layer,Q,P,alpha,beta,reward\n"));
    }

    #[test]
    fn same_seed_gives_identical_history() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let c1 = surrogate_config(d1.path());
        let c2 = surrogate_config(d2.path());
        run_compress(&c1, DataflowKind::Xy, d1.path()).unwrap();
        run_compress(&c2, DataflowKind::Xy, d2.path()).unwrap();
        let h1 = std::fs::read(d1.path().join("history.csv")).unwrap();
        let h2 = std::fs::read(d2.path().join("history.csv")).unwrap();
        assert_eq!(h1, h2);
    }

    #[test]
    fn interrupted_campaign_resumes_to_identical_summary() {
        // straight run of 6 episodes
        let full_dir = tempfile::tempdir().unwrap();
        let mut full_cfg = surrogate_config(full_dir.path());
        full_cfg.optimizer = OptimizerKind::Sac;
        full_cfg.episodes = 6;
        run_compress(&full_cfg, DataflowKind::Xy, full_dir.path()).unwrap();

        // interrupted after 2 episodes, then resumed to 6
        let resume_dir = tempfile::tempdir().unwrap();
        let mut part_cfg = surrogate_config(resume_dir.path());
        part_cfg.optimizer = OptimizerKind::Sac;
        part_cfg.episodes = 2;
        run_compress(&part_cfg, DataflowKind::Xy, resume_dir.path()).unwrap();
        part_cfg.episodes = 6;
        run_compress(&part_cfg, DataflowKind::Xy, resume_dir.path()).unwrap();

        let full = std::fs::read(full_dir.path().join("history.csv")).unwrap();
        let resumed = std::fs::read(resume_dir.path().join("history.csv")).unwrap();
        assert_eq!(full, resumed);
        let full_best = std::fs::read(full_dir.path().join("best.json")).unwrap();
        let resumed_best = std::fs::read(resume_dir.path().join("best.json")).unwrap();
        assert_eq!(full_best, resumed_best);
    }

    #[test]
    fn changed_config_restarts_instead_of_resuming() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = surrogate_config(dir.path());
        run_compress(&cfg, DataflowKind::Xy, dir.path()).unwrap();
        cfg.seed = 99;
        let outcome = run_compress(&cfg, DataflowKind::Xy, dir.path()).unwrap();
        assert_eq!(outcome.result.episodes.len(), 3);
        assert_eq!(outcome.result.episodes[0].episode, 0);
    }
}
