//! Random-shooting baseline and the multi-step vs single-step pruning
//! comparison.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sac::{episode_seed, summarize_episode};
use super::{CompressionEnv, EpisodeSummary, RlError, SearchResult};
use crate::compress::prune_mask;
use crate::trainer::{evaluate, train_epoch, Dataset, Model, TrainConfig, TrainError};

use rand::SeedableRng;

/// Resumable random-search state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomRun {
    pub episodes_done: usize,
    pub episodes: Vec<EpisodeSummary>,
}

impl RandomRun {
    pub fn new() -> Self {
        Self {
            episodes_done: 0,
            episodes: Vec::new(),
        }
    }

    pub fn run_episode(
        &mut self,
        env: &mut CompressionEnv,
        seed: u64,
    ) -> Result<(), RlError> {
        let ep = self.episodes_done;
        // one dedicated action stream per episode keeps resume trivial
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(seed, ep).wrapping_add(1));
        env.reset_seeded(ep, episode_seed(seed, ep))?;
        loop {
            let action = env.random_action(&mut rng);
            let (_, _, done) = env.step(&action)?;
            if done {
                break;
            }
        }
        self.episodes.push(summarize_episode(ep, env.take_records()));
        self.episodes_done += 1;
        Ok(())
    }
}

impl Default for RandomRun {
    fn default() -> Self {
        Self::new()
    }
}

/// Seeded episodes with uniform actions in bounds; same best-configuration
/// rule as SAC. Deterministic given the seed.
pub fn random_search(
    env: &mut CompressionEnv,
    budget: usize,
    seed: u64,
) -> Result<SearchResult, RlError> {
    assert!(budget >= 1, "budget must be >= 1");
    let mut run = RandomRun::new();
    while run.episodes_done < budget {
        run.run_episode(env, seed)?;
    }
    Ok(SearchResult {
        best: env.best().cloned(),
        episodes: run.episodes,
    })
}

/// Outcome of the two pruning protocols.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PruningComparison {
    pub multi_accuracy: f64,
    pub single_accuracy: f64,
    pub baseline_accuracy: f64,
    /// The per-step remaining fractions the multi-step protocol visited.
    pub schedule: Vec<f64>,
}

/// Geometric descent from 1.0 to `target` across `steps` steps:
/// `P_k = target^(k/steps)`, ending exactly at the target.
pub fn pruning_schedule(target: f64, steps: usize) -> Vec<f64> {
    assert!(target > 0.0 && target <= 1.0);
    assert!(steps >= 1);
    (1..=steps)
        .map(|k| target.powf(k as f64 / steps as f64))
        .collect()
}

fn prune_model_to(model: &mut Model<f32>, remaining: f64) {
    for layer in &mut model.layers {
        let mask = prune_mask(&layer.weights, remaining);
        for (w, &m) in layer.weights.iter_mut().zip(&mask) {
            if m == 0 {
                *w = 0.0;
            }
        }
        layer.mask = mask;
    }
}

/// Runs both protocols from the same trained baseline:
///
/// - multi-step: lower the remaining amount along [`pruning_schedule`],
///   re-training one epoch after each step (masks recomputed from the
///   current magnitudes each time);
/// - single-step: jump straight to the target, then re-train for `steps`
///   epochs.
///
/// Returns the accuracy each protocol reaches on the evaluation set. With
/// `target = 1.0` nothing is pruned and both protocols return the baseline
/// accuracy unchanged.
pub fn multistep_vs_onestep_pruning(
    baseline: &Model<f32>,
    train_set: &Dataset,
    eval_set: &Dataset,
    target: f64,
    steps: usize,
    cfg: &TrainConfig,
) -> Result<PruningComparison, TrainError> {
    let baseline_accuracy = evaluate(baseline, eval_set)?;
    let schedule = pruning_schedule(target, steps);
    if target >= 1.0 {
        return Ok(PruningComparison {
            multi_accuracy: baseline_accuracy,
            single_accuracy: baseline_accuracy,
            baseline_accuracy,
            schedule,
        });
    }

    let mut multi = baseline.clone();
    for (k, &p) in schedule.iter().enumerate() {
        prune_model_to(&mut multi, p);
        let epoch_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(k as u64),
            ..*cfg
        };
        train_epoch(&mut multi, train_set, &epoch_cfg)?;
    }
    let multi_accuracy = evaluate(&multi, eval_set)?;

    let mut single = baseline.clone();
    prune_model_to(&mut single, target);
    for k in 0..steps {
        let epoch_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(k as u64),
            ..*cfg
        };
        train_epoch(&mut single, train_set, &epoch_cfg)?;
    }
    let single_accuracy = evaluate(&single, eval_set)?;

    Ok(PruningComparison {
        multi_accuracy,
        single_accuracy,
        baseline_accuracy,
        schedule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::parse_network;
    use crate::rl::env::{AccuracyBackend, SurrogateAccuracy};
    use crate::rl::EnvConfig;

    fn surrogate() -> CompressionEnv {
        let net = parse_network(crate::net::lenet5_json().as_bytes()).unwrap();
        CompressionEnv::new(
            net,
            EnvConfig::default(),
            AccuracyBackend::Surrogate(SurrogateAccuracy::default()),
        )
        .unwrap()
    }

    #[test]
    fn budget_one_returns_single_trajectory() {
        let mut env = surrogate();
        let result = random_search(&mut env, 1, 3).unwrap();
        assert_eq!(result.episodes.len(), 1);
        assert!(result.episodes[0].steps >= 1);
    }

    #[test]
    fn identical_seeds_identical_results() {
        let a = random_search(&mut surrogate(), 4, 11).unwrap();
        let b = random_search(&mut surrogate(), 4, 11).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn best_energy_non_increasing_in_budget() {
        let small = random_search(&mut surrogate(), 3, 17).unwrap();
        let large = random_search(&mut surrogate(), 9, 17).unwrap();
        let e_small = small.best.as_ref().map(|b| b.energy).unwrap_or(f64::INFINITY);
        let e_large = large.best.as_ref().map(|b| b.energy).unwrap_or(f64::INFINITY);
        assert!(e_large <= e_small);
    }

    #[test]
    fn pruning_schedule_is_geometric_and_exact() {
        let s = pruning_schedule(0.05, 32);
        assert_eq!(s.len(), 32);
        assert!((s[31] - 0.05).abs() < 1e-12);
        // constant ratio between consecutive steps
        let ratio = s[0];
        for pair in s.windows(2) {
            assert!((pair[1] / pair[0] - ratio).abs() < 1e-9);
        }
    }

    #[test]
    fn target_one_returns_baseline_for_both() {
        let net = parse_network(
            br#"{"name":"t","input_shape":[1,8,8],"layers":[
                {"kind":"conv","c_out":4,"f":[3,3],"padding":1,"activation":"relu","pool":2},
                {"kind":"fc","c_out":2}
            ]}"#,
        )
        .unwrap();
        let model = Model::<f32>::new(net, 5).unwrap();
        let ds = crate::trainer::synthetic_dataset(7, 64, 2);
        let cfg = TrainConfig::default();
        let cmp = multistep_vs_onestep_pruning(&model, &ds, &ds, 1.0, 8, &cfg).unwrap();
        assert_eq!(cmp.multi_accuracy, cmp.baseline_accuracy);
        assert_eq!(cmp.single_accuracy, cmp.baseline_accuracy);
    }
}
