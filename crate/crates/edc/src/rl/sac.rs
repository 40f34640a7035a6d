//! Soft actor-critic over the compression environment.
//!
//! Squashed-Gaussian policy, twin Q critics with Polyak-averaged targets,
//! uniform replay, and entropy-temperature auto-tuning. Networks are the
//! crate's own `f64` MLPs with hand-derived gradients; the actor gradient
//! (reparameterized sample through the tanh squash, plus the entropy term)
//! is checked against finite differences in the tests.
//!
//! Every piece of optimizer state serializes, so a campaign can stop at an
//! episode boundary and resume bit-exactly.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::{Adam, Mlp, MlpGrads, ScalarAdam};
use super::{ActionVector, CompressionEnv, EnvState, EpisodeSummary, RlError, SearchResult, StepRecord};

const LOG_STD_MIN: f64 = -5.0;
const LOG_STD_MAX: f64 = 2.0;
const TANH_EPS: f64 = 1e-6;

/// SAC hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SacConfig {
    pub hidden: [usize; 2],
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub updates_per_step: usize,
    pub lr: f64,
    /// Return discount inside SAC (distinct from the schedule's gamma).
    pub rl_gamma: f64,
    pub polyak: f64,
    pub init_alpha: f64,
    /// `None` defaults to `-action_dim`.
    pub target_entropy: Option<f64>,
    /// Environment steps driven by uniform actions before the policy takes
    /// over.
    pub random_steps: u64,
    /// Minimum buffered transitions before updates start.
    pub learn_start: usize,
    pub episodes: usize,
    pub seed: u64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            hidden: [64, 64],
            buffer_capacity: 10_000,
            batch_size: 64,
            updates_per_step: 1,
            lr: 3e-4,
            rl_gamma: 0.99,
            polyak: 0.005,
            init_alpha: 0.2,
            target_entropy: None,
            random_steps: 64,
            learn_start: 128,
            episodes: 20,
            seed: 0,
        }
    }
}

/// Fixed-capacity uniform replay; at capacity, pushes evict the oldest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    next: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s2: Vec<f64>,
    pub done: bool,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            data: Vec::new(),
            next: 0,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
            self.next = (self.next + 1) % self.capacity;
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }
}

/// Policy and critics plus optimizer state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SacAgent {
    state_dim: usize,
    action_dim: usize,
    layers: usize,
    tau_window: usize,
    actor: Mlp,
    critic1: Mlp,
    critic2: Mlp,
    target1: Mlp,
    target2: Mlp,
    opt_actor: Adam,
    opt_critic1: Adam,
    opt_critic2: Adam,
    log_alpha: f64,
    opt_alpha: ScalarAdam,
    target_entropy: f64,
    rl_gamma: f64,
    polyak: f64,
    batch_size: usize,
    pub updates: u64,
}

impl SacAgent {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        layers: usize,
        tau_window: usize,
        cfg: &SacConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let actor_sizes = [state_dim, cfg.hidden[0], cfg.hidden[1], 2 * action_dim];
        let critic_sizes = [state_dim + action_dim, cfg.hidden[0], cfg.hidden[1], 1];
        let actor = Mlp::new(&actor_sizes, rng);
        let critic1 = Mlp::new(&critic_sizes, rng);
        let critic2 = Mlp::new(&critic_sizes, rng);
        let target1 = critic1.clone();
        let target2 = critic2.clone();
        Self {
            state_dim,
            action_dim,
            layers,
            tau_window,
            opt_actor: Adam::new(&actor, cfg.lr),
            opt_critic1: Adam::new(&critic1, cfg.lr),
            opt_critic2: Adam::new(&critic2, cfg.lr),
            actor,
            critic1,
            critic2,
            target1,
            target2,
            log_alpha: cfg.init_alpha.ln(),
            opt_alpha: ScalarAdam::new(cfg.lr),
            target_entropy: cfg.target_entropy.unwrap_or(-(action_dim as f64)),
            rl_gamma: cfg.rl_gamma,
            polyak: cfg.polyak,
            batch_size: cfg.batch_size,
            updates: 0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// Maps raw observations into the network input range: quantization
    /// depths to `[0, 1]`, rewards clipped at 5 and scaled; the pruning
    /// amounts and step index already live in `[0, 1]`.
    fn normalize(&self, state: &[f64]) -> Vec<f64> {
        let lt = self.layers * self.tau_window;
        let mut out = Vec::with_capacity(state.len());
        for (i, &v) in state.iter().enumerate() {
            out.push(if i < lt {
                (v - 1.0) / 7.0
            } else if i < 2 * lt {
                v
            } else if i < 2 * lt + self.tau_window {
                v.min(5.0) / 5.0
            } else {
                v
            });
        }
        out
    }

    /// Stochastic action for collection.
    pub fn sample_action(&self, state: &EnvState, rng: &mut ChaCha8Rng) -> ActionVector {
        let x = self.normalize(state.as_slice());
        let eps: Vec<f64> = (0..self.action_dim).map(|_| rng.sample(StandardNormal)).collect();
        let (actions, _logp) = policy_sample(&self.actor, &x, 1, &eps);
        ActionVector::new(actions)
    }

    /// Mean action squashed through tanh, for deterministic evaluation.
    pub fn mean_action(&self, state: &EnvState) -> ActionVector {
        let x = self.normalize(state.as_slice());
        let cache = self.actor.forward(&x, 1);
        let out = self.actor.output(&cache);
        ActionVector::new((0..self.action_dim).map(|j| out[j].tanh()).collect())
    }

    /// One gradient step on critics, actor, and temperature from a uniform
    /// replay batch, followed by the Polyak target update.
    pub fn update(&mut self, buffer: &ReplayBuffer, rng: &mut ChaCha8Rng) {
        let b = self.batch_size.min(buffer.len());
        if b == 0 {
            return;
        }
        let idxs: Vec<usize> = (0..b).map(|_| rng.random_range(0..buffer.len())).collect();

        let mut s = Vec::with_capacity(b * self.state_dim);
        let mut a = Vec::with_capacity(b * self.action_dim);
        let mut r = Vec::with_capacity(b);
        let mut s2 = Vec::with_capacity(b * self.state_dim);
        let mut done = Vec::with_capacity(b);
        for &i in &idxs {
            let t = buffer.get(i);
            s.extend(self.normalize(&t.s));
            a.extend_from_slice(&t.a);
            r.push(t.r);
            s2.extend(self.normalize(&t.s2));
            done.push(t.done);
        }

        // targets: y = r + gamma * (1 - done) * (min Q_target(s', a') - alpha * log pi(a'|s'))
        let eps2: Vec<f64> = (0..b * self.action_dim).map(|_| rng.sample(StandardNormal)).collect();
        let (a2, logp2) = policy_sample(&self.actor, &s2, b, &eps2);
        let x2 = concat_sa(&s2, &a2, b, self.state_dim, self.action_dim);
        let q1t = self.target1.forward(&x2, b);
        let q2t = self.target2.forward(&x2, b);
        let alpha = self.alpha();
        let y: Vec<f64> = (0..b)
            .map(|i| {
                let qmin = self.target1.output(&q1t)[i].min(self.target2.output(&q2t)[i]);
                let boot = if done[i] { 0.0 } else { self.rl_gamma * (qmin - alpha * logp2[i]) };
                r[i] + boot
            })
            .collect();

        // critic regression
        let x = concat_sa(&s, &a, b, self.state_dim, self.action_dim);
        for (critic, opt) in [
            (&mut self.critic1, &mut self.opt_critic1),
            (&mut self.critic2, &mut self.opt_critic2),
        ] {
            let cache = critic.forward(&x, b);
            let d_out: Vec<f64> = critic
                .output(&cache)
                .iter()
                .zip(&y)
                .map(|(q, t)| 2.0 * (q - t) / b as f64)
                .collect();
            let (grads, _) = critic.backward(&cache, &d_out);
            opt.step(critic, &grads);
        }

        // actor
        let eps: Vec<f64> = (0..b * self.action_dim).map(|_| rng.sample(StandardNormal)).collect();
        let (_, grads, logp) =
            actor_loss_grads(&self.actor, &self.critic1, &self.critic2, &s, b, &eps, alpha);
        self.opt_actor.step(&mut self.actor, &grads);

        // temperature: minimize -log_alpha * mean(log pi + target_entropy)
        let mean_excess =
            logp.iter().map(|lp| lp + self.target_entropy).sum::<f64>() / b as f64;
        let d_log_alpha = -mean_excess;
        self.opt_alpha.step(&mut self.log_alpha, d_log_alpha);

        self.target1.lerp_from(&self.critic1, self.polyak);
        self.target2.lerp_from(&self.critic2, self.polyak);
        self.updates += 1;
    }
}

fn concat_sa(s: &[f64], a: &[f64], b: usize, sd: usize, ad: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(b * (sd + ad));
    for i in 0..b {
        x.extend_from_slice(&s[i * sd..(i + 1) * sd]);
        x.extend_from_slice(&a[i * ad..(i + 1) * ad]);
    }
    x
}

/// Samples squashed-Gaussian actions with fixed noise `eps` and returns the
/// per-sample log-probabilities.
fn policy_sample(actor: &Mlp, states: &[f64], batch: usize, eps: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let ad = actor.out_dim() / 2;
    let cache = actor.forward(states, batch);
    let out = actor.output(&cache);
    let mut actions = vec![0.0; batch * ad];
    let mut logp = vec![0.0; batch];
    for i in 0..batch {
        let row = &out[i * 2 * ad..(i + 1) * 2 * ad];
        let mut lp = 0.0;
        for j in 0..ad {
            let mean = row[j];
            let log_std = row[ad + j].clamp(LOG_STD_MIN, LOG_STD_MAX);
            let std = log_std.exp();
            let e = eps[i * ad + j];
            let u = mean + std * e;
            let act = u.tanh();
            actions[i * ad + j] = act;
            lp += -0.5 * e * e - log_std - 0.5 * (2.0 * std::f64::consts::PI).ln()
                - (1.0 - act * act + TANH_EPS).ln();
        }
        logp[i] = lp;
    }
    (actions, logp)
}

/// Loss, actor gradients, and per-sample log-probabilities for
/// `L = mean(alpha * log pi(a|s) - min(Q1, Q2)(s, a))` with reparameterized
/// actions `a = tanh(mean + std * eps)` and `eps` held fixed.
fn actor_loss_grads(
    actor: &Mlp,
    critic1: &Mlp,
    critic2: &Mlp,
    states: &[f64],
    batch: usize,
    eps: &[f64],
    alpha: f64,
) -> (f64, MlpGrads, Vec<f64>) {
    let ad = actor.out_dim() / 2;
    let sd = actor.in_dim();
    let cache = actor.forward(states, batch);
    let out = actor.output(&cache);

    // forward through the squash with everything kept for the chain rule
    let mut actions = vec![0.0; batch * ad];
    let mut sigma_eps = vec![0.0; batch * ad]; // du/d log_std
    let mut clamp_gate = vec![1.0; batch * ad];
    let mut logp = vec![0.0; batch];
    for i in 0..batch {
        let row = &out[i * 2 * ad..(i + 1) * 2 * ad];
        let mut lp = 0.0;
        for j in 0..ad {
            let mean = row[j];
            let raw = row[ad + j];
            let log_std = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
            if raw <= LOG_STD_MIN || raw >= LOG_STD_MAX {
                clamp_gate[i * ad + j] = 0.0;
            }
            let std = log_std.exp();
            let e = eps[i * ad + j];
            let u = mean + std * e;
            let act = u.tanh();
            actions[i * ad + j] = act;
            sigma_eps[i * ad + j] = std * e;
            lp += -0.5 * e * e - log_std - 0.5 * (2.0 * std::f64::consts::PI).ln()
                - (1.0 - act * act + TANH_EPS).ln();
        }
        logp[i] = lp;
    }

    // critic side: d(-min Q)/da, backpropagated through whichever critic is
    // the per-sample minimum
    let x = concat_sa(states, &actions, batch, sd, ad);
    let c1 = critic1.forward(&x, batch);
    let c2 = critic2.forward(&x, batch);
    let q1 = critic1.output(&c1);
    let q2 = critic2.output(&c2);
    let inv_b = 1.0 / batch as f64;
    let mut d1 = vec![0.0; batch];
    let mut d2 = vec![0.0; batch];
    let mut loss = 0.0;
    for i in 0..batch {
        loss += (alpha * logp[i] - q1[i].min(q2[i])) * inv_b;
        if q1[i] <= q2[i] {
            d1[i] = -inv_b;
        } else {
            d2[i] = -inv_b;
        }
    }
    let (_, dx1) = critic1.backward(&c1, &d1);
    let (_, dx2) = critic2.backward(&c2, &d2);

    // chain rule into the actor outputs
    let mut d_out = vec![0.0; batch * 2 * ad];
    for i in 0..batch {
        for j in 0..ad {
            let act = actions[i * ad + j];
            let one_m_a2 = 1.0 - act * act;
            let d_logp_du = 2.0 * act * one_m_a2 / (one_m_a2 + TANH_EPS);
            let d_q_da = dx1[i * (sd + ad) + sd + j] + dx2[i * (sd + ad) + sd + j];
            let d_u = alpha * inv_b * d_logp_du + d_q_da * one_m_a2;
            d_out[i * 2 * ad + j] = d_u;
            d_out[i * 2 * ad + ad + j] =
                (d_u * sigma_eps[i * ad + j] - alpha * inv_b) * clamp_gate[i * ad + j];
        }
    }
    let (grads, _) = actor.backward(&cache, &d_out);
    (loss, grads, logp)
}

/// Resumable SAC campaign state: agent, replay, RNG position, and the
/// per-episode history so far.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SacRun {
    pub agent: SacAgent,
    pub buffer: ReplayBuffer,
    pub total_steps: u64,
    pub episodes_done: usize,
    pub rng_word_pos: u128,
    pub episodes: Vec<EpisodeSummary>,
}

impl SacRun {
    pub fn new(env: &CompressionEnv, cfg: &SacConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let agent = SacAgent::new(
            env.state_dim(),
            env.action_dim(),
            env.layer_count(),
            env.tau(),
            cfg,
            &mut rng,
        );
        Self {
            agent,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            total_steps: 0,
            episodes_done: 0,
            rng_word_pos: rng.get_word_pos(),
            episodes: Vec::new(),
        }
    }

    /// Runs one episode and appends its summary.
    pub fn run_episode(&mut self, env: &mut CompressionEnv, cfg: &SacConfig) -> Result<(), RlError> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_word_pos(self.rng_word_pos);

        let ep = self.episodes_done;
        let mut state = env.reset_seeded(ep, episode_seed(cfg.seed, ep))?;
        loop {
            let action = if self.total_steps < cfg.random_steps {
                env.random_action(&mut rng)
            } else {
                self.agent.sample_action(&state, &mut rng)
            };
            let (next, reward, done) = env.step(&action)?;
            self.buffer.push(Transition {
                s: state.0.clone(),
                a: action.as_slice().to_vec(),
                r: reward,
                s2: next.0.clone(),
                done,
            });
            if self.buffer.len() >= cfg.learn_start {
                for _ in 0..cfg.updates_per_step {
                    self.agent.update(&self.buffer, &mut rng);
                }
            }
            self.total_steps += 1;
            state = next;
            if done {
                break;
            }
        }
        let records = env.take_records();
        self.episodes.push(summarize_episode(ep, records));
        self.episodes_done += 1;
        self.rng_word_pos = rng.get_word_pos();
        Ok(())
    }
}

pub(crate) fn episode_seed(base: u64, episode: usize) -> u64 {
    base ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(episode as u64 + 1)
}

pub(crate) fn summarize_episode(episode: usize, records: Vec<StepRecord>) -> EpisodeSummary {
    let steps = records.len() as u32;
    let total_reward: f64 = records.iter().map(|r| r.reward).sum();
    let (final_accuracy, final_energy) = records
        .last()
        .map(|r| (r.accuracy, r.energy))
        .unwrap_or((0.0, 0.0));
    EpisodeSummary {
        episode,
        steps,
        total_reward,
        mean_reward: if steps == 0 { 0.0 } else { total_reward / steps as f64 },
        final_accuracy,
        final_energy,
        records,
    }
}

/// Trains a SAC policy on the environment; returns the best feasible
/// configuration ever visited and the per-episode history. Deterministic
/// given the seed.
pub fn sac_train(env: &mut CompressionEnv, cfg: &SacConfig) -> Result<SearchResult, RlError> {
    let mut run = SacRun::new(env, cfg);
    while run.episodes_done < cfg.episodes {
        run.run_episode(env, cfg)?;
    }
    Ok(SearchResult {
        best: env.best().cloned(),
        episodes: run.episodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_evicts_oldest_at_capacity() {
        let mut buf = ReplayBuffer::new(3);
        let t = |v: f64| Transition {
            s: vec![v],
            a: vec![v],
            r: v,
            s2: vec![v],
            done: false,
        };
        for i in 0..5 {
            buf.push(t(i as f64));
        }
        assert_eq!(buf.len(), 3);
        let kept: Vec<f64> = (0..3).map(|i| buf.get(i).r).collect();
        // ring overwrites the oldest slots in order
        assert_eq!(kept, vec![3.0, 4.0, 2.0]);
        assert!(!kept.contains(&0.0) && !kept.contains(&1.0));
    }

    #[test]
    fn policy_logp_matches_change_of_variables() {
        // actor with zero weights and fixed biases emits a known (mean,
        // log_std) for any input; the sampled log-density must equal the
        // Gaussian density of u = mean + std*eps minus the tanh correction
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut actor = Mlp::new(&[3, 8, 4], &mut rng); // 2 action dims
        for w in &mut actor.w[1] {
            *w = 0.0;
        }
        let (mean, log_std) = ([0.3, -0.7], [-0.5, 0.25]);
        actor.b[1] = vec![mean[0], mean[1], log_std[0], log_std[1]];

        let states = vec![0.1, -0.2, 0.3];
        let eps = [1.3, -0.8];
        let (actions, logp) = policy_sample(&actor, &states, 1, &eps);
        let mut expect = 0.0;
        for j in 0..2 {
            let std = log_std[j].exp();
            let u: f64 = mean[j] + std * eps[j];
            let a = u.tanh();
            assert!((actions[j] - a).abs() < 1e-15);
            let gauss = -0.5 * ((u - mean[j]) / std).powi(2)
                - std.ln()
                - 0.5 * (2.0 * std::f64::consts::PI).ln();
            expect += gauss - (1.0 - a * a + TANH_EPS).ln();
        }
        assert!(
            (logp[0] - expect).abs() < 1e-12,
            "logp {} vs {expect}",
            logp[0]
        );
    }

    #[test]
    fn actor_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut actor = Mlp::new(&[4, 12, 6], &mut rng); // 3 action dims
        let critic1 = Mlp::new(&[7, 12, 1], &mut rng);
        let critic2 = Mlp::new(&[7, 12, 1], &mut rng);
        let batch = 5;
        let states: Vec<f64> = (0..batch * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eps: Vec<f64> = (0..batch * 3).map(|_| rng.sample(StandardNormal)).collect();
        let alpha = 0.2;

        let (_, grads, _) = actor_loss_grads(&actor, &critic1, &critic2, &states, batch, &eps, alpha);

        let h = 1e-6;
        for l in 0..actor.w.len() {
            for i in (0..actor.w[l].len()).step_by(5) {
                let orig = actor.w[l][i];
                actor.w[l][i] = orig + h;
                let (up, _, _) =
                    actor_loss_grads(&actor, &critic1, &critic2, &states, batch, &eps, alpha);
                actor.w[l][i] = orig - h;
                let (down, _, _) =
                    actor_loss_grads(&actor, &critic1, &critic2, &states, batch, &eps, alpha);
                actor.w[l][i] = orig;
                let fd = (up - down) / (2.0 * h);
                let got = grads.d_w[l][i];
                // loose enough to absorb ReLU-kink crossings in the finite
                // differences; a derivation bug shows up as O(1) error
                assert!(
                    (got - fd).abs() <= 1e-4 * fd.abs().max(1e-2),
                    "layer {l} w[{i}]: analytic {got} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn critic_update_regresses_towards_targets() {
        // a miniature smoke check that update() moves Q(s,a) towards y
        use crate::net::parse_network;
        use crate::rl::env::{AccuracyBackend, SurrogateAccuracy};
        use crate::rl::{CompressionEnv, EnvConfig};

        let net = parse_network(crate::net::lenet5_json().as_bytes()).unwrap();
        let mut env = CompressionEnv::new(
            net,
            EnvConfig::default(),
            AccuracyBackend::Surrogate(SurrogateAccuracy::default()),
        )
        .unwrap();
        let cfg = SacConfig {
            episodes: 3,
            random_steps: 16,
            learn_start: 16,
            batch_size: 16,
            ..SacConfig::default()
        };
        let result = sac_train(&mut env, &cfg).unwrap();
        assert_eq!(result.episodes.len(), 3);
        assert!(result.episodes.iter().all(|e| e.steps > 0));
    }

    #[test]
    fn sac_is_deterministic_given_seed() {
        use crate::net::parse_network;
        use crate::rl::env::{AccuracyBackend, SurrogateAccuracy};
        use crate::rl::{CompressionEnv, EnvConfig};

        let net = parse_network(crate::net::lenet5_json().as_bytes()).unwrap();
        let make_env = || {
            CompressionEnv::new(
                net.clone(),
                EnvConfig::default(),
                AccuracyBackend::Surrogate(SurrogateAccuracy::default()),
            )
            .unwrap()
        };
        let cfg = SacConfig {
            episodes: 2,
            random_steps: 8,
            learn_start: 8,
            batch_size: 8,
            seed: 31,
            ..SacConfig::default()
        };
        let r1 = sac_train(&mut make_env(), &cfg).unwrap();
        let r2 = sac_train(&mut make_env(), &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );
    }
}
