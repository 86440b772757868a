//! Deep Q-Network: epsilon-greedy exploration over the 12 passes, uniform
//! replay, a periodically synced target network, and squared error on the
//! one-step Bellman target.

use super::net::{train_step, Adam, DenseNet, LossSpec};
use super::replay::{ReplayBuffer, Transition};
use super::{AgentError, EpisodeRecord, TrainingLog};
use crate::env::{CostBackend, Episode, EpisodeConfig};
use crate::features::STATE_DIM;
use crate::passes::{PassId, PASS_COUNT};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DqnHyper {
    pub episodes: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub gamma: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub target_sync: u64,
    pub learn_start: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of total environment steps over which epsilon anneals.
    pub anneal_fraction: f64,
}

impl Default for DqnHyper {
    fn default() -> Self {
        DqnHyper {
            episodes: 2000,
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            gamma: 0.9,
            replay_capacity: 10_000,
            batch_size: 32,
            target_sync: 500,
            learn_start: 200,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            anneal_fraction: 0.7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub net: DenseNet,
}

impl DqnAgent {
    pub fn greedy_action(&self, state: &[f64]) -> PassId {
        select_action(&self.net, state, 0.0, &mut ChaCha8Rng::seed_from_u64(0))
    }
}

/// Epsilon-greedy: uniform with probability epsilon, otherwise the argmax
/// Q-value with ties going to the lowest pass id.
pub fn select_action(
    net: &DenseNet,
    state: &[f64],
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> PassId {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    if epsilon > 0.0 && rng.gen_bool(epsilon) {
        return PassId::new(rng.gen_range(0..PASS_COUNT)).unwrap();
    }
    let q = net.forward(state);
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    PassId::new(best).unwrap()
}

fn epsilon_at(step: u64, total_steps: u64, hy: &DqnHyper) -> f64 {
    let anneal = (total_steps as f64 * hy.anneal_fraction).max(1.0);
    if (step as f64) >= anneal {
        hy.epsilon_end
    } else {
        hy.epsilon_start + (hy.epsilon_end - hy.epsilon_start) * step as f64 / anneal
    }
}

/// Train over the corpus, cycling programs round-robin, one episode each.
/// Deterministic given (corpus, config, hyper, seed).
pub fn train(
    backend: &mut dyn CostBackend,
    programs: &[String],
    cfg: EpisodeConfig,
    hy: &DqnHyper,
    seed: u64,
) -> Result<(DqnAgent, TrainingLog), AgentError> {
    if programs.is_empty() {
        return Err(AgentError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = vec![STATE_DIM];
    dims.extend_from_slice(&hy.hidden);
    dims.push(PASS_COUNT);
    let mut net = DenseNet::new(&dims, &mut rng);
    let mut target = net.clone();
    let mut opt = Adam::new(net.params().len(), hy.learning_rate);
    let mut replay = ReplayBuffer::new(hy.replay_capacity);
    let mut log = TrainingLog::default();

    let total_steps = (hy.episodes * cfg.length) as u64;
    let mut env_steps: u64 = 0;
    let mut grad_steps: u64 = 0;

    for episode in 0..hy.episodes {
        let program = &programs[episode % programs.len()];
        let (mut ep, mut state) = Episode::reset(program, cfg, backend)?;
        let episode_epsilon = epsilon_at(env_steps, total_steps, hy);
        let mut ret = 0.0;
        let mut losses: Vec<f64> = Vec::new();

        while !ep.done() {
            let eps = epsilon_at(env_steps, total_steps, hy);
            let action = select_action(&net, &state, eps, &mut rng);
            let out = ep.step(action, backend)?;
            replay.push(Transition {
                state: std::mem::take(&mut state),
                action: action.index(),
                reward: out.reward,
                next_state: out.state.clone(),
                done: out.done,
            });
            state = out.state;
            ret += out.reward;
            env_steps += 1;

            log.observe_best(program, out.cycles, &ep.applied);

            if replay.len() >= hy.learn_start {
                let idx = replay.sample_indices(&mut rng, hy.batch_size);
                let mut inputs = Vec::with_capacity(idx.len());
                let mut targets = Vec::with_capacity(idx.len());
                for &i in &idx {
                    let t = replay.get(i);
                    let mut y = t.reward;
                    if !t.done {
                        let q_next = target.forward(&t.next_state);
                        let max_q = q_next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        y += hy.gamma * max_q;
                    }
                    inputs.push(t.state.clone());
                    targets.push((t.action, y));
                }
                let loss = train_step(&mut net, &mut opt, &inputs, &LossSpec::QTargets(&targets))?;
                losses.push(loss);
                grad_steps += 1;
                if grad_steps % hy.target_sync == 0 {
                    target = net.clone();
                }
            }
        }

        let loss_mean = if losses.is_empty() {
            0.0
        } else {
            losses.iter().sum::<f64>() / losses.len() as f64
        };
        log.episodes.push(EpisodeRecord {
            episode,
            program: program.clone(),
            ret,
            epsilon: episode_epsilon,
            loss_mean,
        });
    }

    Ok((DqnAgent { net }, log))
}

/// Degenerate one-step environment for tests: exactly one action improves
/// cycles (2 -> 1, reward 0.5); everything else is neutral.
#[cfg(test)]
pub(crate) struct BanditBackend {
    pub magic: usize,
}

#[cfg(test)]
impl CostBackend for BanditBackend {
    fn eval(
        &mut self,
        _program: &str,
        passes: &[PassId],
    ) -> Result<crate::env::EvalResult, crate::env::EnvError> {
        let cycles = if passes.iter().any(|p| p.index() == self.magic) {
            1
        } else {
            2
        };
        Ok(crate::env::EvalResult {
            cycles,
            features: crate::features::FeatureVector([0; crate::features::FEATURE_COUNT]),
        })
    }
}
