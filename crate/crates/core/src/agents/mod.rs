//! Learning agents: a from-scratch dense network with Adam, experience
//! replay, the two training algorithms (DQN and REINFORCE), and versioned
//! JSON checkpoints that make trained policies portable across runs.

pub mod dqn;
pub mod net;
pub mod pg;
pub mod replay;

pub use dqn::{DqnAgent, DqnHyper};
pub use net::{grad_check, softmax, Adam, DenseNet, LossSpec, NetError};
pub use pg::{PgAgent, PgHyper};
pub use replay::{ReplayBuffer, Transition};

use crate::env::{CostBackend, EnvError, Episode, EpisodeConfig};
use crate::passes::PassId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("cannot read checkpoint: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint format version {found} unsupported (expected {CHECKPOINT_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("checkpoint holds a {found} agent, expected {expected}")]
    AlgorithmMismatch { expected: String, found: String },
}

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub program: String,
    pub ret: f64,
    pub epsilon: f64,
    pub loss_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestEntry {
    pub cycles: u64,
    pub sequence: Vec<PassId>,
}

/// Per-episode records plus the best cycle count (and the pass prefix that
/// reached it) seen for each program during training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeRecord>,
    pub best: BTreeMap<String, BestEntry>,
}

impl TrainingLog {
    pub fn observe_best(&mut self, program: &str, cycles: u64, sequence: &[PassId]) {
        let entry = self.best.entry(program.to_string()).or_insert(BestEntry {
            cycles: u64::MAX,
            sequence: Vec::new(),
        });
        if cycles < entry.cycles {
            entry.cycles = cycles;
            entry.sequence = sequence.to_vec();
        }
    }

    /// Byte-deterministic JSON-lines: one record per episode, then one
    /// `best` line per program in id order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.episodes {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        for (program, best) in &self.best {
            let line = serde_json::json!({
                "best": { "program": program, "cycles": best.cycles, "passes": best.sequence }
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub episodes: usize,
    pub seed: u64,
    pub length: usize,
    pub state_mode: String,
    pub programs: Vec<String>,
}

/// Versioned on-disk form: flat parameters in row-major layer order
/// (per layer: weights then biases).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub format_version: u32,
    pub algorithm: String,
    pub layer_dims: Vec<usize>,
    pub params: Vec<f64>,
    pub meta: CheckpointMeta,
}

/// A trained policy of either flavor.
#[derive(Debug, Clone)]
pub enum Agent {
    Dqn(DqnAgent),
    Pg(PgAgent),
}

impl Agent {
    pub fn algorithm(&self) -> &'static str {
        match self {
            Agent::Dqn(_) => "dqn",
            Agent::Pg(_) => "pg",
        }
    }

    pub fn net(&self) -> &DenseNet {
        match self {
            Agent::Dqn(a) => &a.net,
            Agent::Pg(a) => &a.net,
        }
    }

    /// Greedy action: argmax Q for DQN, argmax probability for PG (equal by
    /// monotonicity of softmax, but kept separate to honor each contract).
    pub fn greedy_action(&self, state: &[f64]) -> PassId {
        match self {
            Agent::Dqn(a) => a.greedy_action(state),
            Agent::Pg(a) => a.greedy_action(state),
        }
    }

    /// Roll one greedy episode; returns the sequence and final cycle count.
    pub fn greedy_rollout(
        &self,
        backend: &mut dyn CostBackend,
        program: &str,
        cfg: EpisodeConfig,
    ) -> Result<(Vec<PassId>, u64), AgentError> {
        let (mut ep, mut state) = Episode::reset(program, cfg, backend)?;
        let mut cycles = ep.c0;
        while !ep.done() {
            let a = self.greedy_action(&state);
            let out = ep.step(a, backend)?;
            state = out.state;
            cycles = out.cycles;
        }
        Ok((ep.applied, cycles))
    }

    pub fn to_checkpoint(&self, meta: CheckpointMeta) -> AgentCheckpoint {
        AgentCheckpoint {
            format_version: CHECKPOINT_VERSION,
            algorithm: self.algorithm().to_string(),
            layer_dims: self.net().layer_dims().to_vec(),
            params: self.net().params().to_vec(),
            meta,
        }
    }

    pub fn from_checkpoint(ck: &AgentCheckpoint) -> Result<Agent, AgentError> {
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(AgentError::VersionMismatch {
                found: ck.format_version,
            });
        }
        if ck.params.iter().any(|p| !p.is_finite()) {
            return Err(AgentError::Malformed("non-finite parameter".into()));
        }
        let net = DenseNet::from_flat(&ck.layer_dims, ck.params.clone())?;
        match ck.algorithm.as_str() {
            "dqn" => Ok(Agent::Dqn(DqnAgent { net })),
            "pg" => Ok(Agent::Pg(PgAgent { net })),
            other => Err(AgentError::Malformed(format!("unknown algorithm '{other}'"))),
        }
    }
}

pub fn save_agent(agent: &Agent, meta: CheckpointMeta, path: &Path) -> Result<(), AgentError> {
    let ck = agent.to_checkpoint(meta);
    let json = serde_json::to_string_pretty(&ck).expect("checkpoint serializes");
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<AgentCheckpoint, AgentError> {
    let text = std::fs::read_to_string(path)?;
    let ck: AgentCheckpoint =
        serde_json::from_str(&text).map_err(|e| AgentError::Malformed(e.to_string()))?;
    if ck.format_version != CHECKPOINT_VERSION {
        return Err(AgentError::VersionMismatch {
            found: ck.format_version,
        });
    }
    Ok(ck)
}

pub fn load_agent(path: &Path) -> Result<(Agent, AgentCheckpoint), AgentError> {
    let ck = load_checkpoint(path)?;
    let agent = Agent::from_checkpoint(&ck)?;
    Ok((agent, ck))
}

/// Load a checkpoint that must contain the given algorithm.
pub fn load_agent_expecting(path: &Path, algorithm: &str) -> Result<Agent, AgentError> {
    let (agent, ck) = load_agent(path)?;
    if ck.algorithm != algorithm {
        return Err(AgentError::AlgorithmMismatch {
            expected: algorithm.to_string(),
            found: ck.algorithm,
        });
    }
    Ok(agent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::BuiltinBackend;
    use crate::features::StateMode;
    use crate::tir::{fixtures, parse_text};

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            episodes: 10,
            seed: 0,
            length: 3,
            state_mode: StateMode::Both.name().to_string(),
            programs: vec!["loop".to_string()],
        }
    }

    fn loop_backend() -> BuiltinBackend {
        BuiltinBackend::single("loop", &parse_text(fixtures::P3).unwrap())
    }

    #[test]
    fn roundtrip_reproduces_greedy_rollout_on_p3() {
        let mut be = loop_backend();
        let hy = DqnHyper {
            episodes: 30,
            ..DqnHyper::default()
        };
        let cfg = EpisodeConfig::new(3);
        let (trained, _) = dqn::train(&mut be, &["loop".to_string()], cfg, &hy, 1).unwrap();
        let agent = Agent::Dqn(trained);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.json");
        save_agent(&agent, meta(), &path).unwrap();
        let (loaded, ck) = load_agent(&path).unwrap();
        assert_eq!(ck.algorithm, "dqn");

        let (seq_a, c_a) = agent.greedy_rollout(&mut be, "loop", cfg).unwrap();
        let (seq_b, c_b) = loaded.greedy_rollout(&mut be, "loop", cfg).unwrap();
        assert_eq!(seq_a, seq_b);
        assert_eq!(c_a, c_b);
    }

    #[test]
    fn truncated_file_is_a_clean_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.json");
        let agent = Agent::Pg(PgAgent {
            net: DenseNet::seeded(&[crate::features::STATE_DIM, 8, crate::passes::PASS_COUNT], 0),
        });
        save_agent(&agent, meta(), &path).unwrap();
        let full = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &full[..full.len() / 2]).unwrap();
        assert!(matches!(load_agent(&path), Err(AgentError::Malformed(_))));
    }

    #[test]
    fn algorithm_tag_mismatch_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.json");
        let agent = Agent::Dqn(DqnAgent {
            net: DenseNet::seeded(&[crate::features::STATE_DIM, 8, crate::passes::PASS_COUNT], 0),
        });
        save_agent(&agent, meta(), &path).unwrap();
        assert!(matches!(
            load_agent_expecting(&path, "pg"),
            Err(AgentError::AlgorithmMismatch { .. })
        ));
        assert!(load_agent_expecting(&path, "dqn").is_ok());
    }

    #[test]
    fn version_mismatch_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.json");
        let agent = Agent::Dqn(DqnAgent {
            net: DenseNet::seeded(&[crate::features::STATE_DIM, 8, crate::passes::PASS_COUNT], 0),
        });
        let mut ck = agent.to_checkpoint(meta());
        ck.format_version = 99;
        std::fs::write(&path, serde_json::to_string(&ck).unwrap()).unwrap();
        assert!(matches!(
            load_agent(&path),
            Err(AgentError::VersionMismatch { found: 99 })
        ));
    }

    #[test]
    fn dimension_mismatch_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.json");
        let agent = Agent::Dqn(DqnAgent {
            net: DenseNet::seeded(&[crate::features::STATE_DIM, 8, crate::passes::PASS_COUNT], 0),
        });
        let mut ck = agent.to_checkpoint(meta());
        ck.params.pop();
        std::fs::write(&path, serde_json::to_string(&ck).unwrap()).unwrap();
        assert!(load_agent(&path).is_err());
    }

    #[test]
    fn checkpoint_parameters_roundtrip_bit_exact() {
        let net = DenseNet::seeded(&[5, 7, 3], 123);
        let agent = Agent::Pg(PgAgent { net: net.clone() });
        let ck = agent.to_checkpoint(meta());
        let json = serde_json::to_string(&ck).unwrap();
        let back: AgentCheckpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(back.params, net.params());
    }
}
