//! Fixed-horizon episodes over one program: actions apply passes, the
//! reward is the per-step cycle improvement normalized by the untransformed
//! cost, so the undiscounted return telescopes to (c0 - c_final) / c0.
//!
//! Episodes talk to a [`CostBackend`]: the builtin backend applies passes
//! with the in-crate simulator; an external process can stand in for a real
//! compiler-plus-profiler flow (see `harness::external`).

use crate::features::{histogram_state, normalize_state, FeatureVector, StateMode, StateVector};
use crate::passes::{apply_pass, apply_sequence, estimate_cycles, PassId};
use crate::tir::Program;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("episode already finished (horizon {0})")]
    EpisodeFinished(usize),
    #[error("unknown program id '{0}'")]
    UnknownProgram(String),
}

/// One cost evaluation: cycles plus the features of the transformed program.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub cycles: u64,
    pub features: FeatureVector,
}

/// Evaluates a pass sequence applied to a named program.
pub trait CostBackend {
    fn eval(&mut self, program: &str, passes: &[PassId]) -> Result<EvalResult, EnvError>;
}

/// In-process backend over a set of parsed programs. Caches the most recent
/// (program, sequence) so episode stepping extends incrementally instead of
/// re-applying whole prefixes.
pub struct BuiltinBackend {
    programs: BTreeMap<String, Program>,
    cache: Option<(String, Vec<PassId>, Program)>,
}

impl BuiltinBackend {
    pub fn new(programs: BTreeMap<String, Program>) -> BuiltinBackend {
        BuiltinBackend {
            programs,
            cache: None,
        }
    }

    pub fn single(id: &str, p: &Program) -> BuiltinBackend {
        BuiltinBackend::new(BTreeMap::from([(id.to_string(), p.clone())]))
    }

    pub fn program_ids(&self) -> Vec<String> {
        self.programs.keys().cloned().collect()
    }

    /// The transformed program itself (used by re-verification paths).
    pub fn transformed(&mut self, program: &str, passes: &[PassId]) -> Result<Program, EnvError> {
        let base = self
            .programs
            .get(program)
            .ok_or_else(|| EnvError::UnknownProgram(program.to_string()))?;
        match &self.cache {
            Some((id, seq, prog)) if id == program && passes.starts_with(seq) => {
                let rest = &passes[seq.len()..];
                let mut cur = prog.clone();
                for &a in rest {
                    cur = apply_pass(a, &cur);
                }
                self.cache = Some((program.to_string(), passes.to_vec(), cur.clone()));
                Ok(cur)
            }
            _ => {
                let cur = apply_sequence(passes, base);
                self.cache = Some((program.to_string(), passes.to_vec(), cur.clone()));
                Ok(cur)
            }
        }
    }
}

impl CostBackend for BuiltinBackend {
    fn eval(&mut self, program: &str, passes: &[PassId]) -> Result<EvalResult, EnvError> {
        let p = self.transformed(program, passes)?;
        Ok(EvalResult {
            cycles: estimate_cycles(&p).0,
            features: crate::features::extract_features(&p),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Per-step shaped reward (c_prev - c_new) / c0.
    PerStep,
    /// Zero until the last step, which pays (c0 - c_final) / c0.
    FinalOnly,
}

impl Default for RewardMode {
    fn default() -> Self {
        RewardMode::PerStep
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeConfig {
    /// Horizon L; canonical values 3, 12, 24.
    pub length: usize,
    pub state_mode: StateMode,
    pub reward_mode: RewardMode,
}

impl EpisodeConfig {
    pub fn new(length: usize) -> EpisodeConfig {
        assert!(length >= 1);
        EpisodeConfig {
            length,
            state_mode: StateMode::default(),
            reward_mode: RewardMode::default(),
        }
    }
}

/// A running episode. Deterministic given (program, actions, backend).
#[derive(Debug, Clone)]
pub struct Episode {
    pub program: String,
    pub config: EpisodeConfig,
    pub applied: Vec<PassId>,
    pub c0: u64,
    pub c_prev: u64,
    pub step_index: usize,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: StateVector,
    pub reward: f64,
    pub done: bool,
    pub cycles: u64,
}

impl Episode {
    /// Start an episode: evaluates the untransformed program for c0 and the
    /// initial state.
    pub fn reset(
        program: &str,
        cfg: EpisodeConfig,
        backend: &mut dyn CostBackend,
    ) -> Result<(Episode, StateVector), EnvError> {
        let r = backend.eval(program, &[])?;
        let ep = Episode {
            program: program.to_string(),
            config: cfg,
            applied: Vec::new(),
            c0: r.cycles,
            c_prev: r.cycles,
            step_index: 0,
        };
        let state = ep.state_vector(&r.features);
        Ok((ep, state))
    }

    fn state_vector(&self, features: &FeatureVector) -> StateVector {
        normalize_state(
            features,
            &histogram_state(&self.applied),
            self.config.length - self.step_index,
            self.config.length,
            self.config.state_mode,
        )
    }

    pub fn done(&self) -> bool {
        self.step_index >= self.config.length
    }

    /// Apply one pass. Errors if the episode already hit its horizon.
    pub fn step(
        &mut self,
        action: PassId,
        backend: &mut dyn CostBackend,
    ) -> Result<StepOutcome, EnvError> {
        if self.done() {
            return Err(EnvError::EpisodeFinished(self.config.length));
        }
        self.applied.push(action);
        self.step_index += 1;
        let r = backend.eval(&self.program, &self.applied)?;
        let done = self.done();
        let reward = match self.config.reward_mode {
            RewardMode::PerStep => (self.c_prev as i64 - r.cycles as i64) as f64 / self.c0 as f64,
            RewardMode::FinalOnly => {
                if done {
                    (self.c0 as i64 - r.cycles as i64) as f64 / self.c0 as f64
                } else {
                    0.0
                }
            }
        };
        self.c_prev = r.cycles;
        Ok(StepOutcome {
            state: self.state_vector(&r.features),
            reward,
            done,
            cycles: r.cycles,
        })
    }
}

/// speedup vs No-Opt = c0 / c_final = 1 / (1 - return).
pub fn speedup_vs_noopt(c0: u64, c_final: u64) -> f64 {
    c0 as f64 / c_final as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::STATE_DIM;
    use crate::tir::{fixtures, parse_text};

    fn backend_over_fixtures() -> BuiltinBackend {
        let mut m = BTreeMap::new();
        m.insert("ret5".to_string(), parse_text(fixtures::P1).unwrap());
        m.insert("fold".to_string(), parse_text(fixtures::P2).unwrap());
        m.insert("loop".to_string(), parse_text(fixtures::P3).unwrap());
        BuiltinBackend::new(m)
    }

    #[test]
    fn reset_reports_baseline_cost() {
        let mut be = backend_over_fixtures();
        let (ep, s) = Episode::reset("fold", EpisodeConfig::new(3), &mut be).unwrap();
        assert_eq!(ep.c0, 5);
        assert_eq!(s.len(), STATE_DIM);
        // histogram empty, steps fraction 1.0
        assert!(s[crate::features::FEATURE_COUNT..STATE_DIM - 1]
            .iter()
            .all(|&x| x == 0.0));
        assert_eq!(s[STATE_DIM - 1], 1.0);

        let (ep1, _) = Episode::reset("ret5", EpisodeConfig::new(3), &mut be).unwrap();
        assert_eq!(ep1.c0, 1);
    }

    #[test]
    fn reset_is_deterministic() {
        let mut be = backend_over_fixtures();
        let (_, s1) = Episode::reset("loop", EpisodeConfig::new(3), &mut be).unwrap();
        let (_, s2) = Episode::reset("loop", EpisodeConfig::new(3), &mut be).unwrap();
        assert_eq!(s1, s2);
    }

    // Oracle: cost formula. constfold takes fold from 5 cycles to 1.
    #[test]
    fn constfold_step_reward() {
        let mut be = backend_over_fixtures();
        let (mut ep, _) = Episode::reset("fold", EpisodeConfig::new(3), &mut be).unwrap();
        let out = ep
            .step(PassId::from_name("constfold").unwrap(), &mut be)
            .unwrap();
        assert!((out.reward - 0.8).abs() < 1e-12);
        assert!(!out.done);
    }

    #[test]
    fn noop_pass_rewards_exactly_zero() {
        let mut be = backend_over_fixtures();
        let (mut ep, _) = Episode::reset("ret5", EpisodeConfig::new(3), &mut be).unwrap();
        let out = ep.step(PassId::from_name("dce").unwrap(), &mut be).unwrap();
        assert_eq!(out.reward, 0.0);
    }

    #[test]
    fn horizon_rule_and_finished_error() {
        let mut be = backend_over_fixtures();
        let (mut ep, _) = Episode::reset("loop", EpisodeConfig::new(3), &mut be).unwrap();
        let a = PassId::new(0).unwrap();
        for want_done in [false, false, true] {
            let out = ep.step(a, &mut be).unwrap();
            assert_eq!(out.done, want_done);
        }
        assert!(matches!(
            ep.step(a, &mut be),
            Err(EnvError::EpisodeFinished(3))
        ));
    }

    #[test]
    fn telescoping_return() {
        let mut be = backend_over_fixtures();
        let seqs: Vec<Vec<usize>> = vec![
            vec![1, 2, 5],
            vec![5, 1, 2],
            vec![6, 6, 0],
            vec![11, 7, 9],
            vec![4, 10, 3],
        ];
        for seq in seqs {
            let (mut ep, _) = Episode::reset("loop", EpisodeConfig::new(3), &mut be).unwrap();
            let mut total = 0.0;
            let mut last_cycles = ep.c0;
            for a in &seq {
                let out = ep.step(PassId::new(*a).unwrap(), &mut be).unwrap();
                total += out.reward;
                last_cycles = out.cycles;
            }
            let expect = (ep.c0 as i64 - last_cycles as i64) as f64 / ep.c0 as f64;
            assert!(
                (total - expect).abs() < 1e-9,
                "telescoping failed for {seq:?}: {total} vs {expect}"
            );
            assert!(
                (speedup_vs_noopt(ep.c0, last_cycles) - 1.0 / (1.0 - total)).abs() < 1e-9
                    || total >= 1.0
            );
        }
    }

    #[test]
    fn final_only_reward_mode() {
        let mut be = backend_over_fixtures();
        let mut cfg = EpisodeConfig::new(2);
        cfg.reward_mode = RewardMode::FinalOnly;
        let (mut ep, _) = Episode::reset("fold", cfg, &mut be).unwrap();
        let first = ep.step(PassId::from_name("constfold").unwrap(), &mut be).unwrap();
        assert_eq!(first.reward, 0.0);
        let last = ep.step(PassId::from_name("dce").unwrap(), &mut be).unwrap();
        assert!((last.reward - 0.8).abs() < 1e-12);
    }

    #[test]
    fn incremental_cache_matches_fresh_eval() {
        let mut be = backend_over_fixtures();
        let seq: Vec<PassId> = [5usize, 1, 2].iter().map(|&i| PassId::new(i).unwrap()).collect();
        let (mut ep, _) = Episode::reset("loop", EpisodeConfig::new(3), &mut be).unwrap();
        let mut stepped = 0;
        for &a in &seq {
            stepped = ep.step(a, &mut be).unwrap().cycles;
        }
        let mut fresh = backend_over_fixtures();
        assert_eq!(fresh.eval("loop", &seq).unwrap().cycles, stepped);
    }
}
