//! Experiment orchestration: run one algorithm over the corpus for each
//! seed, self-verify every reported sequence by re-evaluation, and persist
//! deterministic CSV rows plus a JSON summary.

use super::{Corpus, HarnessError};
use crate::agents::{dqn, pg, Agent, CheckpointMeta};
use crate::env::{CostBackend, EnvError, EpisodeConfig, EvalResult};
use crate::features::StateMode;
use crate::passes::{sequence_from_string, sequence_to_string, PassId};
use crate::search::{self, GaConfig, SearchResult};
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    BruteForce,
    Random,
    Greedy,
    Genetic,
    O3,
    Dqn,
    Pg,
}

impl Algorithm {
    /// Canonical order for reports.
    pub const ALL: [Algorithm; 7] = [
        Algorithm::BruteForce,
        Algorithm::Random,
        Algorithm::Greedy,
        Algorithm::Genetic,
        Algorithm::O3,
        Algorithm::Dqn,
        Algorithm::Pg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::BruteForce => "bruteforce",
            Algorithm::Random => "random",
            Algorithm::Greedy => "greedy",
            Algorithm::Genetic => "genetic",
            Algorithm::O3 => "o3",
            Algorithm::Dqn => "dqn",
            Algorithm::Pg => "pg",
        }
    }

    pub fn from_name(s: &str) -> Option<Algorithm> {
        Algorithm::ALL.iter().copied().find(|a| a.name() == s)
    }

    /// Searches are seed-free for greedy/bruteforce/o3.
    pub fn uses_seed(self) -> bool {
        matches!(
            self,
            Algorithm::Random | Algorithm::Genetic | Algorithm::Dqn | Algorithm::Pg
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub length: usize,
    pub seeds: Vec<u64>,
    pub state_mode: StateMode,
    pub random_budget: u64,
    pub ga: GaConfig,
    pub dqn: dqn::DqnHyper,
    pub pg: pg::PgHyper,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algorithm: Algorithm::O3,
            length: 3,
            seeds: vec![0],
            state_mode: StateMode::default(),
            random_budget: 5000,
            ga: GaConfig::default(),
            dqn: dqn::DqnHyper::default(),
            pg: pg::PgHyper::default(),
        }
    }
}

/// Overridable knobs loaded from `--config cfg.json`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfigOverrides {
    pub random_budget: Option<u64>,
    pub ga: Option<GaConfig>,
    pub dqn: Option<dqn::DqnHyper>,
    pub pg: Option<pg::PgHyper>,
}

impl ExperimentConfig {
    pub fn apply_overrides(&mut self, ov: ConfigOverrides) {
        if let Some(b) = ov.random_budget {
            self.random_budget = b;
        }
        if let Some(ga) = ov.ga {
            self.ga = ga;
        }
        if let Some(dqn) = ov.dqn {
            self.dqn = dqn;
        }
        if let Some(pg) = ov.pg {
            self.pg = pg;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub benchmark: String,
    pub algorithm: String,
    pub length: usize,
    pub seed: u64,
    pub best_sequence: Vec<PassId>,
    pub cycles_noopt: u64,
    pub cycles_best: u64,
    pub cycles_o3: u64,
    pub speedup_vs_noopt: f64,
    pub speedup_vs_o3: f64,
    pub evaluations_used: u64,
    pub wall_ms: u64,
}

pub const CSV_HEADER: [&str; 12] = [
    "benchmark",
    "algorithm",
    "L",
    "seed",
    "best_sequence",
    "cycles_noopt",
    "cycles_best",
    "cycles_o3",
    "speedup_vs_noopt",
    "speedup_vs_o3",
    "evaluations_used",
    "wall_ms",
];

/// Fixed formatting for reals: six significant digits.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0.00000".to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    let dec = (5 - mag).max(0) as usize;
    format!("{x:.dec$}")
}

impl ResultRow {
    fn record(&self) -> Vec<String> {
        vec![
            self.benchmark.clone(),
            self.algorithm.clone(),
            self.length.to_string(),
            self.seed.to_string(),
            sequence_to_string(&self.best_sequence),
            self.cycles_noopt.to_string(),
            self.cycles_best.to_string(),
            self.cycles_o3.to_string(),
            fmt_sig6(self.speedup_vs_noopt),
            fmt_sig6(self.speedup_vs_o3),
            self.evaluations_used.to_string(),
            self.wall_ms.to_string(),
        ]
    }
}

pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("header writes");
    for row in rows {
        w.write_record(row.record()).expect("row writes");
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("csv is utf-8")
}

/// Counts backend evaluations, for honest accounting in reports.
struct CountingBackend<'a> {
    inner: &'a mut dyn CostBackend,
    count: u64,
}

impl<'a> CostBackend for CountingBackend<'a> {
    fn eval(&mut self, program: &str, passes: &[PassId]) -> Result<EvalResult, EnvError> {
        self.count += 1;
        self.inner.eval(program, passes)
    }
}

pub struct ExperimentOutcome {
    pub rows: Vec<ResultRow>,
    /// Set when the run aborted; rows hold everything finished before that.
    pub error: Option<HarnessError>,
}

fn finish_row(
    backend: &mut dyn CostBackend,
    benchmark: &str,
    algorithm: Algorithm,
    length: usize,
    seed: u64,
    result: SearchResult,
) -> Result<ResultRow, HarnessError> {
    // self-verification: the reported cycles must reproduce
    let re = backend.eval(benchmark, &result.best_sequence)?.cycles;
    if re != result.best_cycles {
        return Err(HarnessError::Other(format!(
            "self-verification failed on {benchmark}: reported {} vs re-evaluated {re}",
            result.best_cycles
        )));
    }
    let noopt = backend.eval(benchmark, &[])?.cycles;
    let o3_cycles = backend
        .eval(benchmark, &search::o3_sequence(length))?
        .cycles;
    Ok(ResultRow {
        benchmark: benchmark.to_string(),
        algorithm: algorithm.name().to_string(),
        length,
        seed,
        best_sequence: result.best_sequence,
        cycles_noopt: noopt,
        cycles_best: result.best_cycles,
        cycles_o3: o3_cycles,
        speedup_vs_noopt: noopt as f64 / result.best_cycles as f64,
        speedup_vs_o3: o3_cycles as f64 / result.best_cycles as f64,
        evaluations_used: result.evaluations_used,
        wall_ms: result.wall_time.as_millis() as u64,
    })
}

/// Run the configured algorithm over every (benchmark, seed) pair. RL
/// algorithms train once per seed across the whole corpus; their
/// evaluations and wall time are amortized per benchmark.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    backend: &mut dyn CostBackend,
) -> ExperimentOutcome {
    let mut rows: Vec<ResultRow> = Vec::new();
    let seeds: Vec<u64> = if cfg.algorithm.uses_seed() {
        cfg.seeds.clone()
    } else {
        vec![cfg.seeds.first().copied().unwrap_or(0)]
    };

    let result: Result<(), HarnessError> = (|| {
        match cfg.algorithm {
            Algorithm::Dqn | Algorithm::Pg => {
                let ids = corpus.ids();
                let ep_cfg = EpisodeConfig {
                    length: cfg.length,
                    state_mode: cfg.state_mode,
                    reward_mode: Default::default(),
                };
                for &seed in &seeds {
                    let mut counting = CountingBackend {
                        inner: backend,
                        count: 0,
                    };
                    let start = Instant::now();
                    let log = match cfg.algorithm {
                        Algorithm::Dqn => {
                            dqn::train(&mut counting, &ids, ep_cfg, &cfg.dqn, seed)?.1
                        }
                        _ => pg::train(&mut counting, &ids, ep_cfg, &cfg.pg, seed)?.1,
                    };
                    let wall = start.elapsed().as_millis() as u64;
                    let evals = counting.count;
                    let n = corpus.len() as u64;
                    for id in &ids {
                        let best = log.best.get(id).ok_or_else(|| {
                            HarnessError::Other(format!("no training data for {id}"))
                        })?;
                        let sr = SearchResult {
                            best_sequence: best.sequence.clone(),
                            best_cycles: best.cycles,
                            evaluations_used: (evals / n).max(1),
                            wall_time: std::time::Duration::from_millis(wall / n),
                        };
                        rows.push(finish_row(
                            backend,
                            id,
                            cfg.algorithm,
                            cfg.length,
                            seed,
                            sr,
                        )?);
                    }
                }
            }
            _ => {
                for entry in &corpus.entries {
                    for &seed in &seeds {
                        let mut counting = CountingBackend {
                            inner: backend,
                            count: 0,
                        };
                        let sr = match cfg.algorithm {
                            Algorithm::BruteForce => {
                                search::brute_force(&mut counting, &entry.id, cfg.length)?
                            }
                            Algorithm::Random => search::random_search(
                                &mut counting,
                                &entry.id,
                                cfg.length,
                                cfg.random_budget,
                                seed,
                            )?,
                            Algorithm::Greedy => {
                                search::greedy_search(&mut counting, &entry.id, cfg.length)?
                            }
                            Algorithm::Genetic => search::genetic_search(
                                &mut counting,
                                &entry.id,
                                cfg.length,
                                &cfg.ga,
                                seed,
                            )?,
                            Algorithm::O3 => {
                                let start = Instant::now();
                                let seq = search::o3_sequence(cfg.length);
                                let cycles = counting.eval(&entry.id, &seq)?.cycles;
                                SearchResult {
                                    best_sequence: seq,
                                    best_cycles: cycles,
                                    evaluations_used: 1,
                                    wall_time: start.elapsed(),
                                }
                            }
                            _ => unreachable!("RL handled above"),
                        };
                        rows.push(finish_row(
                            backend,
                            &entry.id,
                            cfg.algorithm,
                            cfg.length,
                            seed,
                            sr,
                        )?);
                    }
                }
            }
        }
        Ok(())
    })();

    rows.sort_by(|a, b| (&a.benchmark, a.seed).cmp(&(&b.benchmark, b.seed)));
    ExperimentOutcome {
        rows,
        error: result.err(),
    }
}

/// JSON report: config echo plus per-algorithm geometric means.
pub fn json_report(cfg: &ExperimentConfig, rows: &[ResultRow]) -> String {
    let geo_noopt = geomean(rows.iter().map(|r| r.speedup_vs_noopt));
    let geo_o3 = geomean(rows.iter().map(|r| r.speedup_vs_o3));
    let report = serde_json::json!({
        "algorithm": cfg.algorithm.name(),
        "length": cfg.length,
        "seeds": cfg.seeds,
        "rows": rows.len(),
        "geomean_speedup_vs_noopt": geo_noopt,
        "geomean_speedup_vs_o3": geo_o3,
        "total_evaluations": rows.iter().map(|r| r.evaluations_used).sum::<u64>(),
        "total_wall_ms": rows.iter().map(|r| r.wall_ms).sum::<u64>(),
    });
    serde_json::to_string_pretty(&report).expect("report serializes")
}

pub fn geomean(xs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for x in xs {
        sum += x.ln();
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        (sum / n as f64).exp()
    }
}

/// A result row plus whether the program was outside the training corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub row: ResultRow,
    pub transfer: bool,
}

pub fn eval_rows_to_csv(rows: &[EvalRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = CSV_HEADER.to_vec();
    header.push("transfer");
    w.write_record(header).expect("header writes");
    for r in rows {
        let mut rec = r.row.record();
        rec.push(r.transfer.to_string());
        w.write_record(rec).expect("row writes");
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("csv is utf-8")
}

/// Greedy rollouts of a loaded agent over a corpus (possibly disjoint from
/// the one it was trained on); rows for unseen programs carry
/// `transfer=true`.
pub fn evaluate_agent(
    agent: &Agent,
    meta: &CheckpointMeta,
    corpus: &Corpus,
    length: usize,
    backend: &mut dyn CostBackend,
) -> Result<Vec<EvalRow>, HarnessError> {
    let ep_cfg = EpisodeConfig {
        length,
        state_mode: meta
            .state_mode
            .parse()
            .map_err(|e: String| HarnessError::Other(e))?,
        reward_mode: Default::default(),
    };
    let mut out = Vec::with_capacity(corpus.len());
    for entry in &corpus.entries {
        let start = Instant::now();
        let mut counting = CountingBackend {
            inner: backend,
            count: 0,
        };
        let (seq, cycles) = agent.greedy_rollout(&mut counting, &entry.id, ep_cfg)?;
        let evals = counting.count;
        let sr = SearchResult {
            best_sequence: seq,
            best_cycles: cycles,
            evaluations_used: evals,
            wall_time: start.elapsed(),
        };
        let algo = match agent {
            Agent::Dqn(_) => Algorithm::Dqn,
            Agent::Pg(_) => Algorithm::Pg,
        };
        let row = finish_row(backend, &entry.id, algo, length, meta.seed, sr)?;
        out.push(EvalRow {
            row,
            transfer: !meta.programs.contains(&entry.id),
        });
    }
    Ok(out)
}

/// Parse a sequence string from a CSV field.
pub fn parse_sequence_field(s: &str) -> Result<Vec<PassId>, HarnessError> {
    sequence_from_string(s).map_err(HarnessError::Other)
}
