//! phase-forge command line: feature extraction, cycle estimation,
//! interpretation, sequence search, agent training/evaluation, and result
//! comparison.
//!
//! Exit codes: 0 success, 1 usage error, 2 input/parse error, 3 backend
//! failure.

use clap::{Parser, Subcommand};
use phase_forge::agents::{self, CheckpointMeta};
use phase_forge::env::CostBackend;
use phase_forge::features::{extract_features, StateMode};
use phase_forge::harness::{
    self, evaluate_agent, experiment, load_corpus, Algorithm, ExperimentConfig, ExternalBackend,
};
use phase_forge::passes::{apply_sequence, estimate_cycles, sequence_from_string, PASS_COUNT};
use phase_forge::tir::{interpret, parse_text, validate, Outcome};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "phase-forge",
    about = "Pass-ordering playground: a toy SSA compiler, cycle model, search baselines, and RL agents",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the 56 static features of a program as a JSON array.
    Features { file: PathBuf },
    /// Estimate the cycle count, optionally after a pass sequence.
    Cycles {
        file: PathBuf,
        /// Comma-separated pass ids, e.g. 4,1,8
        #[arg(long, default_value = "")]
        passes: String,
    },
    /// Run a program in the reference interpreter.
    Interpret {
        file: PathBuf,
        /// Comma-separated integer arguments.
        #[arg(long, default_value = "")]
        args: String,
        #[arg(long, default_value_t = 1_000_000)]
        fuel: u64,
    },
    /// Search for a good pass sequence over a benchmark corpus.
    Search {
        #[arg(long)]
        algo: String,
        #[arg(long)]
        length: usize,
        #[arg(long)]
        corpus: PathBuf,
        /// Comma-separated seeds (one row per benchmark per seed).
        #[arg(long, default_value = "0")]
        seed: String,
        /// Random-search sample budget.
        #[arg(long)]
        budget: Option<u64>,
        /// JSON file overriding algorithm hyperparameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "both")]
        state_mode: String,
        /// Training episodes for the RL algorithms.
        #[arg(long)]
        episodes: Option<usize>,
        /// Also write a JSON summary.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Train a DQN or policy-gradient agent and save a checkpoint.
    Train {
        #[arg(long)]
        algo: String,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        length: usize,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        save: PathBuf,
        #[arg(long, default_value = "both")]
        state_mode: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Greedy-rollout a saved agent over a corpus.
    Evaluate {
        #[arg(long)]
        agent: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        length: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize one or more result CSVs into a comparison table.
    Compare {
        files: Vec<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Scripted external-backend stand-in for protocol tests.
    #[command(hide = true)]
    MockBackend {
        #[arg(long, default_value = "fixed")]
        mode: String,
        #[arg(long, default_value_t = 42)]
        cycles: u64,
    },
}

enum CliError {
    Usage(String),
    Input(String),
    Backend(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Backend(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::Backend(m) => m,
        }
    }
}

impl From<harness::HarnessError> for CliError {
    fn from(e: harness::HarnessError) -> Self {
        match e {
            harness::HarnessError::Backend(m) => CliError::Backend(m),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<agents::AgentError> for CliError {
    fn from(e: agents::AgentError) -> Self {
        match e {
            agents::AgentError::Env(env) => CliError::Backend(env.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn load_program(path: &Path) -> Result<phase_forge::tir::Program, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let program =
        parse_text(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let violations = validate(&program);
    if !violations.is_empty() {
        return Err(CliError::Input(format!(
            "{}: invalid program: {}",
            path.display(),
            violations[0]
        )));
    }
    Ok(program)
}

fn parse_int_list(s: &str) -> Result<Vec<i64>, CliError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("invalid integer '{p}'")))
        })
        .collect()
}

fn parse_seed_list(s: &str) -> Result<Vec<u64>, CliError> {
    let ints = parse_int_list(s)?;
    if ints.is_empty() {
        return Err(CliError::Usage("at least one seed required".into()));
    }
    ints.iter()
        .map(|&i| {
            u64::try_from(i).map_err(|_| CliError::Usage("seeds must be non-negative".into()))
        })
        .collect()
}

/// Builtin backend over the corpus, or the external process selected by
/// PHASEFORGE_BACKEND.
fn select_backend(corpus: &harness::Corpus) -> Result<Box<dyn CostBackend>, CliError> {
    match ExternalBackend::from_env() {
        Some(Ok(b)) => Ok(Box::new(b)),
        Some(Err(e)) => Err(CliError::Backend(e.to_string())),
        None => Ok(Box::new(corpus.builtin_backend())),
    }
}

fn load_overrides(path: &Option<PathBuf>) -> Result<experiment::ConfigOverrides, CliError> {
    match path {
        None => Ok(Default::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Cmd::Features { file } => {
            let p = load_program(&file)?;
            let values: Vec<u64> = extract_features(&p).0.to_vec();
            println!("{}", serde_json::to_string(&values).unwrap());
            Ok(())
        }
        Cmd::Cycles { file, passes } => {
            let p = load_program(&file)?;
            let seq = sequence_from_string(&passes).map_err(CliError::Usage)?;
            println!("{}", estimate_cycles(&apply_sequence(&seq, &p)).0);
            Ok(())
        }
        Cmd::Interpret { file, args, fuel } => {
            let p = load_program(&file)?;
            let args = parse_int_list(&args)?;
            if args.len() != p.main().params.len() {
                return Err(CliError::Usage(format!(
                    "program takes {} arguments, got {}",
                    p.main().params.len(),
                    args.len()
                )));
            }
            let r = interpret(&p, &args, fuel);
            match r.outcome {
                Outcome::Return(v) => println!("ret {v} (steps {})", r.steps_used),
                Outcome::Trap(k) => println!("trap {} (steps {})", k.name(), r.steps_used),
            }
            Ok(())
        }
        Cmd::Search {
            algo,
            length,
            corpus,
            seed,
            budget,
            config,
            out,
            state_mode,
            episodes,
            json,
        } => {
            let algorithm = Algorithm::from_name(&algo)
                .ok_or_else(|| CliError::Usage(format!("unknown algorithm '{algo}'")))?;
            let corpus = load_corpus(&corpus)?;
            let mut cfg = ExperimentConfig {
                algorithm,
                length,
                seeds: parse_seed_list(&seed)?,
                state_mode: state_mode.parse::<StateMode>().map_err(CliError::Usage)?,
                ..ExperimentConfig::default()
            };
            cfg.apply_overrides(load_overrides(&config)?);
            if let Some(b) = budget {
                cfg.random_budget = b;
            }
            if let Some(n) = episodes {
                cfg.dqn.episodes = n;
                cfg.pg.episodes = n;
            }
            let mut backend = select_backend(&corpus)?;
            let outcome = experiment::run_experiment(&cfg, &corpus, backend.as_mut());
            let csv = experiment::rows_to_csv(&outcome.rows);
            if let Some(err) = outcome.error {
                let partial = PathBuf::from(format!("{}.partial", out.display()));
                write_file(&partial, &csv)?;
                eprintln!("partial results preserved in {}", partial.display());
                return Err(err.into());
            }
            write_file(&out, &csv)?;
            if let Some(json_path) = json {
                write_file(&json_path, &experiment::json_report(&cfg, &outcome.rows))?;
            }
            println!(
                "{} rows written to {} ({} benchmarks)",
                outcome.rows.len(),
                out.display(),
                corpus.len()
            );
            Ok(())
        }
        Cmd::Train {
            algo,
            corpus,
            length,
            episodes,
            seed,
            save,
            state_mode,
            config,
        } => {
            let corpus = load_corpus(&corpus)?;
            let mode: StateMode = state_mode.parse().map_err(CliError::Usage)?;
            let mut cfg = ExperimentConfig::default();
            cfg.apply_overrides(load_overrides(&config)?);
            if let Some(n) = episodes {
                cfg.dqn.episodes = n;
                cfg.pg.episodes = n;
            }
            let ep_cfg = phase_forge::env::EpisodeConfig {
                length,
                state_mode: mode,
                reward_mode: Default::default(),
            };
            let mut backend = select_backend(&corpus)?;
            let ids = corpus.ids();
            let (agent, log, episodes_run) = match algo.as_str() {
                "dqn" => {
                    let (a, log) =
                        agents::dqn::train(backend.as_mut(), &ids, ep_cfg, &cfg.dqn, seed)?;
                    (agents::Agent::Dqn(a), log, cfg.dqn.episodes)
                }
                "pg" => {
                    let (a, log) = agents::pg::train(backend.as_mut(), &ids, ep_cfg, &cfg.pg, seed)?;
                    (agents::Agent::Pg(a), log, cfg.pg.episodes)
                }
                other => return Err(CliError::Usage(format!("unknown agent '{other}'"))),
            };
            let meta = CheckpointMeta {
                episodes: episodes_run,
                seed,
                length,
                state_mode: mode.name().to_string(),
                programs: ids,
            };
            agents::save_agent(&agent, meta, &save)?;
            let log_path = PathBuf::from(format!("{}.log.jsonl", save.display()));
            write_file(&log_path, &log.to_jsonl())?;
            println!(
                "trained {algo} for {episodes_run} episodes; checkpoint {} log {}",
                save.display(),
                log_path.display()
            );
            Ok(())
        }
        Cmd::Evaluate {
            agent,
            corpus,
            length,
            out,
        } => {
            let (agent, ck) = agents::load_agent(&agent)?;
            let corpus = load_corpus(&corpus)?;
            let mut backend = select_backend(&corpus)?;
            let rows = evaluate_agent(&agent, &ck.meta, &corpus, length, backend.as_mut())?;
            write_file(&out, &experiment::eval_rows_to_csv(&rows))?;
            println!("{} rows written to {}", rows.len(), out.display());
            Ok(())
        }
        Cmd::Compare { files, json } => {
            if files.is_empty() {
                return Err(CliError::Usage("compare needs at least one CSV".into()));
            }
            let mut rows = Vec::new();
            for f in &files {
                rows.extend(harness::read_result_csv(f)?);
            }
            let report = harness::compare_report(&rows);
            print!("{}", report.to_text());
            if let Some(path) = json {
                write_file(&path, &report.to_json())?;
            }
            Ok(())
        }
        Cmd::MockBackend { mode, cycles } => {
            mock_backend(&mode, cycles);
            Ok(())
        }
    }
}

/// Minimal protocol server used by the external-backend tests. Modes:
/// fixed (answer every eval with --cycles), malformed (garbage line),
/// slow (sleep before answering), badid (wrong response id), die (exit
/// after the handshake request arrives).
fn mock_backend(mode: &str, cycles: u64) {
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let req: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(_) => break,
        };
        let id = req.get("id").and_then(serde_json::Value::as_u64).unwrap_or(0);
        let op = req.get("op").and_then(serde_json::Value::as_str).unwrap_or("");
        let response = match (op, mode) {
            (_, "die") => std::process::exit(0),
            ("hello", _) => serde_json::json!({"id": id, "protocol": 1, "passes": PASS_COUNT}),
            ("eval", "malformed") => {
                let _ = writeln!(stdout, "this is not json");
                let _ = stdout.flush();
                continue;
            }
            ("eval", "slow") => {
                std::thread::sleep(std::time::Duration::from_secs(5));
                serde_json::json!({"id": id, "cycles": cycles, "features": vec![0u64; 56]})
            }
            ("eval", "badid") => {
                serde_json::json!({"id": id + 1, "cycles": cycles, "features": vec![0u64; 56]})
            }
            ("eval", _) => {
                serde_json::json!({"id": id, "cycles": cycles, "features": vec![0u64; 56]})
            }
            _ => serde_json::json!({"id": id, "error": "unknown op"}),
        };
        let _ = writeln!(stdout, "{response}");
        let _ = stdout.flush();
    }
}
