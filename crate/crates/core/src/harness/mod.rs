//! Experiment harness: benchmark corpus management, pluggable cost backends,
//! experiment orchestration with CSV/JSON results, and the cross-algorithm
//! comparison report.

pub mod experiment;
pub mod external;
pub mod report;

pub use experiment::{
    evaluate_agent, run_experiment, Algorithm, EvalRow, ExperimentConfig, ExperimentOutcome,
    ResultRow,
};
pub use external::{ExternalBackend, BACKEND_ENV, TIMEOUT_ENV};
pub use report::{compare_report, read_result_csv, CompareReport};

use crate::env::BuiltinBackend;
use crate::tir::{parse_text, validate, Program};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error("empty corpus in {0}")]
    EmptyCorpus(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

impl From<crate::env::EnvError> for HarnessError {
    fn from(e: crate::env::EnvError) -> Self {
        HarnessError::Backend(e.to_string())
    }
}

impl From<crate::agents::AgentError> for HarnessError {
    fn from(e: crate::agents::AgentError) -> Self {
        match e {
            crate::agents::AgentError::Env(env) => HarnessError::Backend(env.to_string()),
            other => HarnessError::Other(other.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub id: String,
    pub path: PathBuf,
    pub program: Program,
}

/// Parsed and validated benchmark programs, ordered by filename.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub entries: Vec<CorpusEntry>,
}

impl Corpus {
    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&CorpusEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn builtin_backend(&self) -> BuiltinBackend {
        let map: BTreeMap<String, Program> = self
            .entries
            .iter()
            .map(|e| (e.id.clone(), e.program.clone()))
            .collect();
        BuiltinBackend::new(map)
    }
}

/// Load every `.tir` file in a directory; any parse or validation failure
/// names the file and aborts.
pub fn load_corpus(dir: &Path) -> Result<Corpus, HarnessError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| HarnessError::Io {
            path: dir.display().to_string(),
            source: e,
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map_or(false, |x| x == "tir"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(HarnessError::EmptyCorpus(dir.display().to_string()));
    }

    let mut entries = Vec::with_capacity(files.len());
    for path in files {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::Io {
            path: display.clone(),
            source: e,
        })?;
        let program = parse_text(&text).map_err(|e| HarnessError::Input {
            path: display.clone(),
            message: e.to_string(),
        })?;
        let violations = validate(&program);
        if !violations.is_empty() {
            return Err(HarnessError::Input {
                path: display,
                message: format!("invalid program: {}", violations[0]),
            });
        }
        let id = path
            .file_stem()
            .expect(".tir file has a stem")
            .to_string_lossy()
            .into_owned();
        entries.push(CorpusEntry { id, path, program });
    }
    Ok(Corpus { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus_root() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
    }

    #[test]
    fn fixtures_load_as_corpus_of_three() {
        let c = load_corpus(&corpus_root().join("fixtures")).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.ids(), vec!["fold", "loop", "ret5"]);
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_corpus(dir.path()),
            Err(HarnessError::EmptyCorpus(_))
        ));
    }

    #[test]
    fn parse_failures_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("bad.tir"), "func @main() { entry: add }").unwrap();
        let err = load_corpus(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.tir"), "{msg}");
    }

    #[test]
    fn invalid_programs_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("dup.tir"),
            "func @main() { entry: %a = add 1, 2 %a = add 3, 4 ret %a }",
        )
        .unwrap();
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(err.to_string().contains("duplicate definition"), "{err}");
    }
}
