//! External cost backend: a child process speaking JSON lines over its
//! standard streams. One request in flight at a time; every failure is fatal
//! (no silent fallback to the builtin simulator).
//!
//! Protocol (version 1):
//!   handshake  {"id":0,"op":"hello"}
//!          ->  {"id":0,"protocol":1,"passes":12}
//!   evaluate   {"id":N,"op":"eval","program":"<id>","passes":[ints]}
//!          ->  {"id":N,"cycles":int,"features":[56 ints]}

use crate::env::{CostBackend, EnvError, EvalResult};
use crate::features::{FeatureVector, FEATURE_COUNT};
use crate::passes::{PassId, PASS_COUNT};
use serde_json::{json, Value};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::time::Duration;

/// `PHASEFORGE_BACKEND=cmd:<path and args>` selects an external backend.
pub const BACKEND_ENV: &str = "PHASEFORGE_BACKEND";
/// Per-request timeout in milliseconds (default 60000).
pub const TIMEOUT_ENV: &str = "PHASEFORGE_BACKEND_TIMEOUT_MS";

pub const PROTOCOL_VERSION: u64 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

pub struct ExternalBackend {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    timeout: Duration,
}

impl ExternalBackend {
    /// Spawn `command` (whitespace-split program + args) and run the
    /// handshake.
    pub fn spawn(command: &str, timeout: Duration) -> Result<ExternalBackend, EnvError> {
        let mut parts = command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| EnvError::Backend("empty backend command".into()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| EnvError::Backend(format!("cannot spawn '{command}': {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");

        let (tx, lines) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });

        let mut backend = ExternalBackend {
            child,
            stdin,
            lines,
            next_id: 1,
            timeout,
        };
        backend.handshake()?;
        Ok(backend)
    }

    /// Build from `PHASEFORGE_BACKEND` when set; `None` when unset.
    pub fn from_env() -> Option<Result<ExternalBackend, EnvError>> {
        let raw = std::env::var(BACKEND_ENV).ok()?;
        let timeout = std::env::var(TIMEOUT_ENV)
            .ok()
            .and_then(|v| v.parse::<u64>().ok())
            .map(Duration::from_millis)
            .unwrap_or(DEFAULT_TIMEOUT);
        let command = match raw.strip_prefix("cmd:") {
            Some(c) if !c.trim().is_empty() => c.to_string(),
            _ => {
                return Some(Err(EnvError::Backend(format!(
                    "{BACKEND_ENV} must look like cmd:<path>, found '{raw}'"
                ))))
            }
        };
        Some(ExternalBackend::spawn(&command, timeout))
    }

    fn request(&mut self, req: Value) -> Result<Value, EnvError> {
        let mut line = req.to_string();
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| EnvError::Backend(format!("backend stdin closed: {e}")))?;
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(text)) => serde_json::from_str(&text)
                .map_err(|e| EnvError::Backend(format!("malformed backend response: {e}"))),
            Ok(Err(e)) => Err(EnvError::Backend(format!("backend read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(EnvError::Backend(format!(
                "backend timed out after {:?}",
                self.timeout
            ))),
            Err(RecvTimeoutError::Disconnected) => {
                Err(EnvError::Backend("backend exited".into()))
            }
        }
    }

    fn expect_id(resp: &Value, want: u64) -> Result<(), EnvError> {
        match resp.get("id").and_then(Value::as_u64) {
            Some(id) if id == want => Ok(()),
            other => Err(EnvError::Backend(format!(
                "backend response id {other:?} does not match request id {want}"
            ))),
        }
    }

    fn handshake(&mut self) -> Result<(), EnvError> {
        let resp = self.request(json!({"id": 0, "op": "hello"}))?;
        Self::expect_id(&resp, 0)?;
        match resp.get("protocol").and_then(Value::as_u64) {
            Some(PROTOCOL_VERSION) => {}
            other => {
                return Err(EnvError::Backend(format!(
                    "unsupported backend protocol {other:?}"
                )))
            }
        }
        match resp.get("passes").and_then(Value::as_u64) {
            Some(n) if n == PASS_COUNT as u64 => Ok(()),
            other => Err(EnvError::Backend(format!(
                "backend exposes {other:?} passes, expected {PASS_COUNT}"
            ))),
        }
    }
}

impl CostBackend for ExternalBackend {
    fn eval(&mut self, program: &str, passes: &[PassId]) -> Result<EvalResult, EnvError> {
        let id = self.next_id;
        self.next_id += 1;
        let pass_ints: Vec<u64> = passes.iter().map(|p| p.index() as u64).collect();
        let resp = self.request(json!({
            "id": id, "op": "eval", "program": program, "passes": pass_ints
        }))?;
        Self::expect_id(&resp, id)?;
        let cycles = resp
            .get("cycles")
            .and_then(Value::as_u64)
            .ok_or_else(|| EnvError::Backend("response missing integer 'cycles'".into()))?;
        let feats = resp
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| EnvError::Backend("response missing 'features' array".into()))?;
        if feats.len() != FEATURE_COUNT {
            return Err(EnvError::Backend(format!(
                "feature vector has {} entries, expected {FEATURE_COUNT}",
                feats.len()
            )));
        }
        let mut features = [0u64; FEATURE_COUNT];
        for (i, v) in feats.iter().enumerate() {
            features[i] = v.as_u64().ok_or_else(|| {
                EnvError::Backend(format!("feature {i} is not a non-negative integer"))
            })?;
        }
        Ok(EvalResult {
            cycles,
            features: FeatureVector(features),
        })
    }
}

impl Drop for ExternalBackend {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
