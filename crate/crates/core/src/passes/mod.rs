//! The action space: twelve optimization passes over the toy IR plus the
//! cycle estimator that stands in for an HLS profiler.
//!
//! Pass table (stable ids — the canonical action indexing everywhere):
//!
//! | id | name        | effect                                              |
//! |----|-------------|-----------------------------------------------------|
//! |  0 | constprop   | propagate known constants through phis/selects      |
//! |  1 | constfold   | evaluate all-constant pure ops, delete them         |
//! |  2 | dce         | drop unused, unobservable instructions              |
//! |  3 | cse         | dedupe identical pure expressions per block         |
//! |  4 | mem2reg     | forward stores to loads of non-escaping allocas     |
//! |  5 | licm        | hoist loop-invariant pure ops to a preheader        |
//! |  6 | unroll2     | unroll small self-loops by a factor of two          |
//! |  7 | instcombine | algebraic identities, mul-by-power-of-two to shl    |
//! |  8 | branchfold  | constant branches become jumps                      |
//! |  9 | simplifycfg | drop unreachable blocks, merge/forward trivial ones |
//! | 10 | copyprop    | forward single-incoming phis and equal-arm selects  |
//! | 11 | reassoc     | regroup commutative chains, constants last          |
//!
//! Every pass is a pure function returning a new valid program with the same
//! observable semantics; a pass with nothing to do returns its input
//! structurally unchanged.

mod branchfold;
mod constfold;
mod constprop;
mod copyprop;
pub(crate) mod cost;
mod cse;
mod dce;
mod instcombine;
mod licm;
mod mem2reg;
mod reassoc;
mod simplifycfg;
mod unroll;
pub(crate) mod util;

pub use cost::{block_critpath, block_freq, estimate_cycles, latency, CycleCount};
pub use dce::is_deletable;
pub use util::non_escaping_allocas;

use crate::tir::Program;
use serde::{Deserialize, Serialize};
use std::fmt;

pub const PASS_COUNT: usize = 12;

pub const PASS_NAMES: [&str; PASS_COUNT] = [
    "constprop",
    "constfold",
    "dce",
    "cse",
    "mem2reg",
    "licm",
    "unroll2",
    "instcombine",
    "branchfold",
    "simplifycfg",
    "copyprop",
    "reassoc",
];

/// Identifier of one pass; the numeric value is the action index.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct PassId(u8);

impl PassId {
    pub const ALL: [PassId; PASS_COUNT] = {
        let mut out = [PassId(0); PASS_COUNT];
        let mut i = 0;
        while i < PASS_COUNT {
            out[i] = PassId(i as u8);
            i += 1;
        }
        out
    };

    pub fn new(index: usize) -> Option<PassId> {
        (index < PASS_COUNT).then_some(PassId(index as u8))
    }

    pub fn from_name(name: &str) -> Option<PassId> {
        PASS_NAMES
            .iter()
            .position(|&n| n == name)
            .map(|i| PassId(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        PASS_NAMES[self.index()]
    }
}

impl fmt::Display for PassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Apply one pass. Pure: the input program is untouched.
pub fn apply_pass(id: PassId, p: &Program) -> Program {
    match id.index() {
        0 => constprop::run(p),
        1 => constfold::run(p),
        2 => dce::run(p),
        3 => cse::run(p),
        4 => mem2reg::run(p),
        5 => licm::run(p),
        6 => unroll::run(p),
        7 => instcombine::run(p),
        8 => branchfold::run(p),
        9 => simplifycfg::run(p),
        10 => copyprop::run(p),
        11 => reassoc::run(p),
        _ => unreachable!("PassId is range-checked"),
    }
}

/// Left-to-right composition of `apply_pass`; the empty sequence is identity.
pub fn apply_sequence(seq: &[PassId], p: &Program) -> Program {
    let mut cur = p.clone();
    for &id in seq {
        cur = apply_pass(id, &cur);
    }
    cur
}

/// Render a sequence as comma-separated ids, e.g. `4,0,1`.
pub fn sequence_to_string(seq: &[PassId]) -> String {
    seq.iter()
        .map(|id| id.index().to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Parse `4,0,1` (empty string means the empty sequence).
pub fn sequence_from_string(s: &str) -> Result<Vec<PassId>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|part| {
            let idx: usize = part
                .trim()
                .parse()
                .map_err(|_| format!("invalid pass id '{part}'"))?;
            PassId::new(idx).ok_or_else(|| format!("pass id {idx} out of range 0..{PASS_COUNT}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tir::{emit_text, fixtures, parse_text, validate};

    #[test]
    fn constfold_collapses_p2_to_ret25() {
        let p = parse_text(fixtures::P2).unwrap();
        let q = apply_pass(PassId::from_name("constfold").unwrap(), &p);
        assert_eq!(emit_text(&q), "func @main() {\nentry:\n  ret 25\n}\n");
        assert_eq!(estimate_cycles(&q), CycleCount(1));
    }

    #[test]
    fn dce_on_p1_is_identity() {
        let p = parse_text(fixtures::P1).unwrap();
        assert_eq!(apply_pass(PassId::from_name("dce").unwrap(), &p), p);
    }

    #[test]
    fn empty_sequence_is_identity() {
        let p = parse_text(fixtures::P3).unwrap();
        assert_eq!(apply_sequence(&[], &p), p);
    }

    // Oracle: cost formula by hand. Folding the constant mul shortens the
    // loop chain to icmp-after-add: (2+1)*10 + entry + exit = 32. LICM first
    // reaches the same place because the fold then happens in the preheader.
    #[test]
    fn fold_subsumes_hoisting_on_p3() {
        let p = parse_text(fixtures::P3).unwrap();
        let fold = PassId::from_name("constfold").unwrap();
        let licm = PassId::from_name("licm").unwrap();
        let direct = apply_sequence(&[fold], &p);
        let hoisted = apply_sequence(&[licm, fold], &p);
        assert_eq!(estimate_cycles(&direct), CycleCount(32));
        assert_eq!(estimate_cycles(&hoisted), CycleCount(32));
    }

    #[test]
    fn all_passes_preserve_validity_on_fixtures() {
        for src in [fixtures::P1, fixtures::P2, fixtures::P3] {
            let p = parse_text(src).unwrap();
            for id in PassId::ALL {
                let q = apply_pass(id, &p);
                let vs = validate(&q);
                assert!(vs.is_empty(), "pass {} broke {src}: {vs:?}", id.name());
            }
        }
    }

    #[test]
    fn sequence_strings_round_trip() {
        let seq = vec![PassId(4), PassId(0), PassId(1)];
        assert_eq!(sequence_to_string(&seq), "4,0,1");
        assert_eq!(sequence_from_string("4,0,1").unwrap(), seq);
        assert_eq!(sequence_from_string("").unwrap(), vec![]);
        assert!(sequence_from_string("12").is_err());
        assert!(sequence_from_string("a").is_err());
    }
}
