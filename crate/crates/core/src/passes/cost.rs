//! The built-in cycle model standing in for an HLS profiler:
//! each block costs its dataflow critical path plus one cycle for the
//! terminator, weighted by a static trip-count guess of 10 per loop level
//! (capped at three levels deep).

use crate::tir::{analyze_cfg, BasicBlock, Opcode, Program, Value};
use std::collections::HashMap;
use std::fmt;

/// Estimated clock cycles; at least 1 for any valid program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CycleCount(pub u64);

impl fmt::Display for CycleCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Issue-to-result latency per opcode. Terminators are charged separately.
pub fn latency(op: Opcode) -> u64 {
    match op {
        Opcode::Mul => 3,
        Opcode::Div | Opcode::Rem => 8,
        Opcode::Load => 2,
        Opcode::Phi => 0,
        Opcode::Br | Opcode::Jmp | Opcode::Ret => panic!("terminators have no issue latency"),
        _ => 1,
    }
}

/// Longest dependence-chain latency through a block's non-terminator
/// instructions. Operands defined outside the block, by phis, or constants
/// are ready at time 0.
pub fn block_critpath(b: &BasicBlock) -> u64 {
    let mut finish: HashMap<&str, u64> = HashMap::new();
    for phi in &b.phis {
        finish.insert(phi.result.as_deref().unwrap(), 0);
    }
    let mut critpath = 0;
    for inst in &b.body {
        let start = inst
            .value_operands()
            .filter_map(|v| match v {
                Value::Reg(r) => finish.get(r.as_str()).copied(),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let done = start + latency(inst.opcode);
        if let Some(r) = &inst.result {
            finish.insert(r, done);
        }
        critpath = critpath.max(done);
    }
    critpath
}

/// Static execution frequency guess: 10^min(loop_depth, 3).
pub fn block_freq(depth: u32) -> u64 {
    10u64.pow(depth.min(3))
}

/// cycles = sum over blocks of freq(b) * (critpath(b) + 1).
pub fn estimate_cycles(p: &Program) -> CycleCount {
    let cfg = analyze_cfg(p);
    let total = p
        .main()
        .blocks
        .iter()
        .map(|b| block_freq(cfg.depth(&b.label)) * (block_critpath(b) + 1))
        .sum();
    CycleCount(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tir::{fixtures, parse_text};

    #[test]
    fn terminator_only_block_costs_one() {
        let p = parse_text(fixtures::P1).unwrap();
        assert_eq!(estimate_cycles(&p), CycleCount(1));
    }

    // Oracle: hand-applied formula. add(1) feeds mul(3): chain 4, plus the
    // terminator.
    #[test]
    fn dependent_chain_cost() {
        let p = parse_text(fixtures::P2).unwrap();
        assert_eq!(estimate_cycles(&p), CycleCount(5));
    }

    // Oracle: hand-applied formula. entry 1 + loop 10*(4+1) + exit 1.
    // Loop critpath: mul(3) feeds add(1); phis are ready at 0.
    #[test]
    fn loop_weighted_cost() {
        let p = parse_text(fixtures::P3).unwrap();
        assert_eq!(estimate_cycles(&p), CycleCount(52));
    }

    #[test]
    fn depth_cap_at_three() {
        assert_eq!(block_freq(0), 1);
        assert_eq!(block_freq(3), 1000);
        assert_eq!(block_freq(7), 1000);
    }

    #[test]
    fn independent_instructions_run_in_parallel() {
        let src = "
func @main(%x) {
entry:
  %a = mul %x, %x
  %b = mul %x, %x
  %c = mul %x, %x
  ret %a
}
";
        let p = parse_text(src).unwrap();
        // three parallel muls: critpath 3, +1 for ret
        assert_eq!(estimate_cycles(&p), CycleCount(4));
    }
}
