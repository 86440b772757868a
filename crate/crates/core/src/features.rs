//! RL state construction: the 56 static program features, the applied-pass
//! histogram, and the normalized 69-dimensional network input.
//!
//! Feature schema (fixed; several entries are deliberately redundant and
//! double as self-checks):
//!   0..19   opcode counts in table order
//!   20      total instructions (terminators included)
//!   21      total blocks
//!   22      CFG edges (deduplicated)
//!   23..26  blocks with 0 / 1 / 2 / >2 predecessors
//!   27..29  blocks with 0 / 1 / 2 successors
//!   30      critical edges
//!   31      max block size
//!   32      floor of average block size
//!   33      blocks with <=5 instructions
//!   34      blocks with >=15 instructions
//!   35      distinct result registers defined (parameters not counted)
//!   36      constant operands
//!   37      register operands
//!   38      memory instructions (load/store/alloca/gep)
//!   39      arithmetic instructions (opcodes 0..9)
//!   40      binary arithmetic ops with >=1 constant operand
//!   41      binary arithmetic ops with all-constant operands
//!   42      back edges
//!   43      max loop depth
//!   44      instructions in blocks at loop depth >= 1
//!   45      phi incoming pairs
//!   46      blocks containing >=1 phi
//!   47      dead instructions (unused results dce could delete)
//!   48      br instructions with a constant condition
//!   49      within-block duplicate pure expressions (cse candidates)
//!   50      loads from non-escaping allocas
//!   51      stores to non-escaping allocas
//!   52      non-escaping alloca slots
//!   53      sum of block critical paths
//!   54      blocks ending in ret
//!   55      self-loop blocks

use crate::passes::{self, PassId, PASS_COUNT};
use crate::tir::{analyze_cfg, Attr, Opcode, Program, Value};
use std::collections::BTreeSet;

pub const FEATURE_COUNT: usize = 56;
/// 56 features + 12 histogram slots + remaining-steps fraction.
pub const STATE_DIM: usize = FEATURE_COUNT + PASS_COUNT + 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector(pub [u64; FEATURE_COUNT]);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionHistogram(pub [u64; PASS_COUNT]);

/// Which slots of the state the agent actually sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateMode {
    Features,
    Histogram,
    Both,
}

impl Default for StateMode {
    fn default() -> Self {
        StateMode::Both
    }
}

impl std::str::FromStr for StateMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "features" => Ok(StateMode::Features),
            "histogram" => Ok(StateMode::Histogram),
            "both" => Ok(StateMode::Both),
            other => Err(format!("unknown state mode '{other}'")),
        }
    }
}

impl StateMode {
    pub fn name(self) -> &'static str {
        match self {
            StateMode::Features => "features",
            StateMode::Histogram => "histogram",
            StateMode::Both => "both",
        }
    }
}

pub type StateVector = Vec<f64>;

pub fn extract_features(p: &Program) -> FeatureVector {
    let f = p.main();
    let cfg = analyze_cfg(p);
    let mut v = [0u64; FEATURE_COUNT];

    for inst in f.instructions() {
        v[inst.opcode.table_index()] += 1;
        v[20] += 1;
        if inst.opcode.is_memory() {
            v[38] += 1;
        }
        if inst.opcode.is_binary_arith() {
            v[39] += 1;
            let consts = inst
                .operands
                .iter()
                .filter(|o| matches!(o, Value::Const(_)))
                .count();
            if consts >= 1 {
                v[40] += 1;
            }
            if consts == inst.operands.len() {
                v[41] += 1;
            }
        }
        for op in inst.value_operands() {
            match op {
                Value::Const(_) => v[36] += 1,
                Value::Reg(_) => v[37] += 1,
                Value::Label(_) => {}
            }
        }
        if inst.opcode == Opcode::Phi {
            v[45] += inst.operands.len() as u64 / 2;
        }
        if inst.opcode == Opcode::Br && matches!(inst.operands[0], Value::Const(_)) {
            v[48] += 1;
        }
    }

    v[21] = f.blocks.len() as u64;
    v[22] = cfg.edges().len() as u64;
    for b in &f.blocks {
        match cfg.preds[&b.label].len() {
            0 => v[23] += 1,
            1 => v[24] += 1,
            2 => v[25] += 1,
            _ => v[26] += 1,
        }
        match cfg.succs[&b.label].len() {
            0 => v[27] += 1,
            1 => v[28] += 1,
            _ => v[29] += 1,
        }
        let size = b.size() as u64;
        v[31] = v[31].max(size);
        if size <= 5 {
            v[33] += 1;
        }
        if size >= 15 {
            v[34] += 1;
        }
        if !b.phis.is_empty() {
            v[46] += 1;
        }
        if cfg.depth(&b.label) >= 1 {
            v[44] += size;
        }
        if b.terminator.opcode == Opcode::Ret {
            v[54] += 1;
        }
        if cfg.succs[&b.label].iter().any(|s| s == &b.label) {
            v[55] += 1;
        }
        v[53] += passes::block_critpath(b);

        // duplicate pure expressions within the block (same opcode, attr,
        // operands as an earlier instruction)
        let mut seen: BTreeSet<String> = BTreeSet::new();
        for inst in &b.body {
            let pure = inst.opcode.is_binary_arith()
                || matches!(inst.opcode, Opcode::Icmp | Opcode::Select | Opcode::Gep);
            if !pure {
                continue;
            }
            let mut key = inst.opcode.name().to_string();
            if let Some(Attr::Pred(pr)) = inst.attr {
                key.push(' ');
                key.push_str(pr.name());
            }
            for o in &inst.operands {
                key.push(' ');
                key.push_str(&o.to_string());
            }
            if !seen.insert(key) {
                v[49] += 1;
            }
        }
    }
    v[30] = cfg.critical_edges.len() as u64;
    v[32] = v[20] / v[21].max(1);
    v[35] = f.instructions().filter(|i| i.result.is_some()).count() as u64;
    v[42] = cfg.back_edges.len() as u64;
    v[43] = cfg.loop_depth.values().copied().max().unwrap_or(0) as u64;

    let uses = passes::util::count_reg_uses(f);
    for b in &f.blocks {
        for inst in b.phis.iter().chain(b.body.iter()) {
            if let Some(r) = &inst.result {
                if !uses.contains_key(r.as_str()) && passes::is_deletable(inst) {
                    v[47] += 1;
                }
            }
        }
    }

    let slots = passes::non_escaping_allocas(f);
    v[52] = slots.len() as u64;
    for inst in f.instructions() {
        match inst.opcode {
            Opcode::Load => {
                if matches!(&inst.operands[0], Value::Reg(r) if slots.contains(r)) {
                    v[50] += 1;
                }
            }
            Opcode::Store => {
                if matches!(&inst.operands[1], Value::Reg(r) if slots.contains(r)) {
                    v[51] += 1;
                }
            }
            _ => {}
        }
    }

    FeatureVector(v)
}

/// counts[i] = multiplicity of pass i in the applied sequence.
pub fn histogram_state(actions: &[PassId]) -> ActionHistogram {
    let mut counts = [0u64; PASS_COUNT];
    for a in actions {
        counts[a.index()] += 1;
    }
    ActionHistogram(counts)
}

/// Network input: log2(1+x)-scaled features, histogram scaled by 1/L, and a
/// remaining-steps fraction. Unselected parts are zeroed so the input width
/// never changes.
pub fn normalize_state(
    f: &FeatureVector,
    h: &ActionHistogram,
    steps_left: usize,
    horizon: usize,
    mode: StateMode,
) -> StateVector {
    assert!(steps_left <= horizon && horizon > 0);
    let mut out = vec![0.0; STATE_DIM];
    if matches!(mode, StateMode::Features | StateMode::Both) {
        for (i, &x) in f.0.iter().enumerate() {
            out[i] = ((1 + x) as f64).log2();
        }
    }
    if matches!(mode, StateMode::Histogram | StateMode::Both) {
        for (i, &x) in h.0.iter().enumerate() {
            out[FEATURE_COUNT + i] = x as f64 / horizon as f64;
        }
    }
    out[STATE_DIM - 1] = steps_left as f64 / horizon as f64;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::passes::apply_pass;
    use crate::tir::{fixtures, parse_text};

    #[test]
    fn p1_counts() {
        let fv = extract_features(&parse_text(fixtures::P1).unwrap());
        assert_eq!(fv.0[Opcode::Ret.table_index()], 1);
        assert_eq!(fv.0[20], 1);
        assert_eq!(fv.0[21], 1);
        assert_eq!(fv.0[22], 0);
        for i in 0..10 {
            assert_eq!(fv.0[i], 0, "arith count {i}");
        }
    }

    #[test]
    fn p2_counts() {
        let fv = extract_features(&parse_text(fixtures::P2).unwrap());
        assert_eq!(fv.0[Opcode::Add.table_index()], 1);
        assert_eq!(fv.0[Opcode::Mul.table_index()], 1);
        assert_eq!(fv.0[Opcode::Ret.table_index()], 1);
        assert_eq!(fv.0[20], 3);
        assert_eq!(fv.0[36], 2, "constant operands");
        assert_eq!(fv.0[37], 3, "register operands");
        assert_eq!(fv.0[41], 1, "all-constant binary ops");
    }

    // Oracle: hand count on the fixture text.
    #[test]
    fn p3_loop_features() {
        let fv = extract_features(&parse_text(fixtures::P3).unwrap());
        assert_eq!(fv.0[42], 1, "back edges");
        assert_eq!(fv.0[43], 1, "max loop depth");
        assert_eq!(fv.0[45], 4, "phi incoming pairs");
        assert_eq!(fv.0[55], 1, "self-loop blocks");
        assert_eq!(fv.0[46], 1, "blocks with phis");
        assert_eq!(fv.0[12], 2, "phi count");
    }

    #[test]
    fn redundancy_identities() {
        for src in [fixtures::P1, fixtures::P2, fixtures::P3] {
            let fv = extract_features(&parse_text(src).unwrap());
            let opcode_sum: u64 = fv.0[..20].iter().sum();
            assert_eq!(fv.0[20], opcode_sum);
            assert_eq!(fv.0[21], fv.0[23] + fv.0[24] + fv.0[25] + fv.0[26]);
            let arith_sum: u64 = fv.0[..10].iter().sum();
            assert_eq!(fv.0[39], arith_sum);
        }
    }

    #[test]
    fn dce_zeroes_dead_feature_and_constfold_zeroes_allconst() {
        let src = "
func @main(%x) {
entry:
  %dead = mul %x, %x
  %k = add 2, 3
  %r = add %k, %x
  ret %r
}
";
        let p = parse_text(src).unwrap();
        let before = extract_features(&p);
        assert_eq!(before.0[47], 1);
        assert_eq!(before.0[41], 1);
        let after_dce = extract_features(&apply_pass(PassId::from_name("dce").unwrap(), &p));
        assert_eq!(after_dce.0[47], 0);
        let after_fold =
            extract_features(&apply_pass(PassId::from_name("constfold").unwrap(), &p));
        assert_eq!(after_fold.0[41], 0);
    }

    #[test]
    fn histogram_counts_and_order_invariance() {
        assert_eq!(histogram_state(&[]).0, [0; PASS_COUNT]);
        let a = [
            PassId::new(0).unwrap(),
            PassId::new(0).unwrap(),
            PassId::new(3).unwrap(),
        ];
        let h = histogram_state(&a);
        assert_eq!(h.0[0], 2);
        assert_eq!(h.0[3], 1);
        assert_eq!(h.0.iter().sum::<u64>(), 3);
        let b = [
            PassId::new(3).unwrap(),
            PassId::new(0).unwrap(),
            PassId::new(0).unwrap(),
        ];
        assert_eq!(histogram_state(&a), histogram_state(&b));
    }

    #[test]
    fn normalization() {
        let mut f = FeatureVector([0; FEATURE_COUNT]);
        f.0[5] = 3;
        let h = histogram_state(&[PassId::new(2).unwrap()]);
        let s = normalize_state(&f, &h, 3, 3, StateMode::Both);
        assert_eq!(s.len(), STATE_DIM);
        assert_eq!(s[5], 2.0); // log2(1+3)
        assert_eq!(s[FEATURE_COUNT + 2], 1.0 / 3.0);
        assert_eq!(s[STATE_DIM - 1], 1.0);

        let only_h = normalize_state(&f, &h, 0, 3, StateMode::Histogram);
        assert_eq!(only_h[5], 0.0);
        assert_eq!(only_h[FEATURE_COUNT + 2], 1.0 / 3.0);
        assert_eq!(only_h[STATE_DIM - 1], 0.0);

        let zeros = normalize_state(
            &FeatureVector([0; FEATURE_COUNT]),
            &histogram_state(&[]),
            2,
            3,
            StateMode::Both,
        );
        assert!(zeros[..STATE_DIM - 1].iter().all(|&x| x == 0.0));
        assert!((zeros[STATE_DIM - 1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_across_reparses() {
        let p = parse_text(fixtures::P3).unwrap();
        let q = parse_text(&crate::tir::emit_text(&p)).unwrap();
        assert_eq!(extract_features(&p), extract_features(&q));
    }
}
