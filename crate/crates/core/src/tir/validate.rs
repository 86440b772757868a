//! Structural and SSA validation. Returns every violation found instead of
//! stopping at the first; never aborts.

use super::{analyze_cfg, Attr, Opcode, Program, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Largest accepted alloca slot count; keeps interpreter memory bounded.
pub const MAX_ALLOCA_SLOTS: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub message: String,
}

impl Violation {
    fn new(message: impl Into<String>) -> Violation {
        Violation {
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Validate a program. Empty result means the program is well-formed.
pub fn validate(p: &Program) -> Vec<Violation> {
    let mut out = Vec::new();

    if p.functions.len() != 1 {
        out.push(Violation::new(format!(
            "program must contain exactly one function, found {}",
            p.functions.len()
        )));
        if p.functions.is_empty() {
            return out;
        }
    }
    let f = p.main();
    if f.name != "main" {
        out.push(Violation::new(format!(
            "function must be named main, found '{}'",
            f.name
        )));
    }
    if f.blocks.is_empty() {
        out.push(Violation::new("function has no blocks"));
        return out;
    }

    // Unique labels.
    let mut labels: BTreeSet<&str> = BTreeSet::new();
    for b in &f.blocks {
        if !labels.insert(&b.label) {
            out.push(Violation::new(format!("duplicate block label {}", b.label)));
        }
    }

    // Per-instruction shape checks and the single-assignment rule.
    let mut defs: BTreeMap<&str, (usize, usize)> = BTreeMap::new(); // reg -> (block, pos)
    let mut dup_defs: BTreeSet<&str> = BTreeSet::new();
    for param in &f.params {
        if defs.insert(param, (usize::MAX, 0)).is_some() {
            out.push(Violation::new(format!("duplicate definition %{param}")));
            dup_defs.insert(param);
        }
    }
    for (bi, b) in f.blocks.iter().enumerate() {
        for (pos, inst) in b.instructions().enumerate() {
            let in_phis = pos < b.phis.len();
            let is_term = pos == b.size() - 1;
            if in_phis && inst.opcode != Opcode::Phi {
                out.push(Violation::new(format!(
                    "block {}: non-phi opcode {} in phi section",
                    b.label, inst.opcode
                )));
            }
            if !in_phis && !is_term && (inst.opcode == Opcode::Phi || inst.opcode.is_terminator()) {
                out.push(Violation::new(format!(
                    "block {}: opcode {} not allowed mid-block",
                    b.label, inst.opcode
                )));
            }
            if is_term && !inst.opcode.is_terminator() {
                out.push(Violation::new(format!(
                    "block {}: terminator expected, found {}",
                    b.label, inst.opcode
                )));
            }

            // Result presence.
            match (&inst.result, inst.opcode.has_result()) {
                (None, true) => out.push(Violation::new(format!(
                    "block {}: opcode {} requires a result register",
                    b.label, inst.opcode
                ))),
                (Some(r), false) => out.push(Violation::new(format!(
                    "block {}: opcode {} must not define %{r}",
                    b.label, inst.opcode
                ))),
                _ => {}
            }

            // Arity and label placement.
            match inst.opcode.fixed_arity() {
                Some(n) if inst.operands.len() != n => out.push(Violation::new(format!(
                    "block {}: {} expects {} operands, found {}",
                    b.label,
                    inst.opcode,
                    n,
                    inst.operands.len()
                ))),
                _ => {}
            }
            if inst.opcode == Opcode::Phi {
                if inst.operands.len() < 2 || inst.operands.len() % 2 != 0 {
                    out.push(Violation::new(format!(
                        "block {}: malformed phi operand list",
                        b.label
                    )));
                } else {
                    for (i, v) in inst.operands.iter().enumerate() {
                        let want_label = i % 2 == 0;
                        if want_label != matches!(v, Value::Label(_)) {
                            out.push(Violation::new(format!(
                                "block {}: phi operands must alternate label/value",
                                b.label
                            )));
                            break;
                        }
                    }
                }
            } else {
                let label_slots: &[usize] = match inst.opcode {
                    Opcode::Br => &[1, 2],
                    Opcode::Jmp => &[0],
                    _ => &[],
                };
                for (i, v) in inst.operands.iter().enumerate() {
                    let want_label = label_slots.contains(&i);
                    if want_label && !matches!(v, Value::Label(_)) {
                        out.push(Violation::new(format!(
                            "block {}: {} operand {} must be a label",
                            b.label, inst.opcode, i
                        )));
                    }
                    if !want_label && matches!(v, Value::Label(_)) {
                        out.push(Violation::new(format!(
                            "block {}: label operand not allowed in {} position {}",
                            b.label, inst.opcode, i
                        )));
                    }
                }
            }

            // Attributes.
            match (inst.opcode, &inst.attr) {
                (Opcode::Icmp, Some(Attr::Pred(_))) => {}
                (Opcode::Icmp, _) => out.push(Violation::new(format!(
                    "block {}: icmp missing predicate",
                    b.label
                ))),
                (Opcode::Alloca, Some(Attr::Size(n))) => {
                    if *n == 0 || *n > MAX_ALLOCA_SLOTS {
                        out.push(Violation::new(format!(
                            "block {}: alloca size {n} out of range 1..={MAX_ALLOCA_SLOTS}",
                            b.label
                        )));
                    }
                }
                (Opcode::Alloca, _) => out.push(Violation::new(format!(
                    "block {}: alloca missing size",
                    b.label
                ))),
                (_, None) => {}
                (op, _) => out.push(Violation::new(format!(
                    "block {}: opcode {op} carries an unexpected attribute",
                    b.label
                ))),
            }

            if let Some(r) = &inst.result {
                if defs.insert(r, (bi, pos)).is_some() {
                    out.push(Violation::new(format!("duplicate definition %{r}")));
                    dup_defs.insert(r);
                }
            }
        }
    }

    // Branch targets must exist.
    let mut targets_ok = true;
    for b in &f.blocks {
        for v in &b.terminator.operands {
            if let Value::Label(l) = v {
                if !labels.contains(l.as_str()) {
                    out.push(Violation::new(format!(
                        "block {}: branch target '{l}' does not exist",
                        b.label
                    )));
                    targets_ok = false;
                }
            }
        }
        for phi in &b.phis {
            for (l, _) in phi.phi_incomings() {
                if !labels.contains(l) {
                    out.push(Violation::new(format!(
                        "block {}: phi references unknown block '{l}'",
                        b.label
                    )));
                    targets_ok = false;
                }
            }
        }
    }
    if !targets_ok || labels.len() != f.blocks.len() {
        return out; // CFG-dependent checks would cascade noise
    }

    let cfg = analyze_cfg(p);
    let block_index: BTreeMap<&str, usize> = f
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| (b.label.as_str(), i))
        .collect();

    // Phi / predecessor agreement.
    for b in &f.blocks {
        let preds: BTreeSet<&str> = cfg.preds[&b.label].iter().map(String::as_str).collect();
        for phi in &b.phis {
            let mut seen: BTreeSet<&str> = BTreeSet::new();
            for (l, _) in phi.phi_incomings() {
                if !seen.insert(l) {
                    out.push(Violation::new(format!(
                        "block {}: phi has duplicate incoming for '{l}'",
                        b.label
                    )));
                }
                if !preds.contains(l) {
                    out.push(Violation::new(format!(
                        "block {}: phi incoming from non-predecessor '{l}'",
                        b.label
                    )));
                }
            }
            for pd in &preds {
                if !seen.contains(pd) {
                    out.push(Violation::new(format!(
                        "block {}: phi missing incoming for predecessor '{pd}'",
                        b.label
                    )));
                }
            }
        }
    }

    // Defs dominate uses. Phi uses are checked at the incoming predecessor;
    // dominance is only meaningful for reachable blocks.
    let check_use = |out: &mut Vec<Violation>, reg: &str, use_block: &str, use_pos: usize| {
        let Some(&(dbi, dpos)) = defs.get(reg) else {
            out.push(Violation::new(format!(
                "block {use_block}: use of undefined register %{reg}"
            )));
            return;
        };
        if dup_defs.contains(reg) || !cfg.reachable.contains(use_block) {
            return;
        }
        if dbi == usize::MAX {
            return; // parameter: defined on entry
        }
        let def_block = f.blocks[dbi].label.as_str();
        if def_block == use_block {
            if dpos >= use_pos {
                out.push(Violation::new(format!(
                    "block {use_block}: %{reg} used before its definition"
                )));
            }
        } else if !cfg.dominates(def_block, use_block) {
            out.push(Violation::new(format!(
                "block {use_block}: definition of %{reg} does not dominate this use"
            )));
        }
    };

    for b in &f.blocks {
        for (pos, inst) in b.instructions().enumerate() {
            if inst.opcode == Opcode::Phi {
                for (pred, v) in inst.phi_incomings() {
                    if let Value::Reg(r) = v {
                        let Some(&pbi) = block_index.get(pred) else {
                            continue;
                        };
                        // A use on the edge pred -> b: the def must be live at
                        // the end of pred.
                        let pred_end = f.blocks[pbi].size();
                        check_use(&mut out, r, pred, pred_end);
                    }
                }
            } else {
                for v in inst.value_operands() {
                    if let Value::Reg(r) = v {
                        check_use(&mut out, r, &b.label, pos);
                    }
                }
            }
        }
    }

    out
}

#[cfg(test)]
mod tests {
    use super::super::{fixtures, parse_text};
    use super::*;

    fn assert_ok(src: &str) {
        let p = parse_text(src).unwrap();
        let vs = validate(&p);
        assert!(vs.is_empty(), "unexpected violations: {vs:?}");
    }

    fn first_violation(src: &str) -> String {
        let p = parse_text(src).unwrap();
        let vs = validate(&p);
        assert!(!vs.is_empty(), "expected violations");
        vs[0].message.clone()
    }

    #[test]
    fn fixtures_are_valid() {
        for src in [fixtures::P1, fixtures::P2, fixtures::P3] {
            assert_ok(src);
        }
    }

    #[test]
    fn duplicate_definition_flagged() {
        let msg = first_violation(
            "func @main() { entry: %a = add 1, 2 %a = add 3, 4 ret %a }",
        );
        assert!(msg.contains("duplicate definition %a"), "{msg}");
    }

    #[test]
    fn phi_missing_incoming_flagged() {
        // join has preds {entry, side} but the phi only covers side.
        let src = "
func @main(%x) {
entry:
  %c = icmp sgt %x, 0
  br %c, side, join
side:
  jmp join
join:
  %v = phi [side: 1]
  ret %v
}
";
        let p = parse_text(src).unwrap();
        let vs = validate(&p);
        assert!(
            vs.iter().any(|v| v.message.contains("missing incoming")),
            "{vs:?}"
        );
    }

    #[test]
    fn use_before_def_flagged() {
        let msg = first_violation("func @main() { entry: %a = add %b, 1 %b = add 2, 3 ret %a }");
        assert!(msg.contains("used before its definition"), "{msg}");
    }

    #[test]
    fn undefined_register_flagged() {
        let msg = first_violation("func @main() { entry: ret %ghost }");
        assert!(msg.contains("undefined register %ghost"), "{msg}");
    }

    #[test]
    fn non_dominating_def_flagged() {
        // %v defined only on one branch arm but used at the join.
        let src = "
func @main(%x) {
entry:
  %c = icmp sgt %x, 0
  br %c, a, b
a:
  %v = add %x, 1
  jmp join
b:
  jmp join
join:
  ret %v
}
";
        let p = parse_text(src).unwrap();
        let vs = validate(&p);
        assert!(
            vs.iter().any(|v| v.message.contains("does not dominate")),
            "{vs:?}"
        );
    }

    #[test]
    fn missing_branch_target_flagged() {
        let msg = first_violation("func @main() { entry: jmp nowhere }");
        assert!(msg.contains("'nowhere' does not exist"), "{msg}");
    }

    #[test]
    fn phi_use_checked_at_incoming_pred() {
        // %t is defined in the loop body and used by the loop's own phi via
        // the back edge: legal because the def dominates the pred (itself).
        assert_ok(fixtures::P3);
    }

    #[test]
    fn unreachable_block_may_use_dominating_defs_loosely() {
        // Uses inside unreachable blocks are not dominance-checked, but the
        // registers must at least exist.
        let src = "
func @main() {
entry:
  ret 1
dead:
  ret %nope
}
";
        let p = parse_text(src).unwrap();
        let vs = validate(&p);
        assert!(
            vs.iter().any(|v| v.message.contains("undefined register")),
            "{vs:?}"
        );
    }
}
