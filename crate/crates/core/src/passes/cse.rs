//! Local common-subexpression elimination: within each block, a pure
//! expression syntactically identical to an earlier one (same opcode,
//! attribute, and operands after substitution) is deleted and its uses
//! rewired to the earlier result.

use super::util::{resolve_chains, substitute_values};
use crate::tir::{Attr, Instruction, Opcode, Program, Value};
use std::collections::BTreeMap;

/// Expressions safe to dedupe: same operands give the same result, and the
/// earlier instance traps iff the later would (so div/rem qualify). Loads
/// may observe intervening stores and allocas are distinct per execution.
fn cse_candidate(inst: &Instruction) -> bool {
    inst.opcode.is_binary_arith()
        || matches!(inst.opcode, Opcode::Icmp | Opcode::Select | Opcode::Gep)
}

fn expr_key(inst: &Instruction) -> String {
    let mut key = inst.opcode.name().to_string();
    if let Some(Attr::Pred(p)) = inst.attr {
        key.push(' ');
        key.push_str(p.name());
    }
    for v in &inst.operands {
        key.push(' ');
        key.push_str(&v.to_string());
    }
    key
}

pub fn run(p: &Program) -> Program {
    let mut out = p.clone();
    let f = out.main_mut();

    let mut subst: BTreeMap<String, Value> = BTreeMap::new();
    for b in &mut f.blocks {
        let mut seen: BTreeMap<String, String> = BTreeMap::new();
        let mut kept = Vec::with_capacity(b.body.len());
        for mut inst in std::mem::take(&mut b.body) {
            for v in inst.value_operands_mut() {
                if let Value::Reg(r) = v {
                    if let Some(repl) = subst.get(r) {
                        *v = repl.clone();
                    }
                }
            }
            if cse_candidate(&inst) {
                let key = expr_key(&inst);
                match seen.get(&key) {
                    Some(earlier) => {
                        let later = inst.result.clone().unwrap();
                        subst.insert(later, Value::Reg(earlier.clone()));
                        continue; // drop the duplicate
                    }
                    None => {
                        seen.insert(key, inst.result.clone().unwrap());
                    }
                }
            }
            kept.push(inst);
        }
        b.body = kept;
    }

    resolve_chains(&mut subst);
    substitute_values(f, &subst);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tir::{parse_text, validate};

    #[test]
    fn dedupes_identical_expressions() {
        let src = "
func @main(%x) {
entry:
  %a = mul %x, %x
  %b = mul %x, %x
  %c = add %a, %b
  ret %c
}
";
        let q = run(&parse_text(src).unwrap());
        assert!(validate(&q).is_empty());
        let body = &q.main().blocks[0].body;
        assert_eq!(body.len(), 2);
        assert_eq!(body[1].operands[0], Value::Reg("a".into()));
        assert_eq!(body[1].operands[1], Value::Reg("a".into()));
    }

    #[test]
    fn cascading_duplicates_collapse() {
        // After %b is rewired to %a, %d becomes identical to %c.
        let src = "
func @main(%x) {
entry:
  %a = add %x, 1
  %b = add %x, 1
  %c = mul %a, 2
  %d = mul %b, 2
  %e = add %c, %d
  ret %e
}
";
        let q = run(&parse_text(src).unwrap());
        assert_eq!(q.main().blocks[0].body.len(), 3);
    }

    #[test]
    fn loads_not_deduped() {
        let src = "
func @main() {
entry:
  %p = alloca 1
  %v1 = load %p
  store 9, %p
  %v2 = load %p
  %s = add %v1, %v2
  ret %s
}
";
        let p = parse_text(src).unwrap();
        assert_eq!(run(&p), p);
    }

    #[test]
    fn different_blocks_not_deduped() {
        let src = "
func @main(%x) {
entry:
  %a = mul %x, %x
  jmp next
next:
  %b = mul %x, %x
  %c = add %a, %b
  ret %c
}
";
        let p = parse_text(src).unwrap();
        assert_eq!(run(&p), p);
    }
}
