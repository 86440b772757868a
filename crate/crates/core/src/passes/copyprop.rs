//! Copy propagation for the identity definitions this IR can express:
//! single-incoming phis and selects whose arms are identical. Uses are
//! rewired to the source value and the identity is deleted; fixpoint, since
//! rewiring can make more select arms equal.

use super::util::{resolve_chains, substitute_values};
use crate::tir::{Opcode, Program, Value};
use std::collections::BTreeMap;

pub fn run(p: &Program) -> Program {
    let mut out = p.clone();
    let f = out.main_mut();
    loop {
        let mut subst: BTreeMap<String, Value> = BTreeMap::new();
        for b in &mut f.blocks {
            b.phis.retain(|phi| {
                if phi.operands.len() == 2 {
                    subst.insert(phi.result.clone().unwrap(), phi.operands[1].clone());
                    false
                } else {
                    true
                }
            });
            b.body.retain(|inst| {
                if inst.opcode == Opcode::Select && inst.operands[1] == inst.operands[2] {
                    subst.insert(inst.result.clone().unwrap(), inst.operands[1].clone());
                    false
                } else {
                    true
                }
            });
        }
        if subst.is_empty() {
            break;
        }
        resolve_chains(&mut subst);
        substitute_values(f, &subst);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tir::{interpret, parse_text, validate, Outcome};

    #[test]
    fn single_incoming_phi_forwarded() {
        let src = "
func @main(%x) {
entry:
  %a = add %x, 2
  jmp next
next:
  %v = phi [entry: %a]
  %w = mul %v, %v
  ret %w
}
";
        let q = run(&parse_text(src).unwrap());
        assert!(validate(&q).is_empty());
        let next = q.main().block("next").unwrap();
        assert!(next.phis.is_empty());
        assert_eq!(next.body[0].operands[0], Value::Reg("a".into()));
        assert_eq!(interpret(&q, &[2], 100).outcome, Outcome::Return(16));
    }

    #[test]
    fn equal_arm_select_forwarded_with_cascade() {
        let src = "
func @main(%c, %x) {
entry:
  %a = select %c, %x, %x
  %b = select %c, %a, %x
  %r = add %b, 1
  ret %r
}
";
        let q = run(&parse_text(src).unwrap());
        // %a -> %x makes %b's arms equal -> %b -> %x
        assert!(q.main().blocks[0].body.len() == 1);
        assert_eq!(
            q.main().blocks[0].body[0].operands[0],
            Value::Reg("x".into())
        );
    }

    #[test]
    fn multi_incoming_phi_kept() {
        let src = "
func @main(%x) {
entry:
  %c = icmp sgt %x, 0
  br %c, a, b
a:
  jmp join
b:
  jmp join
join:
  %v = phi [a: 1], [b: 2]
  ret %v
}
";
        let p = parse_text(src).unwrap();
        assert_eq!(run(&p), p);
    }

    #[test]
    fn idempotent() {
        let src = "func @main(%c, %x) { entry: %a = select %c, %x, %x ret %a }";
        let once = run(&parse_text(src).unwrap());
        assert_eq!(run(&once), once);
    }
}
