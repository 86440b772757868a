//! Fold conditional branches on constants into unconditional jumps and prune
//! phi incomings along the removed edges.

use crate::tir::{Instruction, Opcode, Program, Value};

/// Drop a phi incoming for `pred` from every phi of `block`. A phi emptied
//
/// this way only happens when the block just became unreachable; it turns
/// into a trivial placeholder def so the text format still round-trips.
fn prune_incoming(block: &mut crate::tir::BasicBlock, pred: &str) {
    let mut placeholders = Vec::new();
    block.phis.retain_mut(|phi| {
        let mut ops = Vec::with_capacity(phi.operands.len());
        for pair in phi.operands.chunks(2) {
            if pair[0].as_label() != Some(pred) {
                ops.extend_from_slice(pair);
            }
        }
        phi.operands = ops;
        if phi.operands.is_empty() {
            placeholders.push(Instruction::new(
                phi.result.as_deref(),
                Opcode::Add,
                vec![Value::Const(0), Value::Const(0)],
            ));
            false
        } else {
            true
        }
    });
    for (i, inst) in placeholders.into_iter().enumerate() {
        block.body.insert(i, inst);
    }
}

pub fn run(p: &Program) -> Program {
    let mut out = p.clone();
    let f = out.main_mut();
    for bi in 0..f.blocks.len() {
        let term = &f.blocks[bi].terminator;
        if term.opcode != Opcode::Br {
            continue;
        }
        let Some(c) = term.operands[0].as_const() else {
            continue;
        };
        let taken = term.operands[if c != 0 { 1 } else { 2 }]
            .as_label()
            .unwrap()
            .to_string();
        let not_taken = term.operands[if c != 0 { 2 } else { 1 }]
            .as_label()
            .unwrap()
            .to_string();
        let from = f.blocks[bi].label.clone();
        f.blocks[bi].terminator =
            Instruction::new(None, Opcode::Jmp, vec![Value::Label(taken.clone())]);
        if not_taken != taken {
            let target = f.block_mut(&not_taken).expect("validated target");
            prune_incoming(target, &from);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tir::{interpret, parse_text, validate};

    #[test]
    fn folds_constant_branch_and_prunes_phi() {
        let src = "
func @main(%x) {
entry:
  br 1, live, dead
dead:
  jmp join
live:
  jmp join
join:
  %v = phi [dead: 1], [live: 2]
  ret %v
}
";
        let p = parse_text(src).unwrap();
        let q = run(&p);
        assert!(validate(&q).is_empty(), "{:?}", validate(&q));
        assert_eq!(q.main().blocks[0].terminator.opcode, Opcode::Jmp);
        // dead's phi incoming survives (dead still jumps to join); entry's
        // removed edge went to dead, which has no phis
        assert_eq!(
            interpret(&q, &[0], 100).outcome,
            interpret(&p, &[0], 100).outcome
        );
    }

    #[test]
    fn pruned_block_keeps_parsable_defs() {
        // join is only reachable through the branch; folding to the left arm
        // empties its phi.
        let src = "
func @main() {
entry:
  br 0, a, b
a:
  ret 1
b:
  ret 2
}
";
        let q = run(&parse_text(src).unwrap());
        assert_eq!(q.main().blocks[0].terminator.operands[0], Value::Label("b".into()));
        assert!(validate(&q).is_empty());
    }

    #[test]
    fn emptied_phi_becomes_placeholder() {
        let src = "
func @main() {
entry:
  br 1, live, orphan
orphan:
  %v = phi [entry: 9]
  ret %v
live:
  ret 0
}
";
        let q = run(&parse_text(src).unwrap());
        assert!(validate(&q).is_empty(), "{:?}", validate(&q));
        let orphan = q.main().block("orphan").unwrap();
        assert!(orphan.phis.is_empty());
        assert_eq!(orphan.body.len(), 1); // placeholder def keeps %v alive
        let text = crate::tir::emit_text(&q);
        assert_eq!(crate::tir::parse_text(&text).unwrap(), q);
    }

    #[test]
    fn same_target_constant_branch_folds() {
        let src = "func @main() { entry: br 0, next, next next: ret 4 }";
        let q = run(&parse_text(src).unwrap());
        assert_eq!(q.main().blocks[0].terminator.opcode, Opcode::Jmp);
        assert_eq!(interpret(&q, &[], 100).outcome, crate::tir::Outcome::Return(4));
    }

    #[test]
    fn idempotent_and_noop_on_dynamic_branches() {
        let src = "
func @main(%x) {
entry:
  %c = icmp sgt %x, 0
  br %c, a, b
a:
  ret 1
b:
  ret 2
}
";
        let p = parse_text(src).unwrap();
        assert_eq!(run(&p), p);
        let folded = run(&parse_text("func @main() { entry: br 1, a, b a: ret 1 b: ret 2 }").unwrap());
        assert_eq!(run(&folded), folded);
    }
}
