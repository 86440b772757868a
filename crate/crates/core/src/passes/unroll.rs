//! Factor-2 unrolling of single-block natural loops (self-loops) with at
//! most 20 body instructions. The body is copied with fresh registers and
//! the exit test sits between the copies, so trip counts are preserved
//! exactly. Values that leave the loop are merged by new phis in the exit
//! block.
//!
//! Conservative skip: when the exit block has predecessors besides the loop
//! and loop-defined values are used outside, the merge would need phis along
//! foreign edges; the pass leaves such loops alone.

use super::util::{fresh_name, taken_names};
use crate::tir::{analyze_cfg, BasicBlock, Instruction, Opcode, Program, Value};
use std::collections::BTreeMap;

const MAX_BODY: usize = 20;

struct Candidate {
    label: String,
    exit: String,
    cont_slot: usize, // br operand index (1 or 2) that loops back
}

fn find_candidates(p: &Program) -> Vec<Candidate> {
    let cfg = analyze_cfg(p);
    let mut out = Vec::new();
    for b in &p.main().blocks {
        if !cfg
            .back_edges
            .iter()
            .any(|(u, v)| u == &b.label && v == &b.label)
        {
            continue;
        }
        if b.terminator.opcode != Opcode::Br || b.body.len() > MAX_BODY {
            continue;
        }
        let t1 = b.terminator.operands[1].as_label().unwrap();
        let t2 = b.terminator.operands[2].as_label().unwrap();
        let (cont_slot, exit) = if t1 == b.label && t2 != b.label {
            (1, t2.to_string())
        } else if t2 == b.label && t1 != b.label {
            (2, t1.to_string())
        } else {
            continue; // jmp self-loops and br-to-self-on-both-sides stay put
        };
        out.push(Candidate {
            label: b.label.clone(),
            exit,
            cont_slot,
        });
    }
    out
}

fn apply_subst(v: &Value, subst: &BTreeMap<String, Value>) -> Value {
    match v {
        Value::Reg(r) => subst.get(r).cloned().unwrap_or_else(|| v.clone()),
        other => other.clone(),
    }
}

fn unroll_one(p: &mut Program, cand: &Candidate) -> bool {
    let exit_has_foreign_preds = {
        let cfg = analyze_cfg(p);
        cfg.preds[&cand.exit].iter().any(|l| l != &cand.label)
    };

    let f = p.main_mut();
    let b_idx = f.blocks.iter().position(|b| b.label == cand.label).unwrap();
    let block = f.blocks[b_idx].clone();

    // defs of the loop block and their uses elsewhere
    let defs: Vec<String> = block
        .instructions()
        .filter_map(|i| i.result.clone())
        .collect();
    let mut used_outside: Vec<String> = Vec::new();
    for other in &f.blocks {
        if other.label == cand.label {
            continue;
        }
        for inst in other.instructions() {
            if inst.opcode == Opcode::Phi {
                for (pred, v) in inst.phi_incomings() {
                    if pred == cand.label {
                        continue; // stays a use on the loop edge
                    }
                    if let Value::Reg(r) = v {
                        if defs.contains(r) && !used_outside.contains(r) {
                            used_outside.push(r.clone());
                        }
                    }
                }
            } else {
                for v in inst.value_operands() {
                    if let Value::Reg(r) = v {
                        if defs.contains(r) && !used_outside.contains(r) {
                            used_outside.push(r.clone());
                        }
                    }
                }
            }
        }
    }
    if exit_has_foreign_preds && !used_outside.is_empty() {
        return false;
    }

    let mut taken = taken_names(f);
    let b2_label = fresh_name(&mut taken, &format!("{}_u", cand.label));

    // sigma maps iteration-1 names to iteration-2 values: phi results to
    // their latch values, body defs to fresh copies.
    let mut sigma: BTreeMap<String, Value> = BTreeMap::new();
    for phi in &block.phis {
        let latch = phi
            .phi_incomings()
            .find(|(l, _)| *l == cand.label)
            .map(|(_, v)| v.clone())
            .expect("self-loop phi has a latch incoming");
        sigma.insert(phi.result.clone().unwrap(), latch);
    }
    for inst in &block.body {
        if let Some(r) = &inst.result {
            let fresh = fresh_name(&mut taken, &format!("{r}_u"));
            sigma.insert(r.clone(), Value::Reg(fresh));
        }
    }

    // second copy: body with sigma applied, no phis
    let mut b2_body = Vec::with_capacity(block.body.len());
    for inst in &block.body {
        let mut copy = inst.clone();
        copy.result = inst
            .result
            .as_ref()
            .map(|r| match &sigma[r] {
                Value::Reg(fresh) => fresh.clone(),
                _ => unreachable!("body defs map to fresh registers"),
            });
        for v in copy.value_operands_mut() {
            *v = apply_subst(v, &sigma);
        }
        b2_body.push(copy);
    }
    let mut b2_term = block.terminator.clone();
    b2_term.operands[0] = apply_subst(&b2_term.operands[0], &sigma);
    // copy 2 continues to the original header for iteration 3
    b2_term.operands[cand.cont_slot] = Value::Label(cand.label.clone());

    let b2 = BasicBlock {
        label: b2_label.clone(),
        phis: Vec::new(),
        body: b2_body,
        terminator: b2_term,
    };

    // first copy now exits to b2 on the continue side, and its phis take the
    // latch value from b2 (the value sigma assigns to the old latch value)
    {
        let b = &mut f.blocks[b_idx];
        b.terminator.operands[cand.cont_slot] = Value::Label(b2_label.clone());
        for phi in &mut b.phis {
            for pair in phi.operands.chunks_mut(2) {
                if pair[0].as_label() == Some(cand.label.as_str()) {
                    pair[0] = Value::Label(b2_label.clone());
                    pair[1] = apply_subst(&pair[1], &sigma);
                }
            }
        }
    }
    f.blocks.insert(b_idx + 1, b2);

    // exit block: existing phis gain a b2 incoming mirroring their b value
    {
        let exit = f.block_mut(&cand.exit).expect("exit block exists");
        for phi in &mut exit.phis {
            let from_b = phi
                .phi_incomings()
                .find(|(l, _)| *l == cand.label)
                .map(|(_, v)| v.clone());
            if let Some(v) = from_b {
                phi.operands.push(Value::Label(b2_label.clone()));
                phi.operands.push(apply_subst(&v, &sigma));
            }
        }
    }

    // merge loop-defined values used further out through fresh exit phis
    let mut merge: BTreeMap<String, String> = BTreeMap::new();
    let mut merge_phis: Vec<Instruction> = Vec::new();
    for r in &used_outside {
        let m = fresh_name(&mut taken, &format!("{r}_x"));
        merge_phis.push(Instruction {
            result: Some(m.clone()),
            opcode: Opcode::Phi,
            operands: vec![
                Value::Label(cand.label.clone()),
                Value::Reg(r.clone()),
                Value::Label(b2_label.clone()),
                apply_subst(&Value::Reg(r.clone()), &sigma),
            ],
            attr: None,
        });
        merge.insert(r.clone(), m);
    }
    if !merge.is_empty() {
        for bl in &mut f.blocks {
            if bl.label == cand.label || bl.label == b2_label {
                continue;
            }
            // existing phis keep their loop-edge incomings (already merged
            // above); only values arriving over foreign edges reroute
            for phi in &mut bl.phis {
                for pair in phi.operands.chunks_mut(2) {
                    let pred = pair[0].as_label().unwrap();
                    if pred == cand.label || pred == b2_label {
                        continue;
                    }
                    if let Value::Reg(r) = &pair[1] {
                        if let Some(m) = merge.get(r) {
                            pair[1] = Value::Reg(m.clone());
                        }
                    }
                }
            }
            for inst in bl.body.iter_mut().chain(std::iter::once(&mut bl.terminator)) {
                for v in inst.value_operands_mut() {
                    if let Value::Reg(r) = v {
                        if let Some(m) = merge.get(r) {
                            *v = Value::Reg(m.clone());
                        }
                    }
                }
            }
        }
        let exit = f.block_mut(&cand.exit).unwrap();
        exit.phis.extend(merge_phis);
    }
    true
}

pub fn run(p: &Program) -> Program {
    let mut out = p.clone();
    for cand in find_candidates(p) {
        unroll_one(&mut out, &cand);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tir::{fixtures, interpret, parse_text, validate};

    #[test]
    fn preserves_trip_count_exactly() {
        let p = parse_text(fixtures::P3).unwrap();
        let q = run(&p);
        assert!(validate(&q).is_empty(), "{:?}", validate(&q));
        assert_eq!(q.main().blocks.len(), 4); // entry, loop, loop_u, exit
        for n in [0, 1, 2, 3, 4, 5, 9] {
            assert_eq!(
                interpret(&p, &[n], 1_000_000).outcome,
                interpret(&q, &[n], 1_000_000).outcome,
                "trip count {n}"
            );
        }
    }

    #[test]
    fn exit_uses_flow_through_merge_phis() {
        let p = parse_text(fixtures::P3).unwrap();
        let q = run(&p);
        let exit = q.main().block("exit").unwrap();
        // ret %s2 must now go through a merge phi
        assert_eq!(exit.phis.len(), 1);
        let m = exit.phis[0].result.as_deref().unwrap();
        assert_eq!(exit.terminator.operands[0], Value::Reg(m.to_string()));
    }

    #[test]
    fn phi_swap_pattern_survives() {
        let src = "
func @main(%n) {
entry:
  jmp loop
loop:
  %a = phi [entry: 1], [loop: %b]
  %b = phi [entry: 2], [loop: %a]
  %i = phi [entry: 0], [loop: %i2]
  %i2 = add %i, 1
  %c = icmp slt %i2, %n
  br %c, loop, exit
exit:
  ret %a
}
";
        let p = parse_text(src).unwrap();
        let q = run(&p);
        assert!(validate(&q).is_empty(), "{:?}", validate(&q));
        for n in [0, 1, 2, 3, 4, 7] {
            assert_eq!(
                interpret(&p, &[n], 1_000_000).outcome,
                interpret(&q, &[n], 1_000_000).outcome,
                "n = {n}"
            );
        }
    }

    #[test]
    fn oversized_and_multiblock_loops_skipped() {
        // two-block loop: no self edge, nothing to do
        let src = "
func @main(%n) {
entry:
  jmp head
head:
  %i = phi [entry: 0], [latch: %i2]
  jmp latch
latch:
  %i2 = add %i, 1
  %c = icmp slt %i2, %n
  br %c, head, exit
exit:
  ret %i2
}
";
        let p = parse_text(src).unwrap();
        assert_eq!(run(&p), p);
    }

    #[test]
    fn infinite_jmp_self_loop_skipped() {
        let src = "
func @main() {
entry:
  jmp spin
spin:
  jmp spin
}
";
        // note: spin never returns; block still parses with jmp terminator
        let p = parse_text(src).unwrap();
        assert_eq!(run(&p), p);
    }
}
