//! CFG cleanup: delete unreachable blocks, merge single-pred/single-succ
//! jmp-linked pairs, and bypass empty forwarding blocks. Runs the three
//! steps to a combined fixpoint.

use super::util::{substitute_values, resolve_chains};
use crate::tir::{analyze_cfg, Instruction, Opcode, Program, Value};
use std::collections::BTreeMap;

fn delete_unreachable(p: &mut Program) -> bool {
    let cfg = analyze_cfg(p);
    let f = p.main_mut();
    if cfg.reachable.len() == f.blocks.len() {
        return false;
    }
    let dead: Vec<String> = f
        .blocks
        .iter()
        .filter(|b| !cfg.reachable.contains(&b.label))
        .map(|b| b.label.clone())
        .collect();
    f.blocks.retain(|b| cfg.reachable.contains(&b.label));
    // prune survivors' phi incomings that referenced deleted predecessors
    for b in &mut f.blocks {
        let mut placeholders = Vec::new();
        b.phis.retain_mut(|phi| {
            let mut ops = Vec::with_capacity(phi.operands.len());
            for pair in phi.operands.chunks(2) {
                let from = pair[0].as_label().unwrap();
                if !dead.iter().any(|d| d == from) {
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
            b.body.insert(i, inst);
        }
    }
    true
}

/// Merge `b` into its unique predecessor `pred` when `pred`'s terminator is
/// `jmp b`. One merge per call; the caller re-analyzes.
fn merge_linear_pair(p: &mut Program) -> bool {
    let cfg = analyze_cfg(p);
    let entry = p.main().blocks[0].label.clone();
    let target = p.main().blocks.iter().find_map(|b| {
        if b.label == entry {
            return None;
        }
        let preds = &cfg.preds[&b.label];
        if preds.len() != 1 || preds[0] == b.label {
            return None;
        }
        let pred = &preds[0];
        (cfg.succs[pred] == vec![b.label.clone()]
            && p.main().block(pred).unwrap().terminator.opcode == Opcode::Jmp)
            .then(|| (pred.clone(), b.label.clone()))
    });
    let Some((pred, label)) = target else {
        return false;
    };

    let f = p.main_mut();
    let merged_idx = f.blocks.iter().position(|b| b.label == label).unwrap();
    let merged = f.blocks.remove(merged_idx);

    // single-incoming phis in the merged block are copies from pred
    let mut subst: BTreeMap<String, Value> = BTreeMap::new();
    for phi in &merged.phis {
        let (_, v) = phi.phi_incomings().next().expect("one incoming per pred");
        subst.insert(phi.result.clone().unwrap(), v.clone());
    }

    let pb = f.block_mut(&pred).unwrap();
    pb.body.extend(merged.body);
    pb.terminator = merged.terminator;

    // edges that left the merged block now leave pred
    for b in &mut f.blocks {
        for phi in &mut b.phis {
            for pair in phi.operands.chunks_mut(2) {
                if pair[0].as_label() == Some(label.as_str()) {
                    pair[0] = Value::Label(pred.clone());
                }
            }
        }
    }
    resolve_chains(&mut subst);
    substitute_values(f, &subst);
    true
}

/// Bypass one empty forwarding block (no phis, no body, `jmp t`), if its
/// removal keeps every affected phi consistent.
fn forward_empty_block(p: &mut Program) -> bool {
    let cfg = analyze_cfg(p);
    let entry = p.main().blocks[0].label.clone();
    let f = p.main();

    'candidates: for b in &f.blocks {
        if b.label == entry || !b.phis.is_empty() || !b.body.is_empty() {
            continue;
        }
        if b.terminator.opcode != Opcode::Jmp {
            continue;
        }
        let target = b.terminator.operands[0].as_label().unwrap().to_string();
        if target == b.label {
            continue;
        }
        let preds = cfg.preds[&b.label].clone();
        if preds.is_empty() {
            continue; // unreachable; the deletion step owns it
        }
        // the value each target phi receives along the forwarded edge must
        // not conflict with what an already-direct edge carries
        let tb = f.block(&target).unwrap();
        for phi in &tb.phis {
            let via_b = phi.phi_incomings().find(|(l, _)| *l == b.label);
            let Some((_, v_b)) = via_b else {
                continue 'candidates;
            };
            for pd in &preds {
                if let Some((_, w)) = phi.phi_incomings().find(|(l, _)| l == pd) {
                    if w != v_b {
                        continue 'candidates;
                    }
                }
            }
        }

        let label = b.label.clone();
        let f = p.main_mut();
        // retarget predecessors
        for blk in &mut f.blocks {
            if !preds.contains(&blk.label) {
                continue;
            }
            for v in &mut blk.terminator.operands {
                if let Value::Label(l) = v {
                    if *l == label {
                        *v = Value::Label(target.clone());
                    }
                }
            }
        }
        // rewrite target phis: the forwarded incoming fans out to the preds
        let tb = f.block_mut(&target).unwrap();
        for phi in &mut tb.phis {
            let mut ops = Vec::with_capacity(phi.operands.len());
            let mut v_b: Option<Value> = None;
            let mut covered: Vec<&str> = Vec::new();
            for pair in phi.operands.chunks(2) {
                let from = pair[0].as_label().unwrap();
                if from == label {
                    v_b = Some(pair[1].clone());
                } else {
                    ops.extend_from_slice(pair);
                    covered.push(from);
                }
            }
            if let Some(v) = v_b {
                for pd in &preds {
                    if !covered.contains(&pd.as_str()) {
                        ops.push(Value::Label(pd.clone()));
                        ops.push(v.clone());
                    }
                }
            }
            phi.operands = ops;
        }
        let idx = f.blocks.iter().position(|x| x.label == label).unwrap();
        f.blocks.remove(idx);
        return true;
    }
    false
}

pub fn run(p: &Program) -> Program {
    let mut out = p.clone();
    loop {
        let changed =
            delete_unreachable(&mut out) || merge_linear_pair(&mut out) || forward_empty_block(&mut out);
        if !changed {
            break;
        }
    }
    out
}
