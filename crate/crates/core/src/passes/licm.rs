//! Loop-invariant code motion: hoist pure, non-trapping, non-memory
//! instructions (arithmetic except div/rem, icmp, select) whose operands are
//! defined outside the loop into a preheader, creating one when no suitable
//! block exists. Loops are processed innermost-first and the program is
//! re-analyzed after each change.

use super::util::{fresh_name, taken_names};
use crate::tir::{
    analyze_cfg, BasicBlock, CfgInfo, Instruction, NaturalLoop, Opcode, Program, Value,
};
use std::collections::BTreeSet;

fn hoistable_opcode(op: Opcode) -> bool {
    (op.is_binary_arith() && !matches!(op, Opcode::Div | Opcode::Rem))
        || matches!(op, Opcode::Icmp | Opcode::Select)
}

/// Plan of `(block label, body index)` to hoist, in dependency-safe order:
/// an instruction is invariant once every register operand is defined
/// outside the loop or by an instruction hoisted before it.
fn collect_hoistable(p: &Program, lp: &NaturalLoop) -> Vec<(String, usize)> {
    let f = p.main();
    let mut inside: BTreeSet<&str> = BTreeSet::new();
    for b in &f.blocks {
        if !lp.body.contains(&b.label) {
            continue;
        }
        for inst in b.instructions() {
            if let Some(r) = &inst.result {
                inside.insert(r);
            }
        }
    }

    let mut hoisted_regs: BTreeSet<&str> = BTreeSet::new();
    let mut plan: Vec<(String, usize)> = Vec::new();
    let mut planned: BTreeSet<(String, usize)> = BTreeSet::new();
    loop {
        let mut grew = false;
        for b in &f.blocks {
            if !lp.body.contains(&b.label) {
                continue;
            }
            for (ii, inst) in b.body.iter().enumerate() {
                let key = (b.label.clone(), ii);
                if planned.contains(&key) || !hoistable_opcode(inst.opcode) {
                    continue;
                }
                let invariant = inst.value_operands().all(|v| match v {
                    Value::Reg(r) => {
                        !inside.contains(r.as_str()) || hoisted_regs.contains(r.as_str())
                    }
                    _ => true,
                });
                if invariant {
                    if let Some(r) = &inst.result {
                        hoisted_regs.insert(r);
                    }
                    plan.push(key.clone());
                    planned.insert(key);
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }
    plan
}

/// An existing block usable as the preheader: the single out-of-loop
/// predecessor of the header, whose only successor is the header.
fn find_preheader(cfg: &CfgInfo, lp: &NaturalLoop) -> Result<String, Vec<String>> {
    let outside: Vec<String> = cfg.preds[&lp.header]
        .iter()
        .filter(|l| !lp.body.contains(*l))
        .cloned()
        .collect();
    if outside.len() == 1 && cfg.succs[&outside[0]] == vec![lp.header.clone()] {
        Ok(outside[0].clone())
    } else {
        Err(outside)
    }
}

/// Build a fresh preheader: redirect out-of-loop edges into it, splitting
/// header phis so values arriving from multiple outside predecessors merge
/// in the preheader.
fn create_preheader(p: &mut Program, lp: &NaturalLoop, outside: &[String]) -> String {
    let f = p.main_mut();
    let mut taken = taken_names(f);
    let ph_label = fresh_name(&mut taken, &format!("{}_ph", lp.header));

    for b in &mut f.blocks {
        if !outside.contains(&b.label) {
            continue;
        }
        for v in &mut b.terminator.operands {
            if let Value::Label(l) = v {
                if *l == lp.header {
                    *v = Value::Label(ph_label.clone());
                }
            }
        }
    }

    let mut ph_phis: Vec<Instruction> = Vec::new();
    let header = f.block_mut(&lp.header).expect("header exists");
    for phi in &mut header.phis {
        let mut outside_pairs: Vec<(String, Value)> = Vec::new();
        let mut keep: Vec<Value> = Vec::new();
        for pair in phi.operands.chunks(2) {
            let label = pair[0].as_label().unwrap().to_string();
            if outside.contains(&label) {
                outside_pairs.push((label, pair[1].clone()));
            } else {
                keep.extend_from_slice(pair);
            }
        }
        let merged: Value = match outside_pairs.len() {
            0 => continue,
            1 => outside_pairs[0].1.clone(),
            _ => {
                let name =
                    fresh_name(&mut taken, &format!("{}_ph", phi.result.as_deref().unwrap()));
                let mut ops = Vec::new();
                for (l, v) in &outside_pairs {
                    ops.push(Value::Label(l.clone()));
                    ops.push(v.clone());
                }
                ph_phis.push(Instruction {
                    result: Some(name.clone()),
                    opcode: Opcode::Phi,
                    operands: ops,
                    attr: None,
                });
                Value::Reg(name)
            }
        };
        keep.insert(0, Value::Label(ph_label.clone()));
        keep.insert(1, merged);
        phi.operands = keep;
    }

    let ph = BasicBlock {
        label: ph_label.clone(),
        phis: ph_phis,
        body: Vec::new(),
        terminator: Instruction::new(None, Opcode::Jmp, vec![Value::Label(lp.header.clone())]),
    };
    let header_idx = f.blocks.iter().position(|b| b.label == lp.header).unwrap();
    f.blocks.insert(header_idx, ph);
    ph_label
}

pub fn run(p: &Program) -> Program {
    let mut out = p.clone();
    loop {
        let cfg = analyze_cfg(&out);
        let entry_label = out.main().blocks[0].label.clone();
        let mut loops: Vec<NaturalLoop> = cfg.loops.clone();
        loops.sort_by_key(|lp| (std::cmp::Reverse(cfg.depth(&lp.header)), lp.header.clone()));

        let mut transformed = false;
        for lp in &loops {
            if lp.header == entry_label {
                continue; // nowhere to put a preheader ahead of the entry
            }
            let plan = collect_hoistable(&out, lp);
            if plan.is_empty() {
                continue;
            }
            let ph_label = match find_preheader(&cfg, lp) {
                Ok(l) => l,
                Err(outside) => create_preheader(&mut out, lp, &outside),
            };

            let f = out.main_mut();
            let mut moved: Vec<Instruction> = Vec::new();
            for (label, ii) in &plan {
                moved.push(f.block(label).unwrap().body[*ii].clone());
            }
            let mut removals = plan.clone();
            removals.sort_by(|a, b| b.cmp(a)); // per-block descending indices
            for (label, ii) in removals {
                f.block_mut(&label).unwrap().body.remove(ii);
            }
            f.block_mut(&ph_label).unwrap().body.extend(moved);

            transformed = true;
            break; // re-analyze before touching the next loop
        }
        if !transformed {
            break;
        }
    }
    out
}
