//! Block-local promotion of non-escaping alloca slots: stored values are
//! forwarded to later loads in the same block, and stores that can never be
//! observed again are deleted. No phi insertion; cross-block promotion is a
//! non-goal.

use super::util::{non_escaping_allocas, resolve_chains, substitute_values};
use crate::tir::{Opcode, Program, Value};
use std::collections::{BTreeMap, BTreeSet};

pub fn run(p: &Program) -> Program {
    let mut out = p.clone();
    let f = out.main_mut();
    let slots = non_escaping_allocas(f);
    if slots.is_empty() {
        return out;
    }

    // Forward stores to later loads within each block.
    let mut subst: BTreeMap<String, Value> = BTreeMap::new();
    for b in &mut f.blocks {
        let mut current: BTreeMap<String, Value> = BTreeMap::new();
        let mut kept = Vec::with_capacity(b.body.len());
        for mut inst in std::mem::take(&mut b.body) {
            for v in inst.value_operands_mut() {
                if let Value::Reg(r) = v {
                    if let Some(repl) = subst.get(r) {
                        *v = repl.clone();
                    }
                }
            }
            match inst.opcode {
                Opcode::Store => {
                    if let Value::Reg(addr) = &inst.operands[1] {
                        if slots.contains(addr) {
                            current.insert(addr.clone(), inst.operands[0].clone());
                        }
                    }
                }
                Opcode::Load => {
                    if let Value::Reg(addr) = &inst.operands[0] {
                        if slots.contains(addr) {
                            if let Some(v) = current.get(addr) {
                                subst.insert(inst.result.clone().unwrap(), v.clone());
                                continue; // load replaced by the stored value
                            }
                        }
                    }
                }
                _ => {}
            }
            kept.push(inst);
        }
        b.body = kept;
    }
    resolve_chains(&mut subst);
    substitute_values(f, &subst);

    // Delete dead stores: overwritten before any load in the same block, or
    // never loaded again in this block when no other block loads the slot.
    let mut loads_per_slot: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for (bi, b) in f.blocks.iter().enumerate() {
        for inst in &b.body {
            if inst.opcode == Opcode::Load {
                if let Value::Reg(addr) = &inst.operands[0] {
                    if slots.contains(addr) {
                        loads_per_slot.entry(addr.clone()).or_default().insert(bi);
                    }
                }
            }
        }
    }

    for (bi, b) in f.blocks.iter_mut().enumerate() {
        let mut dead: Vec<usize> = Vec::new();
        for (i, inst) in b.body.iter().enumerate() {
            if inst.opcode != Opcode::Store {
                continue;
            }
            let Value::Reg(addr) = &inst.operands[1] else {
                continue;
            };
            if !slots.contains(addr) {
                continue;
            }
            let mut verdict = None;
            for later in &b.body[i + 1..] {
                match later.opcode {
                    Opcode::Load if later.operands[0] == inst.operands[1] => {
                        verdict = Some(false);
                        break;
                    }
                    Opcode::Store if later.operands[1] == inst.operands[1] => {
                        verdict = Some(true);
                        break;
                    }
                    _ => {}
                }
            }
            let is_dead = verdict.unwrap_or_else(|| {
                loads_per_slot
                    .get(addr)
                    .map_or(true, |blocks| blocks.iter().all(|&lb| lb == bi))
            });
            if is_dead {
                dead.push(i);
            }
        }
        for i in dead.into_iter().rev() {
            b.body.remove(i);
        }
    }

    out
}
