//! Dead code elimination: repeatedly drop instructions whose result has no
//! uses and whose execution cannot be observed; fixpoint within the pass.

use super::util::count_reg_uses;
use crate::tir::{Instruction, Program, Value};

/// Whether an unused instruction may be removed. Stores and terminators are
/// side-effecting; allocas stay because allocation order is observable
/// through address values; div/rem stay unless the divisor is a nonzero
/// constant (a trap is an observable effect). Unused loads are removable:
/// the corpus keeps dead loads in bounds.
pub fn is_deletable(inst: &Instruction) -> bool {
    use crate::tir::Opcode::*;
    match inst.opcode {
        Store | Br | Jmp | Ret | Alloca => false,
        Div | Rem => matches!(inst.operands[1], Value::Const(c) if c != 0),
        _ => true,
    }
}

pub fn run(p: &Program) -> Program {
    let mut out = p.clone();
    let f = out.main_mut();
    loop {
        let uses = count_reg_uses(f);
        let dead = |inst: &Instruction| {
            inst.result
                .as_ref()
                .map_or(false, |r| !uses.contains_key(r.as_str()))
                && is_deletable(inst)
        };
        let mut removed = false;
        for b in &mut f.blocks {
            let before = b.phis.len() + b.body.len();
            b.phis.retain(|i| !dead(i));
            b.body.retain(|i| !dead(i));
            removed |= b.phis.len() + b.body.len() != before;
        }
        if !removed {
            break;
        }
    }
    out
}
