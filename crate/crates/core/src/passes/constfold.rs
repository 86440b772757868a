//! Constant folding: evaluate pure value ops whose operands are all
//! constants, rewrite every use with the result, and delete the instruction;
//! fixpoint within the pass. Division and remainder by constant zero are
//! left untouched so traps survive.

use super::util::substitute_reg;
use crate::tir::{eval_binop, eval_icmp, Instruction, Opcode, Program};

fn try_fold(inst: &Instruction) -> Option<i64> {
    match inst.opcode {
        op if op.is_binary_arith() => {
            let a = inst.operands[0].as_const()?;
            let b = inst.operands[1].as_const()?;
            eval_binop(op, a, b).ok()
        }
        Opcode::Icmp => {
            let a = inst.operands[0].as_const()?;
            let b = inst.operands[1].as_const()?;
            Some(eval_icmp(inst.pred(), a, b))
        }
        Opcode::Select => {
            let c = inst.operands[0].as_const()?;
            let a = inst.operands[1].as_const()?;
            let b = inst.operands[2].as_const()?;
            Some(if c != 0 { a } else { b })
        }
        _ => None,
    }
}

pub fn run(p: &Program) -> Program {
    let mut out = p.clone();
    let f = out.main_mut();
    loop {
        let mut folded = false;
        for bi in 0..f.blocks.len() {
            let mut i = 0;
            while i < f.blocks[bi].body.len() {
                if let Some(c) = try_fold(&f.blocks[bi].body[i]) {
                    let inst = f.blocks[bi].body.remove(i);
                    substitute_reg(f, inst.result.as_deref().unwrap(), &crate::tir::Value::Const(c));
                    folded = true;
                } else {
                    i += 1;
                }
            }
        }
        if !folded {
            break;
        }
    }
    out
}
