//! Local algebraic rewrites: strength-reduce multiplies by powers of two to
//! shifts, collapse the listed identities (x+0, x*1, x*0, x-x, x xor x), and
//! decide comparisons of an operand against itself; fixpoint within the
//! pass. Signed division is never transformed.

use super::util::substitute_reg;
use crate::tir::{eval_icmp, Attr, Instruction, Opcode, Program, Value};

enum Rewrite {
    /// Replace all uses with a value and delete the instruction.
    Subsume(Value),
    /// Swap the instruction for a cheaper equivalent in place.
    Replace(Opcode, Vec<Value>, Option<Attr>),
}

fn power_of_two_exponent(c: i64) -> Option<i64> {
    // powers 2..2^62; 1 is the multiplicative identity handled separately
    if c > 1 && (c as u64).is_power_of_two() {
        Some(c.trailing_zeros() as i64)
    } else {
        None
    }
}

fn match_rewrite(inst: &Instruction) -> Option<Rewrite> {
    let ops = &inst.operands;
    match inst.opcode {
        Opcode::Add => match (ops[0].as_const(), ops[1].as_const()) {
            (Some(0), _) => Some(Rewrite::Subsume(ops[1].clone())),
            (_, Some(0)) => Some(Rewrite::Subsume(ops[0].clone())),
            _ => None,
        },
        Opcode::Sub if ops[0] == ops[1] => Some(Rewrite::Subsume(Value::Const(0))),
        Opcode::Xor if ops[0] == ops[1] => Some(Rewrite::Subsume(Value::Const(0))),
        Opcode::Mul => {
            let (a, b) = (ops[0].clone(), ops[1].clone());
            match (a.as_const(), b.as_const()) {
                (Some(_), Some(_)) => None, // constfold's case
                (Some(0), _) | (_, Some(0)) => Some(Rewrite::Subsume(Value::Const(0))),
                (Some(1), _) => Some(Rewrite::Subsume(b)),
                (_, Some(1)) => Some(Rewrite::Subsume(a)),
                (Some(c), _) => power_of_two_exponent(c)
                    .map(|k| Rewrite::Replace(Opcode::Shl, vec![b, Value::Const(k)], None)),
                (_, Some(c)) => power_of_two_exponent(c)
                    .map(|k| Rewrite::Replace(Opcode::Shl, vec![a, Value::Const(k)], None)),
                _ => None,
            }
        }
        Opcode::Icmp if ops[0] == ops[1] && ops[0].as_const().is_none() => {
            Some(Rewrite::Subsume(Value::Const(eval_icmp(inst.pred(), 0, 0))))
        }
        _ => None,
    }
}

pub fn run(p: &Program) -> Program {
    let mut out = p.clone();
    let f = out.main_mut();
    loop {
        let mut changed = false;
        for bi in 0..f.blocks.len() {
            let mut i = 0;
            while i < f.blocks[bi].body.len() {
                match match_rewrite(&f.blocks[bi].body[i]) {
                    Some(Rewrite::Subsume(v)) => {
                        let inst = f.blocks[bi].body.remove(i);
                        substitute_reg(f, inst.result.as_deref().unwrap(), &v);
                        changed = true;
                    }
                    Some(Rewrite::Replace(op, operands, attr)) => {
                        let inst = &mut f.blocks[bi].body[i];
                        inst.opcode = op;
                        inst.operands = operands;
                        inst.attr = attr;
                        changed = true;
                        i += 1;
                    }
                    None => i += 1,
                }
            }
        }
        if !changed {
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tir::{interpret, parse_text, validate};

    #[test]
    fn multiply_becomes_shift() {
        let src = "func @main(%x) { entry: %m = mul %x, 8 ret %m }";
        let p = parse_text(src).unwrap();
        let q = run(&p);
        let inst = &q.main().blocks[0].body[0];
        assert_eq!(inst.opcode, Opcode::Shl);
        assert_eq!(inst.operands[1], Value::Const(3));
        for x in [-5, 0, 7, i64::MAX / 4] {
            assert_eq!(
                interpret(&p, &[x], 100).outcome,
                interpret(&q, &[x], 100).outcome
            );
        }
    }

    #[test]
    fn identities_cascade_to_fixpoint() {
        let src = "
func @main(%a) {
entry:
  %z = xor %a, %a
  %p = add %a, %z
  %q = mul %p, 1
  %s = sub %q, %q
  %r = add %s, %a
  ret %r
}
";
        let p = parse_text(src).unwrap();
        let q = run(&p);
        assert!(validate(&q).is_empty());
        // everything collapses to ret %a
        assert!(q.main().blocks[0].body.is_empty());
        assert_eq!(q.main().blocks[0].terminator.operands[0], Value::Reg("a".into()));
    }

    #[test]
    fn icmp_self_comparison_decided() {
        let src = "
func @main(%a) {
entry:
  %e = icmp sle %a, %a
  %l = icmp slt %a, %a
  %s = select %e, 1, 0
  %t = select %l, 1, 0
  %r = add %s, %t
  ret %r
}
";
        let q = run(&parse_text(src).unwrap());
        let body = &q.main().blocks[0].body;
        assert_eq!(body.len(), 3); // both icmps decided
        assert_eq!(body[0].operands[0], Value::Const(1));
        assert_eq!(body[1].operands[0], Value::Const(0));
    }

    #[test]
    fn division_left_alone() {
        let src = "func @main(%x) { entry: %d = div %x, 4 ret %d }";
        let p = parse_text(src).unwrap();
        assert_eq!(run(&p), p);
    }

    #[test]
    fn constant_pair_left_for_constfold() {
        let src = "func @main() { entry: %m = mul 3, 4 ret %m }";
        let p = parse_text(src).unwrap();
        assert_eq!(run(&p), p);
    }
}
