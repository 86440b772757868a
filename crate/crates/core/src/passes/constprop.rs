//! Constant propagation: discover registers with a single known constant
//! value (single-valued phis, selects with a constant condition picking a
//! constant arm) and rewrite their uses; fixpoint within the pass. The
//! defining instructions stay behind for dce.

use super::util::substitute_values;
use crate::tir::{Opcode, Program, Value};
use std::collections::BTreeMap;

fn resolve(v: &Value, known: &BTreeMap<String, i64>) -> Option<i64> {
    match v {
        Value::Const(c) => Some(*c),
        Value::Reg(r) => known.get(r).copied(),
        Value::Label(_) => None,
    }
}

pub fn run(p: &Program) -> Program {
    let mut out = p.clone();
    let f = out.main_mut();

    let mut known: BTreeMap<String, i64> = BTreeMap::new();
    loop {
        let mut grew = false;
        for b in &f.blocks {
            for inst in b.phis.iter().chain(b.body.iter()) {
                let Some(result) = &inst.result else { continue };
                if known.contains_key(result) {
                    continue;
                }
                let value = match inst.opcode {
                    Opcode::Phi => {
                        let vals: Vec<Option<i64>> = inst
                            .phi_incomings()
                            .map(|(_, v)| resolve(v, &known))
                            .collect();
                        match vals.first() {
                            Some(Some(first)) if vals.iter().all(|v| *v == Some(*first)) => {
                                Some(*first)
                            }
                            _ => None,
                        }
                    }
                    Opcode::Select => match resolve(&inst.operands[0], &known) {
                        Some(c) => {
                            let arm = if c != 0 { 1 } else { 2 };
                            resolve(&inst.operands[arm], &known)
                        }
                        None => None,
                    },
                    _ => None,
                };
                if let Some(c) = value {
                    known.insert(result.clone(), c);
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }

    let map: BTreeMap<String, Value> = known
        .into_iter()
        .map(|(r, c)| (r, Value::Const(c)))
        .collect();
    substitute_values(f, &map);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tir::{parse_text, validate, Value};

    #[test]
    fn single_valued_phi_propagates() {
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
  %v = phi [a: 7], [b: 7]
  %w = add %v, 1
  ret %w
}
";
        let p = parse_text(src).unwrap();
        let q = run(&p);
        assert!(validate(&q).is_empty());
        let join = q.main().block("join").unwrap();
        assert_eq!(join.body[0].operands[0], Value::Const(7));
        // the phi itself stays (dce's job)
        assert_eq!(join.phis.len(), 1);
    }

    #[test]
    fn constant_select_chain_propagates_to_fixpoint() {
        let src = "
func @main(%x) {
entry:
  %a = select 1, 9, %x
  %b = select 0, %x, %a
  %r = add %b, %b
  ret %r
}
";
        let q = run(&parse_text(src).unwrap());
        let entry = &q.main().blocks[0];
        // %a -> 9, then %b -> 9, and the add sees both constants
        assert_eq!(entry.body[2].operands[0], Value::Const(9));
        assert_eq!(entry.body[2].operands[1], Value::Const(9));
    }

    #[test]
    fn non_constant_untouched() {
        let src = "func @main(%x) { entry: %a = add %x, 1 ret %a }";
        let p = parse_text(src).unwrap();
        assert_eq!(run(&p), p);
    }
}
