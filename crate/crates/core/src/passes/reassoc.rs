//! Reassociation of same-opcode chains of the commutative-associative ops
//! (add, mul, and, or, xor): leaves are regrouped as a register chain and a
//! constant chain joined at the root, putting constants last and exposing
//! all-constant subexpressions for constfold.
//!
//! Chains only absorb single-use links defined in the same block, and the
//! rebuilt sequence reuses the absorbed registers, so a chain already in
//! canonical form rebuilds to itself and the pass stays a structural no-op
//! on canonical input.

use super::util::count_reg_uses;
use crate::tir::{Instruction, Opcode, Program, Value};
use std::collections::{BTreeMap, BTreeSet};

fn chain_opcode(op: Opcode) -> bool {
    matches!(
        op,
        Opcode::Add | Opcode::Mul | Opcode::And | Opcode::Or | Opcode::Xor
    )
}

struct Tree {
    root_pos: usize,
    /// absorbed link positions in the block body, ascending
    links: Vec<usize>,
    reg_leaves: Vec<Value>,
    const_leaves: Vec<i64>,
}

fn collect_tree(
    body: &[Instruction],
    def_pos: &BTreeMap<&str, usize>,
    uses: &BTreeMap<String, usize>,
    root_pos: usize,
) -> Tree {
    let op = body[root_pos].opcode;
    let mut tree = Tree {
        root_pos,
        links: Vec::new(),
        reg_leaves: Vec::new(),
        const_leaves: Vec::new(),
    };
    // in-order traversal of the operand tree
    fn walk(
        body: &[Instruction],
        def_pos: &BTreeMap<&str, usize>,
        uses: &BTreeMap<String, usize>,
        op: Opcode,
        pos: usize,
        tree: &mut Tree,
    ) {
        for v in &body[pos].operands {
            match v {
                Value::Const(c) => tree.const_leaves.push(*c),
                Value::Reg(r) => {
                    let expandable = def_pos.get(r.as_str()).map_or(false, |&dp| {
                        dp < pos
                            && body[dp].opcode == op
                            && uses.get(r).copied().unwrap_or(0) == 1
                    });
                    if expandable {
                        let dp = def_pos[r.as_str()];
                        tree.links.push(dp);
                        walk(body, def_pos, uses, op, dp, tree);
                    } else {
                        tree.reg_leaves.push(v.clone());
                    }
                }
                Value::Label(_) => unreachable!("labels in arithmetic"),
            }
        }
    }
    walk(body, def_pos, uses, op, root_pos, &mut tree);
    tree.links.sort_unstable();
    tree
}

pub fn run(p: &Program) -> Program {
    let mut out = p.clone();
    let f = out.main_mut();
    let uses = count_reg_uses(f);

    for b in &mut f.blocks {
        let def_pos: BTreeMap<&str, usize> = b
            .body
            .iter()
            .enumerate()
            .filter_map(|(i, inst)| inst.result.as_deref().map(|r| (r, i)))
            .collect();

        // roots: chain instructions not absorbed by their unique consumer
        let mut absorbed: BTreeSet<usize> = BTreeSet::new();
        let mut trees: Vec<Tree> = Vec::new();
        for pos in (0..b.body.len()).rev() {
            if absorbed.contains(&pos) || !chain_opcode(b.body[pos].opcode) {
                continue;
            }
            let tree = collect_tree(&b.body, &def_pos, &uses, pos);
            if tree.const_leaves.len() < 2 || tree.links.is_empty() {
                continue; // nothing to group
            }
            absorbed.extend(tree.links.iter().copied());
            trees.push(tree);
        }
        if trees.is_empty() {
            continue;
        }
        trees.sort_by_key(|t| t.root_pos);

        // rebuild the body: drop links, splice the regrouped chain at each root
        let mut new_body: Vec<Instruction> = Vec::with_capacity(b.body.len());
        let all_links: BTreeSet<usize> = trees.iter().flat_map(|t| t.links.clone()).collect();
        let mut by_root: BTreeMap<usize, &Tree> = trees.iter().map(|t| (t.root_pos, t)).collect();
        for (pos, inst) in b.body.iter().enumerate() {
            if all_links.contains(&pos) {
                continue;
            }
            let Some(tree) = by_root.remove(&pos) else {
                new_body.push(inst.clone());
                continue;
            };
            let op = inst.opcode;
            // recycle the absorbed registers for intermediates, root name last
            let mut names: Vec<String> = tree
                .links
                .iter()
                .map(|&lp| b.body[lp].result.clone().unwrap())
                .collect();
            names.push(inst.result.clone().unwrap());
            let mut name_iter = names.into_iter();
            let mut emit = |operands: Vec<Value>, name: String| -> Value {
                new_body.push(Instruction {
                    result: Some(name.clone()),
                    opcode: op,
                    operands,
                    attr: None,
                });
                Value::Reg(name)
            };

            // a tree with L links has L+1 ops and L+2 leaves, so the rebuilt
            // chain consumes exactly the recycled names plus the root
            debug_assert_eq!(
                tree.reg_leaves.len() + tree.const_leaves.len(),
                tree.links.len() + 2
            );
            let mut reg_acc: Option<Value> = None;
            for (i, r) in tree.reg_leaves.iter().enumerate() {
                reg_acc = Some(match reg_acc {
                    None => r.clone(),
                    Some(acc) => {
                        let is_last_instr =
                            i == tree.reg_leaves.len() - 1 && tree.const_leaves.is_empty();
                        debug_assert!(!is_last_instr, "const leaves >= 2");
                        emit(vec![acc, r.clone()], name_iter.next().unwrap())
                    }
                });
            }
            let mut const_acc: Option<Value> = None;
            for (i, c) in tree.const_leaves.iter().enumerate() {
                const_acc = Some(match const_acc {
                    None => Value::Const(*c),
                    Some(acc) => {
                        let last = i == tree.const_leaves.len() - 1 && reg_acc.is_none();
                        let name = if last {
                            inst.result.clone().unwrap()
                        } else {
                            name_iter.next().unwrap()
                        };
                        emit(vec![acc, Value::Const(*c)], name)
                    }
                });
            }
            match (reg_acc, const_acc) {
                (Some(r), Some(c)) => {
                    emit(vec![r, c], inst.result.clone().unwrap());
                }
                (None, Some(_)) => {} // root emitted as the last constant op
                _ => unreachable!("const leaves >= 2"),
            }
        }
        b.body = new_body;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tir::{interpret, parse_text, validate};

    #[test]
    fn groups_constants_for_folding() {
        let src = "
func @main(%x, %y) {
entry:
  %t1 = add %x, 3
  %t2 = add %t1, %y
  %t3 = add %t2, 5
  ret %t3
}
";
        let p = parse_text(src).unwrap();
        let q = run(&p);
        assert!(validate(&q).is_empty(), "{:?}", validate(&q));
        let body = &q.main().blocks[0].body;
        assert_eq!(body.len(), 3);
        // one all-constant op now exists for constfold
        assert!(body
            .iter()
            .any(|i| i.operands.iter().all(|v| v.as_const().is_some())));
        let folded = super::super::constfold::run(&q);
        assert_eq!(folded.main().blocks[0].body.len(), 2);
        for (x, y) in [(0, 0), (5, -3), (100, 7)] {
            assert_eq!(
                interpret(&p, &[x, y], 100).outcome,
                interpret(&q, &[x, y], 100).outcome
            );
        }
    }

    #[test]
    fn canonical_chain_is_untouched() {
        // already regs-then-consts with the constant subchain grouped
        let src = "
func @main(%x, %y) {
entry:
  %c = add 3, 5
  %r = add %x, %c
  ret %r
}
";
        let p = parse_text(src).unwrap();
        assert_eq!(run(&p), p);
    }

    #[test]
    fn single_constant_chain_untouched() {
        let src = "
func @main(%x, %y) {
entry:
  %t1 = add %x, %y
  %t2 = add %t1, 4
  ret %t2
}
";
        let p = parse_text(src).unwrap();
        assert_eq!(run(&p), p);
    }

    #[test]
    fn multi_use_links_are_leaves() {
        // %t1 has two uses: it must stay an instruction and act as a leaf
        let src = "
func @main(%x) {
entry:
  %t1 = add %x, 1
  %t2 = add %t1, 2
  %t3 = add %t2, 3
  %k = mul %t1, %t1
  %r = add %t3, %k
  ret %r
}
";
        let p = parse_text(src).unwrap();
        let q = run(&p);
        assert!(validate(&q).is_empty(), "{:?}", validate(&q));
        for x in [0, 9, -4] {
            assert_eq!(
                interpret(&p, &[x], 100).outcome,
                interpret(&q, &[x], 100).outcome
            );
        }
    }

    #[test]
    fn mixed_opcodes_do_not_chain() {
        let src = "
func @main(%x) {
entry:
  %a = add %x, 3
  %b = mul %a, 5
  %c = add %b, 7
  ret %c
}
";
        let p = parse_text(src).unwrap();
        assert_eq!(run(&p), p);
    }

    #[test]
    fn long_chain_shortens_critical_path() {
        let src = "
func @main(%x, %y, %z) {
entry:
  %t1 = add %x, 3
  %t2 = add %t1, %y
  %t3 = add %t2, 5
  %t4 = add %t3, %z
  %t5 = add %t4, 7
  %t6 = add %t5, %x
  %t7 = add %t6, 11
  %t8 = add %t7, %y
  %t9 = add %t8, 13
  ret %t9
}
";
        let p = parse_text(src).unwrap();
        let q = run(&p);
        assert!(validate(&q).is_empty());
        let before = super::super::cost::estimate_cycles(&p);
        let after = super::super::cost::estimate_cycles(&q);
        assert!(after < before, "{after} < {before}");
        for args in [[1, 2, 3], [0, 0, 0], [-7, 100, 13]] {
            assert_eq!(
                interpret(&p, &args, 100).outcome,
                interpret(&q, &args, 100).outcome
            );
        }
    }
}
