//! Reference interpreter: 64-bit wrapping arithmetic, per-alloca slot
//! arrays, fuel-bounded execution. Traps are ordinary outcomes, not errors,
//! so transformed programs can be compared trap-for-trap.
//!
//! Addresses encode as `allocation_id << 32 | offset` with ids starting at 1,
//! so integer 0 is never a valid address and `gep` is plain wrapping
//! addition. Allocation ids are assigned in execution order. Programs must
//! reach memory through the register holding the alloca result (directly or
//! via gep); forging addresses numerically is outside the model the memory
//! passes assume.

use super::{IcmpPred, Opcode, Program, Value};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrapKind {
    DivByZero,
    OobMemory,
    FuelExhausted,
    MalformedPhi,
}

impl TrapKind {
    pub fn name(self) -> &'static str {
        match self {
            TrapKind::DivByZero => "div_by_zero",
            TrapKind::OobMemory => "oob_memory",
            TrapKind::FuelExhausted => "fuel_exhausted",
            TrapKind::MalformedPhi => "malformed_phi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Return(i64),
    Trap(TrapKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecResult {
    pub outcome: Outcome,
    pub steps_used: u64,
}

/// Two's-complement wrapping semantics shared by the interpreter and the
/// constant folder. Shift amounts are taken modulo 64; `shr` is arithmetic.
pub fn eval_binop(op: Opcode, a: i64, b: i64) -> Result<i64, TrapKind> {
    Ok(match op {
        Opcode::Add => a.wrapping_add(b),
        Opcode::Sub => a.wrapping_sub(b),
        Opcode::Mul => a.wrapping_mul(b),
        Opcode::Div => {
            if b == 0 {
                return Err(TrapKind::DivByZero);
            }
            a.wrapping_div(b)
        }
        Opcode::Rem => {
            if b == 0 {
                return Err(TrapKind::DivByZero);
            }
            a.wrapping_rem(b)
        }
        Opcode::Shl => a.wrapping_shl((b & 63) as u32),
        Opcode::Shr => a.wrapping_shr((b & 63) as u32),
        Opcode::And => a & b,
        Opcode::Or => a | b,
        Opcode::Xor => a ^ b,
        other => panic!("eval_binop on non-arithmetic opcode {other}"),
    })
}

pub fn eval_icmp(pred: IcmpPred, a: i64, b: i64) -> i64 {
    let r = match pred {
        IcmpPred::Eq => a == b,
        IcmpPred::Ne => a != b,
        IcmpPred::Slt => a < b,
        IcmpPred::Sle => a <= b,
        IcmpPred::Sgt => a > b,
        IcmpPred::Sge => a >= b,
    };
    r as i64
}

const OFFSET_BITS: u32 = 32;
const OFFSET_MASK: u64 = (1 << OFFSET_BITS) - 1;

struct Machine<'p> {
    program: &'p Program,
    regs: HashMap<&'p str, i64>,
    allocations: Vec<Vec<i64>>,
    fuel_left: u64,
    steps: u64,
}

enum Flow<'p> {
    Jump(&'p str),
    Return(i64),
}

impl<'p> Machine<'p> {
    fn value(&self, v: &'p Value) -> i64 {
        match v {
            Value::Const(c) => *c,
            Value::Reg(r) => *self
                .regs
                .get(r.as_str())
                .expect("validated program: registers defined before use"),
            Value::Label(_) => panic!("label evaluated as a value"),
        }
    }

    fn charge(&mut self) -> Result<(), TrapKind> {
        if self.fuel_left == 0 {
            return Err(TrapKind::FuelExhausted);
        }
        self.fuel_left -= 1;
        self.steps += 1;
        Ok(())
    }

    fn decode_addr(&self, addr: i64) -> Result<(usize, usize), TrapKind> {
        let bits = addr as u64;
        let id = (bits >> OFFSET_BITS) as usize;
        let off = (bits & OFFSET_MASK) as usize;
        if id == 0 || id > self.allocations.len() {
            return Err(TrapKind::OobMemory);
        }
        if off >= self.allocations[id - 1].len() {
            return Err(TrapKind::OobMemory);
        }
        Ok((id - 1, off))
    }

    fn run_block(&mut self, label: &'p str, came_from: Option<&'p str>) -> Result<Flow<'p>, TrapKind> {
        let block = self
            .program
            .main()
            .block(label)
            .expect("validated program: branch targets exist");

        // Phis read their incoming values atomically from the edge taken.
        if !block.phis.is_empty() {
            let Some(pred) = came_from else {
                return Err(TrapKind::MalformedPhi);
            };
            let mut updates: Vec<(&'p str, i64)> = Vec::with_capacity(block.phis.len());
            for phi in &block.phis {
                self.charge()?;
                let incoming = phi
                    .phi_incomings()
                    .find(|(l, _)| *l == pred)
                    .map(|(_, v)| v);
                let Some(v) = incoming else {
                    return Err(TrapKind::MalformedPhi);
                };
                updates.push((phi.result.as_deref().unwrap(), self.value(v)));
            }
            for (r, v) in updates {
                self.regs.insert(r, v);
            }
        }

        for inst in &block.body {
            self.charge()?;
            let result = match inst.opcode {
                op if op.is_binary_arith() => {
                    eval_binop(op, self.value(&inst.operands[0]), self.value(&inst.operands[1]))?
                }
                Opcode::Icmp => eval_icmp(
                    inst.pred(),
                    self.value(&inst.operands[0]),
                    self.value(&inst.operands[1]),
                ),
                Opcode::Select => {
                    if self.value(&inst.operands[0]) != 0 {
                        self.value(&inst.operands[1])
                    } else {
                        self.value(&inst.operands[2])
                    }
                }
                Opcode::Alloca => {
                    let size = inst.alloca_size() as usize;
                    self.allocations.push(vec![0; size]);
                    ((self.allocations.len() as u64) << OFFSET_BITS) as i64
                }
                Opcode::Gep => self.value(&inst.operands[0]).wrapping_add(self.value(&inst.operands[1])),
                Opcode::Load => {
                    let (id, off) = self.decode_addr(self.value(&inst.operands[0]))?;
                    self.allocations[id][off]
                }
                Opcode::Store => {
                    let v = self.value(&inst.operands[0]);
                    let (id, off) = self.decode_addr(self.value(&inst.operands[1]))?;
                    self.allocations[id][off] = v;
                    continue;
                }
                other => panic!("unexpected opcode {other} in block body"),
            };
            self.regs.insert(inst.result.as_deref().unwrap(), result);
        }

        self.charge()?;
        let term = &block.terminator;
        Ok(match term.opcode {
            Opcode::Ret => Flow::Return(self.value(&term.operands[0])),
            Opcode::Jmp => Flow::Jump(term.operands[0].as_label().unwrap()),
            Opcode::Br => {
                let taken = if self.value(&term.operands[0]) != 0 {
                    term.operands[1].as_label().unwrap()
                } else {
                    term.operands[2].as_label().unwrap()
                };
                Flow::Jump(taken)
            }
            other => panic!("unexpected terminator {other}"),
        })
    }
}

/// Execute a validated program. `args` bind positionally to the parameters;
/// every executed instruction (phis and terminators included) costs one fuel.
pub fn interpret(p: &Program, args: &[i64], fuel: u64) -> ExecResult {
    let f = p.main();
    assert_eq!(
        args.len(),
        f.params.len(),
        "argument count must match parameter count"
    );
    let mut m = Machine {
        program: p,
        regs: f
            .params
            .iter()
            .map(String::as_str)
            .zip(args.iter().copied())
            .collect(),
        allocations: Vec::new(),
        fuel_left: fuel,
        steps: 0,
    };

    let mut current: &str = &f.blocks[0].label;
    let mut came_from: Option<&str> = None;
    loop {
        match m.run_block(current, came_from) {
            Ok(Flow::Return(v)) => {
                return ExecResult {
                    outcome: Outcome::Return(v),
                    steps_used: m.steps,
                }
            }
            Ok(Flow::Jump(next)) => {
                came_from = Some(current);
                current = next;
            }
            Err(trap) => {
                return ExecResult {
                    outcome: Outcome::Trap(trap),
                    steps_used: m.steps,
                }
            }
        }
    }
}
