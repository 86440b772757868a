//! TIR — a tiny SSA intermediate representation.
//!
//! Programs hold exactly one function (`@main`) built from labelled basic
//! blocks: a run of `phi`s, a straight-line body, and a single terminator.
//! Twenty opcodes, 64-bit wrapping integer values, and a bounded per-alloca
//! memory model keep the reference interpreter small enough to serve as the
//! semantics oracle for every transformation in `passes`.

mod cfg;
mod emit;
mod interp;
mod parse;
mod validate;

pub use cfg::{analyze_cfg, CfgInfo, NaturalLoop};
pub use emit::emit_text;
pub use interp::{eval_binop, eval_icmp, interpret, ExecResult, Outcome, TrapKind};
pub use parse::{parse_text, ParseError};
pub use validate::{validate, Violation};

/// The canonical fixture programs shipped under `corpus/fixtures/`.
pub mod fixtures {
    pub const P1: &str = include_str!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../corpus/fixtures/ret5.tir"
    ));
    pub const P2: &str = include_str!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../corpus/fixtures/fold.tir"
    ));
    pub const P3: &str = include_str!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../corpus/fixtures/loop.tir"
    ));
}

use std::fmt;

/// The twenty opcodes. Table order is load-bearing: features index opcode
/// counts by this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Opcode {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Shl,
    Shr,
    And,
    Or,
    Xor,
    Icmp,
    Select,
    Phi,
    Load,
    Store,
    Alloca,
    Gep,
    Br,
    Jmp,
    Ret,
}

/// All opcodes in canonical table order.
pub const OPCODES: [Opcode; 20] = [
    Opcode::Add,
    Opcode::Sub,
    Opcode::Mul,
    Opcode::Div,
    Opcode::Rem,
    Opcode::Shl,
    Opcode::Shr,
    Opcode::And,
    Opcode::Or,
    Opcode::Xor,
    Opcode::Icmp,
    Opcode::Select,
    Opcode::Phi,
    Opcode::Load,
    Opcode::Store,
    Opcode::Alloca,
    Opcode::Gep,
    Opcode::Br,
    Opcode::Jmp,
    Opcode::Ret,
];

impl Opcode {
    pub fn name(self) -> &'static str {
        match self {
            Opcode::Add => "add",
            Opcode::Sub => "sub",
            Opcode::Mul => "mul",
            Opcode::Div => "div",
            Opcode::Rem => "rem",
            Opcode::Shl => "shl",
            Opcode::Shr => "shr",
            Opcode::And => "and",
            Opcode::Or => "or",
            Opcode::Xor => "xor",
            Opcode::Icmp => "icmp",
            Opcode::Select => "select",
            Opcode::Phi => "phi",
            Opcode::Load => "load",
            Opcode::Store => "store",
            Opcode::Alloca => "alloca",
            Opcode::Gep => "gep",
            Opcode::Br => "br",
            Opcode::Jmp => "jmp",
            Opcode::Ret => "ret",
        }
    }

    pub fn from_name(s: &str) -> Option<Opcode> {
        OPCODES.iter().copied().find(|op| op.name() == s)
    }

    /// Index in the canonical table (feature schema slot for this opcode).
    pub fn table_index(self) -> usize {
        OPCODES.iter().position(|&op| op == self).unwrap()
    }

    pub fn is_terminator(self) -> bool {
        matches!(self, Opcode::Br | Opcode::Jmp | Opcode::Ret)
    }

    /// The ten two-operand arithmetic/bitwise opcodes (add..xor).
    pub fn is_binary_arith(self) -> bool {
        self.table_index() < 10
    }

    pub fn is_memory(self) -> bool {
        matches!(
            self,
            Opcode::Load | Opcode::Store | Opcode::Alloca | Opcode::Gep
        )
    }

    /// Whether instructions with this opcode produce a result register.
    pub fn has_result(self) -> bool {
        !matches!(self, Opcode::Store | Opcode::Br | Opcode::Jmp | Opcode::Ret)
    }

    /// Number of value/label operands expected (phi is variadic).
    pub fn fixed_arity(self) -> Option<usize> {
        Some(match self {
            Opcode::Phi => return None,
            Opcode::Alloca => 0,
            Opcode::Load | Opcode::Jmp | Opcode::Ret => 1,
            Opcode::Icmp | Opcode::Store | Opcode::Gep => 2,
            Opcode::Select | Opcode::Br => 3,
            _ => 2, // binary arithmetic
        })
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Signed comparison predicates for `icmp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IcmpPred {
    Eq,
    Ne,
    Slt,
    Sle,
    Sgt,
    Sge,
}

impl IcmpPred {
    pub fn name(self) -> &'static str {
        match self {
            IcmpPred::Eq => "eq",
            IcmpPred::Ne => "ne",
            IcmpPred::Slt => "slt",
            IcmpPred::Sle => "sle",
            IcmpPred::Sgt => "sgt",
            IcmpPred::Sge => "sge",
        }
    }

    pub fn from_name(s: &str) -> Option<IcmpPred> {
        match s {
            "eq" => Some(IcmpPred::Eq),
            "ne" => Some(IcmpPred::Ne),
            "slt" => Some(IcmpPred::Slt),
            "sle" => Some(IcmpPred::Sle),
            "sgt" => Some(IcmpPred::Sgt),
            "sge" => Some(IcmpPred::Sge),
            _ => None,
        }
    }
}

/// Per-instruction attribute: the icmp predicate or the alloca slot count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Attr {
    Pred(IcmpPred),
    Size(u64),
}

/// An operand: a register reference, a 64-bit constant, or a block label.
/// Labels are only legal in terminator and phi positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Reg(String),
    Const(i64),
    Label(String),
}

impl Value {
    pub fn as_reg(&self) -> Option<&str> {
        match self {
            Value::Reg(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_const(&self) -> Option<i64> {
        match self {
            Value::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn as_label(&self) -> Option<&str> {
        match self {
            Value::Label(l) => Some(l),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Reg(r) => write!(f, "%{r}"),
            Value::Const(c) => write!(f, "{c}"),
            Value::Label(l) => f.write_str(l),
        }
    }
}

/// One instruction. Phi operands are stored flat as
/// `[Label(pred1), value1, Label(pred2), value2, ...]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub result: Option<String>,
    pub opcode: Opcode,
    pub operands: Vec<Value>,
    pub attr: Option<Attr>,
}

impl Instruction {
    pub fn new(result: Option<&str>, opcode: Opcode, operands: Vec<Value>) -> Instruction {
        Instruction {
            result: result.map(str::to_owned),
            opcode,
            operands,
            attr: None,
        }
    }

    /// Iterate a phi's `(predecessor label, value)` pairs.
    pub fn phi_incomings(&self) -> impl Iterator<Item = (&str, &Value)> {
        debug_assert_eq!(self.opcode, Opcode::Phi);
        self.operands.chunks(2).map(|pair| {
            let label = pair[0].as_label().expect("phi pair starts with a label");
            (label, &pair[1])
        })
    }

    /// Value operands only (labels excluded; phi incoming values included).
    pub fn value_operands(&self) -> impl Iterator<Item = &Value> {
        self.operands
            .iter()
            .filter(|v| !matches!(v, Value::Label(_)))
    }

    pub fn value_operands_mut(&mut self) -> impl Iterator<Item = &mut Value> {
        self.operands
            .iter_mut()
            .filter(|v| !matches!(v, Value::Label(_)))
    }

    /// The icmp predicate; panics if this is not an icmp with one.
    pub fn pred(&self) -> IcmpPred {
        match self.attr {
            Some(Attr::Pred(p)) => p,
            _ => panic!("instruction has no icmp predicate"),
        }
    }

    /// The alloca slot count; panics if this is not an alloca with one.
    pub fn alloca_size(&self) -> u64 {
        match self.attr {
            Some(Attr::Size(n)) => n,
            _ => panic!("instruction has no alloca size"),
        }
    }
}

/// A basic block: phis at the head, straight-line body, one terminator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub label: String,
    pub phis: Vec<Instruction>,
    pub body: Vec<Instruction>,
    pub terminator: Instruction,
}

impl BasicBlock {
    /// All instructions in execution order: phis, body, terminator.
    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> {
        self.phis
            .iter()
            .chain(self.body.iter())
            .chain(std::iter::once(&self.terminator))
    }

    /// Total instruction count including phis and the terminator.
    pub fn size(&self) -> usize {
        self.phis.len() + self.body.len() + 1
    }

    /// Labels this block's terminator can transfer to, in terminator order,
    /// deduplicated.
    pub fn successor_labels(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for v in &self.terminator.operands {
            if let Value::Label(l) = v {
                if !out.contains(&l.as_str()) {
                    out.push(l);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: Vec<String>,
    pub blocks: Vec<BasicBlock>,
}

impl Function {
    pub fn entry(&self) -> &BasicBlock {
        &self.blocks[0]
    }

    pub fn block(&self, label: &str) -> Option<&BasicBlock> {
        self.blocks.iter().find(|b| b.label == label)
    }

    pub fn block_mut(&mut self, label: &str) -> Option<&mut BasicBlock> {
        self.blocks.iter_mut().find(|b| b.label == label)
    }

    /// All instructions of all blocks in layout order.
    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> {
        self.blocks.iter().flat_map(|b| b.instructions())
    }
}

/// A whole program. The spec of this IR allows exactly one function, `@main`;
/// `validate` enforces that.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub functions: Vec<Function>,
}

impl Program {
    pub fn main(&self) -> &Function {
        &self.functions[0]
    }

    pub fn main_mut(&mut self) -> &mut Function {
        &mut self.functions[0]
    }
}
