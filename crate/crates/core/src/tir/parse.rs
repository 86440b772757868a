//! Text format parser. Free-form whitespace, `#` line comments, and
//! positions tracked for error reporting.

use super::{Attr, BasicBlock, Function, IcmpPred, Instruction, Opcode, Program, Value};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Reg(String),
    Int(i64),
    Punct(char),
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Lexer<'a> {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            col: self.col,
            message: message.into(),
        }
    }

    fn bump(&mut self) -> u8 {
        let c = self.src[self.pos];
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        c
    }

    fn skip_trivia(&mut self) {
        while self.pos < self.src.len() {
            match self.src[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' => {
                    self.bump();
                }
                b'#' => {
                    while self.pos < self.src.len() && self.src[self.pos] != b'\n' {
                        self.bump();
                    }
                }
                _ => break,
            }
        }
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.bump();
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn next(&mut self) -> Result<Option<Spanned>, ParseError> {
        self.skip_trivia();
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let (line, col) = (self.line, self.col);
        let c = self.src[self.pos];
        let tok = match c {
            b'(' | b')' | b'{' | b'}' | b':' | b',' | b'[' | b']' | b'=' | b'@' => {
                self.bump();
                Tok::Punct(c as char)
            }
            b'%' => {
                self.bump();
                let name = self.ident();
                if name.is_empty() {
                    return Err(self.err("expected register name after '%'"));
                }
                Tok::Reg(name)
            }
            b'-' | b'0'..=b'9' => {
                let start = self.pos;
                if c == b'-' {
                    self.bump();
                    if self.pos >= self.src.len() || !self.src[self.pos].is_ascii_digit() {
                        return Err(self.err("expected digits after '-'"));
                    }
                }
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.bump();
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let n: i64 = text.parse().map_err(|_| ParseError {
                    line,
                    col,
                    message: format!("integer literal out of 64-bit range: {text}"),
                })?;
                Tok::Int(n)
            }
            _ if c.is_ascii_alphabetic() || c == b'_' => Tok::Ident(self.ident()),
            _ => return Err(self.err(format!("unexpected character {:?}", c as char))),
        };
        Ok(Some(Spanned { tok, line, col }))
    }
}

struct Parser {
    toks: Vec<Spanned>,
    idx: usize,
    end_line: usize,
    end_col: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|s| &s.tok)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.idx + 1).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.idx)
            .map(|s| (s.line, s.col))
            .unwrap_or((self.end_line, self.end_col))
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        let (line, col) = self.here();
        ParseError {
            line,
            col,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<Spanned, ParseError> {
        let s = self
            .toks
            .get(self.idx)
            .cloned()
            .ok_or_else(|| self.err("unexpected end of input"))?;
        self.idx += 1;
        Ok(s)
    }

    fn expect_punct(&mut self, c: char) -> Result<(), ParseError> {
        let s = self.next()?;
        match s.tok {
            Tok::Punct(p) if p == c => Ok(()),
            other => Err(ParseError {
                line: s.line,
                col: s.col,
                message: format!("expected '{c}', found {}", tok_name(&other)),
            }),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<String, ParseError> {
        let s = self.next()?;
        match s.tok {
            Tok::Ident(name) => Ok(name),
            other => Err(ParseError {
                line: s.line,
                col: s.col,
                message: format!("expected {what}, found {}", tok_name(&other)),
            }),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        let (line, col) = self.here();
        let name = self.expect_ident(&format!("'{kw}'"))?;
        if name != kw {
            return Err(ParseError {
                line,
                col,
                message: format!("expected '{kw}', found '{name}'"),
            });
        }
        Ok(())
    }

    fn value(&mut self) -> Result<Value, ParseError> {
        let s = self.next()?;
        match s.tok {
            Tok::Reg(r) => Ok(Value::Reg(r)),
            Tok::Int(n) => Ok(Value::Const(n)),
            other => Err(ParseError {
                line: s.line,
                col: s.col,
                message: format!("expected register or integer, found {}", tok_name(&other)),
            }),
        }
    }

    fn label(&mut self) -> Result<String, ParseError> {
        self.expect_ident("block label")
    }
}

fn tok_name(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Reg(r) => format!("register %{r}"),
        Tok::Int(n) => format!("integer {n}"),
        Tok::Punct(c) => format!("'{c}'"),
    }
}

/// Parse the textual IR format into a `Program`. Structural rules beyond the
/// grammar (SSA, dominance, phi agreement) are `validate`'s job.
pub fn parse_text(source: &str) -> Result<Program, ParseError> {
    let mut lx = Lexer::new(source);
    let mut toks = Vec::new();
    while let Some(t) = lx.next()? {
        toks.push(t);
    }
    let mut p = Parser {
        toks,
        idx: 0,
        end_line: lx.line,
        end_col: lx.col,
    };

    p.expect_keyword("func")?;
    p.expect_punct('@')?;
    let name = p.expect_ident("function name")?;
    p.expect_punct('(')?;
    let mut params = Vec::new();
    if !matches!(p.peek(), Some(Tok::Punct(')'))) {
        loop {
            let s = p.next()?;
            match s.tok {
                Tok::Reg(r) => params.push(r),
                other => {
                    return Err(ParseError {
                        line: s.line,
                        col: s.col,
                        message: format!("expected parameter register, found {}", tok_name(&other)),
                    })
                }
            }
            if matches!(p.peek(), Some(Tok::Punct(','))) {
                p.next()?;
            } else {
                break;
            }
        }
    }
    p.expect_punct(')')?;
    p.expect_punct('{')?;

    let mut blocks = Vec::new();
    while !matches!(p.peek(), Some(Tok::Punct('}'))) {
        blocks.push(parse_block(&mut p)?);
    }
    p.expect_punct('}')?;
    if p.peek().is_some() {
        return Err(p.err("trailing input after function body"));
    }
    if blocks.is_empty() {
        return Err(p.err("function has no blocks"));
    }

    Ok(Program {
        functions: vec![Function {
            name,
            params,
            blocks,
        }],
    })
}

fn parse_block(p: &mut Parser) -> Result<BasicBlock, ParseError> {
    let label = p.expect_ident("block label")?;
    p.expect_punct(':')?;

    let mut phis = Vec::new();
    let mut body = Vec::new();
    loop {
        let inst = parse_instruction(p)?;
        if inst.opcode.is_terminator() {
            return Ok(BasicBlock {
                label,
                phis,
                body,
                terminator: inst,
            });
        }
        if inst.opcode == Opcode::Phi {
            if !body.is_empty() {
                return Err(p.err("phi after non-phi instruction"));
            }
            phis.push(inst);
        } else {
            body.push(inst);
        }
    }
}

fn parse_instruction(p: &mut Parser) -> Result<Instruction, ParseError> {
    let s = p.next()?;
    match s.tok {
        // %r = <op> ...
        Tok::Reg(result) => {
            p.expect_punct('=')?;
            let (line, col) = p.here();
            let opname = p.expect_ident("opcode")?;
            let opcode = Opcode::from_name(&opname).ok_or_else(|| ParseError {
                line,
                col,
                message: format!("unknown opcode '{opname}'"),
            })?;
            if !opcode.has_result() {
                return Err(ParseError {
                    line,
                    col,
                    message: format!("opcode '{opname}' produces no result"),
                });
            }
            parse_op_tail(p, Some(result), opcode, line, col)
        }
        Tok::Ident(word) => {
            let (line, col) = (s.line, s.col);
            match word.as_str() {
                "store" => {
                    let v = p.value()?;
                    p.expect_punct(',')?;
                    let addr = p.value()?;
                    Ok(Instruction::new(None, Opcode::Store, vec![v, addr]))
                }
                "br" => {
                    let c = p.value()?;
                    p.expect_punct(',')?;
                    let t = p.label()?;
                    p.expect_punct(',')?;
                    let e = p.label()?;
                    Ok(Instruction::new(
                        None,
                        Opcode::Br,
                        vec![c, Value::Label(t), Value::Label(e)],
                    ))
                }
                "jmp" => {
                    let t = p.label()?;
                    Ok(Instruction::new(None, Opcode::Jmp, vec![Value::Label(t)]))
                }
                "ret" => {
                    let v = p.value()?;
                    Ok(Instruction::new(None, Opcode::Ret, vec![v]))
                }
                other => {
                    // A bare opcode like `add` with no result/operand shape.
                    let message = if Opcode::from_name(other).is_some() {
                        format!("arity mismatch: opcode '{other}' needs a result register and operands")
                    } else {
                        format!("expected instruction, found '{other}'")
                    };
                    Err(ParseError { line, col, message })
                }
            }
        }
        other => Err(ParseError {
            line: s.line,
            col: s.col,
            message: format!("expected instruction, found {}", tok_name(&other)),
        }),
    }
}

fn parse_op_tail(
    p: &mut Parser,
    result: Option<String>,
    opcode: Opcode,
    line: usize,
    col: usize,
) -> Result<Instruction, ParseError> {
    let mut inst = Instruction {
        result,
        opcode,
        operands: Vec::new(),
        attr: None,
    };
    match opcode {
        Opcode::Icmp => {
            let (pl, pc) = p.here();
            let pname = p.expect_ident("icmp predicate")?;
            let pred = IcmpPred::from_name(&pname).ok_or_else(|| ParseError {
                line: pl,
                col: pc,
                message: format!("unknown icmp predicate '{pname}'"),
            })?;
            inst.attr = Some(Attr::Pred(pred));
            inst.operands.push(p.value()?);
            p.expect_punct(',')?;
            inst.operands.push(p.value()?);
        }
        Opcode::Select => {
            for i in 0..3 {
                if i > 0 {
                    p.expect_punct(',')?;
                }
                inst.operands.push(p.value()?);
            }
        }
        Opcode::Phi => {
            loop {
                p.expect_punct('[')?;
                let l = p.label()?;
                p.expect_punct(':')?;
                let v = p.value()?;
                p.expect_punct(']')?;
                inst.operands.push(Value::Label(l));
                inst.operands.push(v);
                if matches!(p.peek(), Some(Tok::Punct(',')))
                    && matches!(p.peek2(), Some(Tok::Punct('[')))
                {
                    p.next()?;
                } else {
                    break;
                }
            }
        }
        Opcode::Load => {
            inst.operands.push(p.value()?);
        }
        Opcode::Alloca => {
            let s = p.next()?;
            match s.tok {
                Tok::Int(n) if n > 0 => inst.attr = Some(Attr::Size(n as u64)),
                Tok::Int(n) => {
                    return Err(ParseError {
                        line: s.line,
                        col: s.col,
                        message: format!("alloca size must be positive, found {n}"),
                    })
                }
                other => {
                    return Err(ParseError {
                        line: s.line,
                        col: s.col,
                        message: format!("expected alloca size, found {}", tok_name(&other)),
                    })
                }
            }
        }
        Opcode::Gep => {
            inst.operands.push(p.value()?);
            p.expect_punct(',')?;
            inst.operands.push(p.value()?);
        }
        op if op.is_binary_arith() => {
            inst.operands.push(p.value()?);
            p.expect_punct(',')?;
            inst.operands.push(p.value()?);
        }
        _ => {
            return Err(ParseError {
                line,
                col,
                message: format!("opcode '{opcode}' cannot appear here"),
            })
        }
    }
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures;
    use super::*;

    #[test]
    fn smallest_program() {
        let p = parse_text(fixtures::P1).unwrap();
        let f = p.main();
        assert_eq!(f.name, "main");
        assert!(f.params.is_empty());
        assert_eq!(f.blocks.len(), 1);
        let b = &f.blocks[0];
        assert_eq!(b.label, "entry");
        assert!(b.phis.is_empty() && b.body.is_empty());
        assert_eq!(b.terminator.opcode, Opcode::Ret);
        assert_eq!(b.terminator.operands, vec![Value::Const(5)]);
    }

    #[test]
    fn straight_line_arith() {
        let p = parse_text(fixtures::P2).unwrap();
        let b = &p.main().blocks[0];
        assert_eq!(b.body.len(), 2);
        assert_eq!(b.body[0].opcode, Opcode::Add);
        assert_eq!(b.body[1].opcode, Opcode::Mul);
        assert_eq!(b.terminator.opcode, Opcode::Ret);
        assert_eq!(b.size(), 3);
    }

    #[test]
    fn bare_opcode_is_arity_mismatch() {
        let err = parse_text("func @main() { entry: add }").unwrap_err();
        assert!(err.message.contains("arity mismatch"), "{err}");
        assert_eq!(err.line, 1);
    }

    #[test]
    fn unknown_opcode_reported() {
        let err = parse_text("func @main() { entry: %a = frobnicate 1, 2 }").unwrap_err();
        assert!(err.message.contains("unknown opcode"), "{err}");
    }

    #[test]
    fn missing_operand_reported_with_position() {
        let err = parse_text("func @main() {\nentry:\n  %a = add 1\n  ret %a\n}").unwrap_err();
        assert_eq!(err.line, 4);
        assert!(err.message.contains("expected ','"), "{err}");
    }

    #[test]
    fn phi_and_loop_parse() {
        let p = parse_text(fixtures::P3).unwrap();
        let f = p.main();
        assert_eq!(f.params, vec!["n".to_string()]);
        assert_eq!(f.blocks.len(), 3);
        let loop_b = f.block("loop").unwrap();
        assert_eq!(loop_b.phis.len(), 2);
        assert_eq!(loop_b.phis[0].phi_incomings().count(), 2);
        assert_eq!(loop_b.terminator.opcode, Opcode::Br);
    }

    #[test]
    fn comments_and_negative_constants() {
        let src = "# header\nfunc @main() {\nentry: # block\n  %a = add -7, 2\n  ret %a\n}";
        let p = parse_text(src).unwrap();
        assert_eq!(p.main().blocks[0].body[0].operands[0], Value::Const(-7));
    }

    #[test]
    fn phi_after_body_rejected() {
        let src = "func @main() { entry: jmp l l: %a = add 1, 2 %p = phi [entry: 1] ret %p }";
        let err = parse_text(src).unwrap_err();
        assert!(err.message.contains("phi after non-phi"), "{err}");
    }
}
