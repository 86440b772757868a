//! Canonical text emission: one instruction per line, two-space indent,
//! blocks in stored order. Byte-deterministic for structurally equal
//! programs, and `parse_text(emit_text(p)) == p`.

use super::{Attr, Instruction, Opcode, Program};
use std::fmt::Write;

pub fn emit_text(p: &Program) -> String {
    let f = p.main();
    let mut out = String::new();
    write!(out, "func @{}(", f.name).unwrap();
    for (i, param) in f.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write!(out, "%{param}").unwrap();
    }
    out.push_str(") {\n");
    for block in &f.blocks {
        writeln!(out, "{}:", block.label).unwrap();
        for inst in block.instructions() {
            out.push_str("  ");
            emit_instruction(&mut out, inst);
            out.push('\n');
        }
    }
    out.push_str("}\n");
    out
}

fn emit_instruction(out: &mut String, inst: &Instruction) {
    if let Some(r) = &inst.result {
        write!(out, "%{r} = ").unwrap();
    }
    match inst.opcode {
        Opcode::Icmp => {
            write!(
                out,
                "icmp {} {}, {}",
                inst.pred().name(),
                inst.operands[0],
                inst.operands[1]
            )
            .unwrap();
        }
        Opcode::Phi => {
            out.push_str("phi ");
            for (i, (label, value)) in inst.phi_incomings().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write!(out, "[{label}: {value}]").unwrap();
            }
        }
        Opcode::Alloca => {
            write!(out, "alloca {}", inst.alloca_size()).unwrap();
        }
        op => {
            out.push_str(op.name());
            for (i, v) in inst.operands.iter().enumerate() {
                out.push_str(if i == 0 { " " } else { ", " });
                write!(out, "{v}").unwrap();
            }
        }
    }
    // attr already rendered for icmp/alloca; no other opcode carries one
    debug_assert!(
        inst.attr.is_none() || matches!(inst.attr, Some(Attr::Pred(_)) | Some(Attr::Size(_)))
    );
    let _ = &inst.attr;
}

#[cfg(test)]
mod tests {
    use super::super::{fixtures, parse_text};
    use super::*;

    #[test]
    fn p1_round_trips_to_canonical_bytes() {
        let p = parse_text(fixtures::P1).unwrap();
        assert_eq!(emit_text(&p), fixtures::P1);
    }

    #[test]
    fn p2_p3_round_trip() {
        for src in [fixtures::P2, fixtures::P3] {
            let p = parse_text(src).unwrap();
            assert_eq!(emit_text(&p), src);
            let again = parse_text(&emit_text(&p)).unwrap();
            assert_eq!(again, p);
        }
    }

    #[test]
    fn equal_programs_emit_identical_bytes() {
        let a = parse_text(fixtures::P3).unwrap();
        let b = parse_text(&emit_text(&a)).unwrap();
        assert_eq!(a, b);
        assert_eq!(emit_text(&a), emit_text(&b));
    }

    #[test]
    fn single_line_source_emits_multiline_canonical() {
        let p = parse_text("func @main() { entry: ret 5 }").unwrap();
        assert_eq!(emit_text(&p), fixtures::P1);
    }
}
