//! Opcode and operand-pattern taxonomies used to build outlier sets.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::tokenizer::{parse_instruction, OperandClass};

pub const DATA_MOVEMENT: &str = "Data Movement";
pub const UNARY: &str = "Unary Operations";
pub const BINARY: &str = "Binary Operations";
pub const SHIFT: &str = "Shift Operations";
pub const SPECIAL_ARITH: &str = "Special Arithmetic Operations";
pub const COMPARISON: &str = "Comparison and Test Instructions";
pub const COND_SET: &str = "Conditional Set Instructions";
pub const JUMP: &str = "Jump Instructions";
pub const COND_MOVE: &str = "Conditional Move Instructions";
pub const PROCEDURE: &str = "Procedure Call Instructions";
pub const STRING: &str = "String Instructions";
pub const FLOAT_ARITH: &str = "Floating Point Arithmetic";

/// Category rows in table order. `mov` appears under both data movement and
/// string instructions; the first row wins.
pub const OPCODE_TABLE: [(&str, &[&str]); 12] = [
    (DATA_MOVEMENT, &["mov", "push", "pop", "cwtl", "cltq", "cqto", "cqtd"]),
    (UNARY, &["inc", "dec", "neg", "not"]),
    (BINARY, &["lea", "leaq", "add", "sub", "imul", "xor", "or", "and"]),
    (SHIFT, &["sal", "sar", "shr", "shl"]),
    (SPECIAL_ARITH, &["imulq", "mulq", "idivq", "divq"]),
    (COMPARISON, &["cmp", "test"]),
    (
        COND_SET,
        &[
            "sete", "setz", "setne", "setnz", "sets", "setns", "setg", "setnle", "setge", "setnl", "setl",
            "setnge", "setle", "setng", "seta", "setnbe", "setae", "setnb", "setbe", "setna",
        ],
    ),
    (
        JUMP,
        &[
            "jmp", "je", "jz", "jne", "jnz", "js", "jns", "jg", "jnle", "jge", "jnl", "jl", "jnge", "jle", "jng",
            "ja", "jnbe", "jae", "jnb", "jb", "jnae", "jbe", "jna",
        ],
    ),
    (
        COND_MOVE,
        &[
            "cmove", "cmovz", "cmovne", "cmovenz", "cmovs", "cmovns", "cmovg", "cmovnle", "cmovge", "cmovnl",
            "cmovnge", "cmovle", "cmovng", "cmova", "cmovnbe", "cmovae", "cmovnb", "cmovb", "cmovnae", "cmovbe",
            "cmovna",
        ],
    ),
    (PROCEDURE, &["call", "leave", "ret", "retn"]),
    (
        STRING,
        &["cmps", "cmpsb", "cmpsl", "cmpsw", "lods", "lodsb", "lodsl", "lodsw", "mov", "movsb", "movsl", "movsw"],
    ),
    (
        FLOAT_ARITH,
        &[
            "fabs", "fadd", "faddp", "fchs", "fdiv", "fdivp", "fdivr", "fdivrp", "fiadd", "fidivr", "fimul",
            "fisub", "fisubr", "fmul", "fmulp", "fprem", "fpreml", "frndint", "fscale", "fsqrt", "fsub", "fsubp",
            "fsubr", "fsubrp", "fxtract",
        ],
    ),
];

/// Operand-list categories: arity plus the syntactic class of each operand.
pub const OPERAND_CATEGORIES: [&str; 10] =
    ["none", "addr", "ref", "reg-reg", "reg-addr", "reg-cnst", "reg-ref", "ref-cnst", "ref-reg", "tri"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Taxonomy {
    Opcode,
    Operand,
}

impl fmt::Display for Taxonomy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Taxonomy::Opcode => "opcode",
            Taxonomy::Operand => "operand",
        })
    }
}

impl FromStr for Taxonomy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "opcode" => Ok(Taxonomy::Opcode),
            "operand" => Ok(Taxonomy::Operand),
            other => Err(format!("unknown taxonomy {other:?} (expected opcode or operand)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CategoryRules {
    opcodes: HashMap<&'static str, &'static str>,
}

impl Default for CategoryRules {
    fn default() -> Self {
        let mut opcodes = HashMap::new();
        for (cat, ops) in OPCODE_TABLE {
            for op in ops {
                opcodes.entry(*op).or_insert(cat);
            }
        }
        Self { opcodes }
    }
}

impl CategoryRules {
    /// Exact mnemonic lookup; prefixes such as `rep` are ignored.
    pub fn classify_opcode(&self, text: &str) -> Result<&'static str, EvalError> {
        let p = parse_instruction(text)?;
        self.opcodes.get(p.mnemonic.as_str()).copied().ok_or(EvalError::UnlistedOpcode(p.mnemonic))
    }

    pub fn classify_operands(&self, text: &str) -> Result<&'static str, EvalError> {
        use OperandClass::*;
        let p = parse_instruction(text)?;
        let cat = match p.operands.as_slice() {
            [] => "none",
            [Address] => "addr",
            [Memory] => "ref",
            [Register, Register] => "reg-reg",
            [Register, Address] => "reg-addr",
            [Register, Constant] => "reg-cnst",
            [Register, Memory] => "reg-ref",
            [Memory, Constant] => "ref-cnst",
            [Memory, Register] => "ref-reg",
            [_, _, _] => "tri",
            other => return Err(EvalError::UnlistedPattern(pattern_name(other))),
        };
        Ok(cat)
    }

    pub fn classify(&self, taxonomy: Taxonomy, text: &str) -> Result<&'static str, EvalError> {
        match taxonomy {
            Taxonomy::Opcode => self.classify_opcode(text),
            Taxonomy::Operand => self.classify_operands(text),
        }
    }
}

fn pattern_name(ops: &[OperandClass]) -> String {
    if ops.is_empty() {
        return "none".into();
    }
    ops.iter()
        .map(|o| match o {
            OperandClass::Register => "reg",
            OperandClass::Memory => "ref",
            OperandClass::Constant => "cnst",
            OperandClass::Address => "addr",
            OperandClass::String => "str",
        })
        .collect::<Vec<_>>()
        .join("-")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mov_resolves_to_data_movement() {
        let r = CategoryRules::default();
        assert_eq!(r.classify_opcode("mov rax, rbx").unwrap(), DATA_MOVEMENT);
        assert_eq!(r.classify_opcode("movsb").unwrap(), STRING);
    }

    #[test]
    fn lookup_is_exact() {
        let r = CategoryRules::default();
        assert_eq!(r.classify_opcode("cmovenz rax, rbx").unwrap(), COND_MOVE);
        assert!(matches!(r.classify_opcode("cmovnz rax, rbx"), Err(EvalError::UnlistedOpcode(m)) if m == "cmovnz"));
        assert!(matches!(r.classify_opcode("nop"), Err(EvalError::UnlistedOpcode(_))));
        assert_eq!(r.classify_opcode("rep movsb").unwrap(), STRING);
    }

    #[test]
    fn unlisted_operand_patterns() {
        let r = CategoryRules::default();
        for text in ["push rbx", "push 0x10", "mov qword [rax], 0x401000"] {
            assert!(matches!(r.classify_operands(text), Err(EvalError::UnlistedPattern(_))), "{text}");
        }
        assert!(matches!(r.classify_operands("mov rax,"), Err(EvalError::Unparsable(_))));
    }

    #[test]
    fn symbol_targets_are_addresses() {
        let r = CategoryRules::default();
        assert_eq!(r.classify_operands("call memcpy").unwrap(), "addr");
        assert_eq!(r.classify_operands("lea rdi, 0x4a5b60").unwrap(), "reg-addr");
    }

    #[test]
    fn taxonomy_parses() {
        assert_eq!("operand".parse::<Taxonomy>().unwrap(), Taxonomy::Operand);
        assert!("opcodes".parse::<Taxonomy>().is_err());
    }
}
