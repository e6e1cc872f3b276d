//! Fine-grained tokenization of Intel-syntax x86-64 instructions.
//!
//! An instruction is split into its prefix/opcode, registers, size keywords,
//! memory-expression punctuation, numbers, symbols and string literals.
//! Commas and whitespace only separate. Numbers are canonicalized to
//! lowercase `0x` hex; [`normalize`] then folds large constants into `[addr]`
//! and string literals into `[str]`.

mod lexer;
mod vocab;

use std::fmt;

use thiserror::Error;

pub use vocab::{build_vocab, encode, Vocabulary, VocabError, VocabEntry};
pub use vocab::{ADDR_ID, CLS_ID, FIRST_REGULAR_ID, MASK_ID, PAD_ID, SEP_ID, STR_ID, UNK_ID};

use lexer::{lex, Lexeme};

pub const ADDR_TOKEN: &str = "[addr]";
pub const STR_TOKEN: &str = "[str]";

/// Constants with at least this many hex digits are folded into `[addr]`.
pub const ADDR_MIN_HEX_DIGITS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unparsable instruction {text:?}: {reason}")]
pub struct UnparsableInstruction {
    pub text: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Opcode,
    Register,
    SizeKeyword,
    Punct,
    Number,
    AddrPlaceholder,
    StrPlaceholder,
    Symbol,
    /// Raw string literal; only present before normalization.
    StringLiteral,
    Special,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub surface: String,
    pub kind: TokenKind,
}

impl Token {
    fn new(surface: impl Into<String>, kind: TokenKind) -> Self {
        Self { surface: surface.into(), kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
}

impl TokenSequence {
    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Space-joined surfaces; the lookup key for an instruction once normalized.
    pub fn key(&self) -> String {
        self.surfaces().join(" ")
    }

    /// Rebuilds a normalized sequence from a key produced by [`TokenSequence::key`].
    /// Token kinds are not recoverable from a key and are reported as `Symbol`
    /// (placeholders keep their placeholder kind).
    pub fn from_key(key: &str) -> Self {
        let tokens = key
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|s| {
                let kind = match s {
                    ADDR_TOKEN => TokenKind::AddrPlaceholder,
                    STR_TOKEN => TokenKind::StrPlaceholder,
                    _ => TokenKind::Symbol,
                };
                Token::new(s, kind)
            })
            .collect();
        Self { tokens }
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// Syntactic class of one operand, as needed by operand-pattern classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperandClass {
    Register,
    Memory,
    /// Numeric immediate below the `[addr]` threshold.
    Constant,
    /// Large immediate or named symbol (call/jump targets, data addresses).
    Address,
    String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedInstruction {
    pub prefixes: Vec<String>,
    pub mnemonic: String,
    pub operands: Vec<OperandClass>,
    pub tokens: TokenSequence,
}

const PREFIXES: &[&str] = &["rep", "repe", "repz", "repne", "repnz", "lock", "bnd", "notrack"];
const SIZE_KEYWORDS: &[&str] = &[
    "byte", "word", "dword", "fword", "qword", "tword", "tbyte", "oword", "xmmword", "ymmword",
    "zmmword",
];
const SEGMENTS: &[&str] = &["cs", "ds", "es", "fs", "gs", "ss"];

pub fn is_register(name: &str) -> bool {
    const FIXED: &[&str] = &[
        "rax", "rbx", "rcx", "rdx", "rsi", "rdi", "rbp", "rsp", "eax", "ebx", "ecx", "edx", "esi",
        "edi", "ebp", "esp", "ax", "bx", "cx", "dx", "si", "di", "bp", "sp", "al", "bl", "cl", "dl",
        "ah", "bh", "ch", "dh", "sil", "dil", "bpl", "spl", "rip", "eip", "ip", "cs", "ds", "es",
        "fs", "gs", "ss",
    ];
    const BANKS: &[(&str, u32)] = &[
        ("xmm", 31),
        ("ymm", 31),
        ("zmm", 31),
        ("mm", 7),
        ("st", 7),
        ("k", 7),
        ("cr", 15),
        ("dr", 15),
    ];
    if FIXED.contains(&name) {
        return true;
    }
    if let Some((n, suffix)) = split_numbered(name, "r") {
        if (8..=15).contains(&n) && ["", "d", "w", "b", "l"].contains(&suffix) {
            return true;
        }
    }
    BANKS
        .iter()
        .any(|&(prefix, max)| matches!(split_numbered(name, prefix), Some((n, "")) if n <= max))
}

/// `prefix` followed by a decimal number without leading zeros, then any suffix.
fn split_numbered<'a>(name: &'a str, prefix: &str) -> Option<(u32, &'a str)> {
    let rest = name.strip_prefix(prefix)?;
    let end = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
    let (digits, suffix) = rest.split_at(end);
    if digits.is_empty() || (digits.len() > 1 && digits.starts_with('0')) {
        return None;
    }
    Some((digits.parse().ok()?, suffix))
}

/// Canonical lowercase hex for a numeric word, or `None` if the word is not a number.
fn canonical_number(word: &str) -> Option<Result<String, String>> {
    let lower = word.to_ascii_lowercase();
    if let Some(hex) = lower.strip_prefix("0x") {
        if hex.is_empty() || !hex.chars().all(|c| c.is_ascii_hexdigit()) {
            return Some(Err(format!("bad hex literal {word:?}")));
        }
        let trimmed = hex.trim_start_matches('0');
        let digits = if trimmed.is_empty() { "0" } else { trimmed };
        return Some(Ok(format!("0x{digits}")));
    }
    if lower.chars().next().is_some_and(|c| c.is_ascii_digit()) {
        if !lower.chars().all(|c| c.is_ascii_digit()) {
            return Some(Err(format!("bad numeric literal {word:?}")));
        }
        return Some(match lower.parse::<u128>() {
            Ok(v) => Ok(format!("{v:#x}")),
            Err(_) => Err(format!("decimal literal {word:?} out of range")),
        });
    }
    None
}

fn hex_digit_count(surface: &str) -> Option<usize> {
    surface.strip_prefix("0x").map(str::len)
}

fn is_identifier(word: &str) -> bool {
    word.chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || matches!(c, '_' | '.' | '$' | '@' | '?'))
}

struct OperandParser<'a> {
    lexemes: &'a [Lexeme],
    pos: usize,
    tokens: Vec<Token>,
}

impl<'a> OperandParser<'a> {
    fn peek(&self) -> Option<&'a Lexeme> {
        self.lexemes.get(self.pos)
    }

    fn peek_at(&self, offset: usize) -> Option<&'a Lexeme> {
        self.lexemes.get(self.pos + offset)
    }

    fn bump(&mut self) -> Option<&'a Lexeme> {
        let l = self.lexemes.get(self.pos);
        self.pos += 1;
        l
    }

    fn punct(&mut self, c: char) {
        self.tokens.push(Token::new(c.to_string(), TokenKind::Punct));
    }

    /// Parses one operand, returning its class.
    fn operand(&mut self) -> Result<OperandClass, String> {
        if let Some(Lexeme::Word(w)) = self.peek() {
            let lw = w.to_ascii_lowercase();
            if SIZE_KEYWORDS.contains(&lw.as_str()) && self.peek_at(1).is_some() {
                self.bump();
                self.tokens.push(Token::new(lw, TokenKind::SizeKeyword));
                if let Some(Lexeme::Word(p)) = self.peek() {
                    if p.eq_ignore_ascii_case("ptr") {
                        self.bump();
                    }
                }
            }
        }

        let mut segment = false;
        if let (Some(Lexeme::Word(w)), Some(Lexeme::Punct(':'))) = (self.peek(), self.peek_at(1)) {
            let lw = w.to_ascii_lowercase();
            if SEGMENTS.contains(&lw.as_str()) {
                self.pos += 2;
                self.tokens.push(Token::new(format!("{lw}:"), TokenKind::Register));
                segment = true;
            }
        }

        match self.peek() {
            Some(Lexeme::Punct('[')) => {
                self.bump();
                self.punct('[');
                self.memory_expression()?;
                match self.bump() {
                    Some(Lexeme::Punct(']')) => self.punct(']'),
                    _ => return Err("unterminated memory operand".into()),
                }
                Ok(OperandClass::Memory)
            }
            Some(Lexeme::Punct(c @ ('-' | '+'))) => {
                let c = *c;
                self.bump();
                match self.bump() {
                    Some(Lexeme::Word(w)) => match canonical_number(w) {
                        Some(Ok(n)) => {
                            if c == '-' {
                                self.punct('-');
                            }
                            Ok(self.number(n, segment))
                        }
                        Some(Err(e)) => Err(e),
                        None => Err(format!("expected number after {c:?}")),
                    },
                    _ => Err(format!("expected number after {c:?}")),
                }
            }
            Some(Lexeme::Word(w)) => {
                self.bump();
                if let Some(n) = canonical_number(w) {
                    return Ok(self.number(n?, segment));
                }
                if segment {
                    return Err("segment override must precede a memory operand".into());
                }
                let lw = w.to_ascii_lowercase();
                if is_register(&lw) {
                    self.tokens.push(Token::new(lw, TokenKind::Register));
                    Ok(OperandClass::Register)
                } else if is_identifier(w) {
                    self.tokens.push(Token::new(w.clone(), TokenKind::Symbol));
                    Ok(OperandClass::Address)
                } else {
                    Err(format!("unexpected operand {w:?}"))
                }
            }
            Some(Lexeme::Str(s)) if !segment => {
                self.bump();
                self.tokens.push(Token::new(s.clone(), TokenKind::StringLiteral));
                Ok(OperandClass::String)
            }
            Some(other) => Err(format!("unexpected {other}")),
            None => Err("missing operand".into()),
        }
    }

    fn number(&mut self, canonical: String, segment: bool) -> OperandClass {
        let large = hex_digit_count(&canonical).unwrap_or(0) >= ADDR_MIN_HEX_DIGITS;
        self.tokens.push(Token::new(canonical, TokenKind::Number));
        if segment {
            OperandClass::Memory
        } else if large {
            OperandClass::Address
        } else {
            OperandClass::Constant
        }
    }

    /// base + index*scale +/- displacement, every part optional but at least one present.
    fn memory_expression(&mut self) -> Result<(), String> {
        let mut expect_term = true;
        let mut terms = 0;
        if let Some(Lexeme::Punct('-')) = self.peek() {
            self.bump();
            self.punct('-');
        }
        loop {
            match self.peek() {
                Some(Lexeme::Word(w)) if expect_term => {
                    self.bump();
                    if let Some(n) = canonical_number(w) {
                        self.tokens.push(Token::new(n?, TokenKind::Number));
                    } else {
                        let lw = w.to_ascii_lowercase();
                        if is_register(&lw) {
                            self.tokens.push(Token::new(lw, TokenKind::Register));
                            if let Some(Lexeme::Punct('*')) = self.peek() {
                                self.bump();
                                self.punct('*');
                                match self.bump() {
                                    Some(Lexeme::Word(s)) => match canonical_number(s) {
                                        Some(n) => {
                                            self.tokens.push(Token::new(n?, TokenKind::Number))
                                        }
                                        None => return Err("scale must be a number".into()),
                                    },
                                    _ => return Err("missing scale".into()),
                                }
                            }
                        } else if is_identifier(w) && !SIZE_KEYWORDS.contains(&lw.as_str()) {
                            self.tokens.push(Token::new(w.clone(), TokenKind::Symbol));
                        } else {
                            return Err(format!("unexpected {w:?} in memory operand"));
                        }
                    }
                    terms += 1;
                    expect_term = false;
                }
                Some(Lexeme::Punct(c @ ('+' | '-'))) if !expect_term => {
                    let c = *c;
                    self.bump();
                    self.punct(c);
                    expect_term = true;
                }
                Some(Lexeme::Punct(']')) if !expect_term && terms > 0 => return Ok(()),
                Some(other) => return Err(format!("unexpected {other} in memory operand")),
                None => return Err("unterminated memory operand".into()),
            }
        }
    }
}

/// Parses one instruction into its token stream plus operand structure.
pub fn parse_instruction(text: &str) -> Result<ParsedInstruction, UnparsableInstruction> {
    let fail = |reason: String| UnparsableInstruction { text: text.to_string(), reason };
    let lexemes = lex(text).map_err(fail)?;

    let mut pos = 0;
    let mut tokens = Vec::new();
    let mut prefixes = Vec::new();
    while let (Some(Lexeme::Word(w)), Some(Lexeme::Word(_))) = (lexemes.get(pos), lexemes.get(pos + 1)) {
        let lw = w.to_ascii_lowercase();
        if !PREFIXES.contains(&lw.as_str()) {
            break;
        }
        tokens.push(Token::new(lw.clone(), TokenKind::Opcode));
        prefixes.push(lw);
        pos += 1;
    }
    let mnemonic = match lexemes.get(pos) {
        Some(Lexeme::Word(w)) if w.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) => {
            w.to_ascii_lowercase()
        }
        Some(other) => return Err(fail(format!("expected mnemonic, found {other}"))),
        None => return Err(fail("empty instruction".into())),
    };
    if is_register(&mnemonic) {
        return Err(fail(format!("expected mnemonic, found register {mnemonic:?}")));
    }
    tokens.push(Token::new(mnemonic.clone(), TokenKind::Opcode));
    pos += 1;

    let mut parser = OperandParser { lexemes: &lexemes, pos, tokens };
    let mut operands = Vec::new();
    if parser.peek().is_some() {
        loop {
            operands.push(parser.operand().map_err(fail)?);
            match parser.bump() {
                None => break,
                Some(Lexeme::Comma) => continue,
                Some(other) => return Err(fail(format!("unexpected {other} after operand"))),
            }
        }
    }
    Ok(ParsedInstruction {
        prefixes,
        mnemonic,
        operands,
        tokens: TokenSequence { tokens: parser.tokens },
    })
}

/// Splits an instruction into raw (unnormalized) tokens.
pub fn tokenize(text: &str) -> Result<TokenSequence, UnparsableInstruction> {
    parse_instruction(text).map(|p| p.tokens)
}

/// Folds string literals into `[str]` and constants with at least five hex
/// digits into `[addr]`; everything else passes through.
pub fn normalize(seq: &TokenSequence) -> TokenSequence {
    let tokens = seq
        .tokens
        .iter()
        .map(|t| match t.kind {
            TokenKind::StringLiteral => Token::new(STR_TOKEN, TokenKind::StrPlaceholder),
            TokenKind::Number
                if hex_digit_count(&t.surface).unwrap_or(0) >= ADDR_MIN_HEX_DIGITS =>
            {
                Token::new(ADDR_TOKEN, TokenKind::AddrPlaceholder)
            }
            _ => t.clone(),
        })
        .collect();
    TokenSequence { tokens }
}

/// `tokenize` followed by `normalize`.
pub fn tokenize_normalized(text: &str) -> Result<TokenSequence, UnparsableInstruction> {
    tokenize(text).map(|s| normalize(&s))
}
