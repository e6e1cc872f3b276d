use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(super) enum Lexeme {
    Word(String),
    Punct(char),
    Str(String),
    Comma,
}

impl fmt::Display for Lexeme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lexeme::Word(w) => write!(f, "{w:?}"),
            Lexeme::Punct(c) => write!(f, "'{c}'"),
            Lexeme::Str(s) => write!(f, "string {s:?}"),
            Lexeme::Comma => f.write_str("','"),
        }
    }
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$' | '@' | '?')
}

pub(super) fn lex(text: &str) -> Result<Vec<Lexeme>, String> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(start, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            ',' => {
                chars.next();
                out.push(Lexeme::Comma);
            }
            '[' | ']' | '+' | '-' | '*' | ':' => {
                chars.next();
                out.push(Lexeme::Punct(c));
            }
            '"' | '\'' => {
                chars.next();
                let mut s = String::from(c);
                let mut closed = false;
                while let Some((_, d)) = chars.next() {
                    s.push(d);
                    if d == '\\' {
                        if let Some((_, e)) = chars.next() {
                            s.push(e);
                        }
                    } else if d == c {
                        closed = true;
                        break;
                    }
                }
                if !closed {
                    return Err("unterminated string literal".into());
                }
                out.push(Lexeme::Str(s));
            }
            c if is_word_char(c) => {
                let mut end = start;
                while let Some(&(i, d)) = chars.peek() {
                    if !is_word_char(d) {
                        break;
                    }
                    end = i + d.len_utf8();
                    chars.next();
                }
                let word = &text[start..end];
                // x87 stack registers written as st(N)
                if word.eq_ignore_ascii_case("st") && text[end..].starts_with('(') {
                    let tail = &text[end..];
                    let bytes = tail.as_bytes();
                    if bytes.len() >= 3 && bytes[1].is_ascii_digit() && bytes[2] == b')' {
                        out.push(Lexeme::Word(format!("st{}", bytes[1] as char)));
                        for _ in 0..3 {
                            chars.next();
                        }
                        continue;
                    }
                }
                out.push(Lexeme::Word(word.to_string()));
            }
            other => return Err(format!("unexpected character {other:?}")),
        }
    }
    Ok(out)
}
