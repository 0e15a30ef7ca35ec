//! Text form of polynomials: `+`, `-`, `*`, `^` with integer powers,
//! decimal coefficients, and declared variable names (`t` is always
//! available). The printer in [`super::Polynomial::to_string_with`] emits
//! this grammar, and parse-then-print is the identity on canonical form.

use super::Polynomial;

/// Parse failure with the byte offset of the offending token.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message} at position {pos}")]
pub struct ParseError {
    pub pos: usize,
    pub message: String,
}

fn err<T>(pos: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { pos, message: message.into() })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                toks.push((i, Tok::Plus));
                i += 1;
            }
            '-' | '\u{2212}' => {
                toks.push((i, Tok::Minus));
                i += c.len_utf8();
            }
            '*' => {
                toks.push((i, Tok::Star));
                i += 1;
            }
            '^' => {
                toks.push((i, Tok::Caret));
                i += 1;
            }
            '(' => {
                toks.push((i, Tok::LParen));
                i += 1;
            }
            ')' => {
                toks.push((i, Tok::RParen));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let lit = &text[start..i];
                match lit.parse::<f64>() {
                    Ok(v) => toks.push((start, Tok::Num(v))),
                    Err(_) => return err(start, format!("invalid number literal '{lit}'")),
                }
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                toks.push((start, Tok::Name(text[start..i].to_string())));
            }
            _ => return err(i, format!("unexpected character '{c}'")),
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    names: &'a [String],
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn bump(&mut self) -> Option<(usize, Tok)> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn n_x(&self) -> usize {
        self.names.len()
    }

    // expr := ['+'|'-'] term (('+'|'-') term)*
    fn expr(&mut self) -> Result<Polynomial, ParseError> {
        let mut negate = false;
        match self.peek() {
            Some(Tok::Plus) => {
                self.bump();
            }
            Some(Tok::Minus) => {
                negate = true;
                self.bump();
            }
            _ => {}
        }
        let mut acc = self.term()?;
        if negate {
            acc = acc.scale(-1.0);
        }
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    let t = self.term()?;
                    acc = acc.add(&t).expect("same dimension");
                }
                Some(Tok::Minus) => {
                    self.bump();
                    let t = self.term()?;
                    acc = acc.sub(&t).expect("same dimension");
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    // term := factor ('*' factor)*
    fn term(&mut self) -> Result<Polynomial, ParseError> {
        let mut acc = self.factor()?;
        while matches!(self.peek(), Some(Tok::Star)) {
            self.bump();
            let f = self.factor()?;
            acc = acc.mul(&f).expect("same dimension");
        }
        Ok(acc)
    }

    // factor := base ('^' uint)?
    fn factor(&mut self) -> Result<Polynomial, ParseError> {
        let base = self.base()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.bump();
            let pos = self.here();
            match self.bump() {
                Some((p, Tok::Num(v))) => {
                    if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
                        return err(p, format!("exponent must be a nonnegative integer, got {v}"));
                    }
                    let e = v as u32;
                    let mut acc = Polynomial::constant(1.0, self.n_x());
                    for _ in 0..e {
                        acc = acc.mul(&base).expect("same dimension");
                    }
                    Ok(acc)
                }
                _ => err(pos, "expected integer exponent after '^'"),
            }
        } else {
            Ok(base)
        }
    }

    // base := number | name | '(' expr ')'
    fn base(&mut self) -> Result<Polynomial, ParseError> {
        let pos = self.here();
        match self.bump() {
            Some((_, Tok::Num(v))) => Ok(Polynomial::constant(v, self.n_x())),
            Some((p, Tok::Name(name))) => {
                if name == "t" {
                    return Ok(Polynomial::time(self.n_x()));
                }
                match self.names.iter().position(|n| *n == name) {
                    Some(i) => Ok(Polynomial::state(i, self.n_x())),
                    None => err(p, format!("unknown variable name '{name}'")),
                }
            }
            Some((_, Tok::LParen)) => {
                let inner = self.expr()?;
                let pos = self.here();
                match self.bump() {
                    Some((_, Tok::RParen)) => Ok(inner),
                    _ => err(pos, "expected ')'"),
                }
            }
            Some((p, tok)) => err(p, format!("unexpected token {tok:?}")),
            None => err(pos, "unexpected end of expression"),
        }
    }
}

/// Parses `text` over the declared state `names`; `t` always denotes time.
pub fn parse_polynomial(text: &str, names: &[String]) -> Result<Polynomial, ParseError> {
    let toks = tokenize(text)?;
    if toks.is_empty() {
        return err(0, "empty expression");
    }
    let mut parser = Parser { toks, pos: 0, names, end: text.len() };
    let poly = parser.expr()?;
    if parser.pos != parser.toks.len() {
        let (p, tok) = parser.toks[parser.pos].clone();
        return err(p, format!("unexpected trailing token {tok:?}"));
    }
    Ok(poly)
}
