//! Text syntax: `3.5*x1^2*x3 - x2`. Coefficients may be juxtaposed with the
//! monomial (`2x1`), and parentheses are accepted so model files can write
//! factored expressions such as `-(z1 + 3)*(x1^2 + x3)`.

use std::iter::Peekable;
use std::str::CharIndices;

use thiserror::Error;

use super::Polynomial;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("polynomial syntax error at byte {pos}: {msg}")]
pub struct ParsePolyError {
    pub pos: usize,
    pub msg: String,
}

/// `["x1", …, "xn"]`.
pub fn default_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParsePolyError> {
    let mut out = Vec::new();
    let mut it: Peekable<CharIndices> = src.char_indices().peekable();
    while let Some(&(pos, ch)) = it.peek() {
        let tok = match ch {
            c if c.is_whitespace() => {
                it.next();
                continue;
            }
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            c if c.is_ascii_digit() || c == '.' => {
                let mut end = pos;
                let bytes = src.as_bytes();
                while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                    end += 1;
                }
                // exponent part only when followed by digits
                if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                    let mut k = end + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        end = k;
                    }
                }
                let text = &src[pos..end];
                let v: f64 = text.parse().map_err(|_| ParsePolyError {
                    pos,
                    msg: format!("bad number `{text}`"),
                })?;
                while it.peek().is_some_and(|&(p, _)| p < end) {
                    it.next();
                }
                out.push((pos, Tok::Num(v)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut end = pos;
                let bytes = src.as_bytes();
                while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                    end += 1;
                }
                while it.peek().is_some_and(|&(p, _)| p < end) {
                    it.next();
                }
                out.push((pos, Tok::Ident(src[pos..end].to_string())));
                continue;
            }
            other => {
                return Err(ParsePolyError {
                    pos,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        };
        it.next();
        out.push((pos, tok));
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    at: usize,
    names: &'a [String],
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn err(&self, msg: impl Into<String>) -> ParsePolyError {
        ParsePolyError {
            pos: self.pos(),
            msg: msg.into(),
        }
    }

    fn expr(&mut self) -> Result<Polynomial, ParsePolyError> {
        let n = self.names.len();
        let mut acc = Polynomial::zero(n);
        let mut first = true;
        loop {
            let sign = match self.peek() {
                Some(Tok::Plus) => {
                    self.at += 1;
                    1.0
                }
                Some(Tok::Minus) => {
                    self.at += 1;
                    -1.0
                }
                _ if first => 1.0,
                _ => break,
            };
            first = false;
            let t = self.term()?;
            acc = &acc + &t.scale(sign);
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Polynomial, ParsePolyError> {
        let mut acc = self.power()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.at += 1;
                    let rhs = self.power()?;
                    acc = &acc * &rhs;
                }
                Some(Tok::Num(_)) | Some(Tok::Ident(_)) | Some(Tok::LParen) => {
                    let rhs = self.power()?;
                    acc = &acc * &rhs;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn power(&mut self) -> Result<Polynomial, ParsePolyError> {
        let base = self.primary()?;
        if let Some(Tok::Caret) = self.peek() {
            self.at += 1;
            match self.peek().cloned() {
                Some(Tok::Num(v)) if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => {
                    self.at += 1;
                    return Ok(base.pow(v as u32));
                }
                _ => return Err(self.err("exponent must be a non-negative integer")),
            }
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Polynomial, ParsePolyError> {
        let n = self.names.len();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.at += 1;
                Ok(Polynomial::constant(n, v))
            }
            Some(Tok::Ident(name)) => {
                let idx = self
                    .names
                    .iter()
                    .position(|v| *v == name)
                    .ok_or_else(|| self.err(format!("unknown variable `{name}`")))?;
                self.at += 1;
                Ok(Polynomial::var(n, idx))
            }
            Some(Tok::LParen) => {
                self.at += 1;
                let inner = self.expr()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.at += 1;
                        Ok(inner)
                    }
                    _ => Err(self.err("expected `)`")),
                }
            }
            Some(Tok::Minus) => {
                self.at += 1;
                Ok(-self.power()?)
            }
            Some(t) => Err(self.err(format!("unexpected token {t:?}"))),
            None => Err(self.err("unexpected end of input")),
        }
    }
}

impl Polynomial {
    /// Parses over variables `x1..x{nvars}`.
    pub fn parse(src: &str, nvars: usize) -> Result<Self, ParsePolyError> {
        Self::parse_with(src, &default_names(nvars))
    }

    /// Parses over an explicit variable list; variable `i` of the result is
    /// `names[i]`.
    pub fn parse_with(src: &str, names: &[String]) -> Result<Self, ParsePolyError> {
        let toks = lex(src)?;
        if toks.is_empty() {
            return Err(ParsePolyError {
                pos: 0,
                msg: "empty polynomial".into(),
            });
        }
        let mut p = Parser {
            toks,
            at: 0,
            names,
            end: src.len(),
        };
        let out = p.expr()?;
        if p.at != p.toks.len() {
            return Err(p.err("trailing input"));
        }
        Ok(out)
    }
}

impl std::str::FromStr for Polynomial {
    type Err = ParsePolyError;

    /// Infers the variable count from the highest `x<i>` mentioned.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let toks = lex(s)?;
        let mut n = 0;
        for (pos, t) in &toks {
            if let Tok::Ident(name) = t {
                let idx = name
                    .strip_prefix('x')
                    .and_then(|d| d.parse::<usize>().ok())
                    .filter(|&i| i >= 1)
                    .ok_or_else(|| ParsePolyError {
                        pos: *pos,
                        msg: format!("unknown variable `{name}`"),
                    })?;
                n = n.max(idx);
            }
        }
        Self::parse(s, n.max(1))
    }
}
