//! Concrete syntax for primitive trees.
//!
//! ```text
//! expr := "Zero"
//!       | "One" "(" CUR ")"
//!       | "Scale" "(" NAT "," expr ")"
//!       | "ScaleObs" "(" ADDR "," expr ")"
//!       | "Give" "(" expr ")"
//!       | "And" "(" expr "," expr ")"
//!       | "Or" "(" expr "," expr ")"
//!       | "If" "(" ADDR "," expr "," expr ")"
//!       | "Timebound" "(" NAT "," NAT "," expr ")"
//!       | "At" "(" NAT "," expr ")"
//!       | "Before" "(" NAT "," expr ")"
//!       | "After" "(" NAT "," expr ")"
//! ```
//!
//! `At`, `Before` and `After` are expanded while parsing, so the printer
//! never reproduces them.

use std::fmt;

use num_bigint::BigUint;
use thiserror::Error;

use crate::ast::{self, is_address_char, Address, Currency, Delta, Primitive, Timestamp};

/// Nesting bound that keeps recursion off the end of the stack.
pub const MAX_NESTING: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: expected {}, found {found}", expected.join(" or "))]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: Vec<String>,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    LParen,
    RParen,
    Comma,
    Bad(char),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) => write!(f, "'{w}'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::Comma => f.write_str("','"),
            Tok::Bad(c) => write!(f, "{c:?}"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Vec<Spanned> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut column) = (1, 1);
    while let Some(&c) = chars.peek() {
        let (start_line, start_col) = (line, column);
        if c == '\n' {
            chars.next();
            line += 1;
            column = 1;
            continue;
        }
        if c.is_whitespace() {
            chars.next();
            column += 1;
            continue;
        }
        let tok = if is_address_char(c) {
            let mut word = String::new();
            while let Some(&c) = chars.peek() {
                if !is_address_char(c) {
                    break;
                }
                word.push(c);
                chars.next();
                column += 1;
            }
            Tok::Word(word)
        } else {
            chars.next();
            column += 1;
            match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                other => Tok::Bad(other),
            }
        };
        out.push(Spanned { tok, line: start_line, column: start_col });
    }
    out.push(Spanned { tok: Tok::Eof, line, column });
    out
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    delta: Delta,
}

const KEYWORDS: &[&str] =
    &["Zero", "One", "Scale", "ScaleObs", "Give", "And", "Or", "If", "Timebound", "At", "Before", "After"];

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Spanned {
        let t = self.tokens[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, at: &Spanned, expected: &[&str]) -> ParseError {
        ParseError {
            line: at.line,
            column: at.column,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: at.tok.to_string(),
        }
    }

    fn expect(&mut self, tok: Tok, name: &str) -> Result<(), ParseError> {
        if self.peek().tok == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error_at(self.peek(), &[name]))
        }
    }

    fn word(&mut self, what: &str) -> Result<(Spanned, String), ParseError> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Word(w) => {
                let w = w.clone();
                self.bump();
                Ok((t, w))
            }
            _ => Err(self.error_at(&t, &[what])),
        }
    }

    fn nat(&mut self) -> Result<BigUint, ParseError> {
        let (at, w) = self.word("natural number")?;
        if !w.bytes().all(|b| b.is_ascii_digit()) {
            return Err(self.error_at(&at, &["natural number"]));
        }
        Ok(w.parse().expect("decimal digits"))
    }

    fn timestamp(&mut self) -> Result<Timestamp, ParseError> {
        let at = self.peek().clone();
        let n = self.nat()?;
        Timestamp::try_from(&n).map_err(|_| self.error_at(&at, &["timestamp no larger than 2^64 - 1"]))
    }

    fn address(&mut self) -> Result<Address, ParseError> {
        let (_, w) = self.word("address")?;
        Ok(Address::new(w).expect("lexer only yields address characters"))
    }

    fn currency(&mut self) -> Result<Currency, ParseError> {
        let (at, w) = self.word("currency")?;
        Currency::new(w).map_err(|_| self.error_at(&at, &["currency (1-8 uppercase letters)"]))
    }

    fn comma(&mut self) -> Result<(), ParseError> {
        self.expect(Tok::Comma, "','")
    }

    fn sub(&mut self, nesting: usize) -> Result<Box<Primitive>, ParseError> {
        self.expr(nesting + 1).map(Box::new)
    }

    fn expr(&mut self, nesting: usize) -> Result<Primitive, ParseError> {
        let head = self.peek().clone();
        if nesting > MAX_NESTING {
            return Err(self.error_at(&head, &[&format!("nesting depth at most {MAX_NESTING}")]));
        }
        let keyword = match &head.tok {
            Tok::Word(w) => KEYWORDS.iter().position(|k| k == w),
            _ => None,
        };
        let Some(keyword) = keyword else {
            return Err(self.error_at(&head, &["primitive"]));
        };
        self.bump();
        if keyword == 0 {
            return Ok(Primitive::Zero);
        }
        self.expect(Tok::LParen, "'('")?;
        let p = self.production(keyword, nesting)?;
        self.expect(Tok::RParen, "')'")?;
        Ok(p)
    }

    // Each production lives in its own small function so that the
    // recursive path keeps a small stack frame in unoptimized builds.
    fn production(&mut self, keyword: usize, nesting: usize) -> Result<Primitive, ParseError> {
        match KEYWORDS[keyword] {
            "One" => Ok(Primitive::One(self.currency()?)),
            "Scale" => self.scale(nesting),
            "ScaleObs" => self.scale_obs(nesting),
            "Give" => Ok(Primitive::Give(self.sub(nesting)?)),
            "And" => self.pair(nesting).map(|(l, r)| Primitive::And(l, r)),
            "Or" => self.pair(nesting).map(|(l, r)| Primitive::Or(l, r)),
            "If" => self.if_(nesting),
            "Timebound" => self.timebound(nesting),
            sugar => self.sugar(sugar, nesting),
        }
    }

    fn scale(&mut self, nesting: usize) -> Result<Primitive, ParseError> {
        let k = self.nat()?;
        self.comma()?;
        Ok(Primitive::Scale(k, self.sub(nesting)?))
    }

    fn scale_obs(&mut self, nesting: usize) -> Result<Primitive, ParseError> {
        let a = self.address()?;
        self.comma()?;
        Ok(Primitive::ScaleObs(a, self.sub(nesting)?))
    }

    fn pair(&mut self, nesting: usize) -> Result<(Box<Primitive>, Box<Primitive>), ParseError> {
        let l = self.sub(nesting)?;
        self.comma()?;
        Ok((l, self.sub(nesting)?))
    }

    fn if_(&mut self, nesting: usize) -> Result<Primitive, ParseError> {
        let a = self.address()?;
        self.comma()?;
        let (t, e) = self.pair(nesting)?;
        Ok(Primitive::If(a, t, e))
    }

    fn timebound(&mut self, nesting: usize) -> Result<Primitive, ParseError> {
        let t0 = self.timestamp()?;
        self.comma()?;
        let t1 = self.timestamp()?;
        self.comma()?;
        Ok(Primitive::Timebound(t0, t1, self.sub(nesting)?))
    }

    fn sugar(&mut self, name: &str, nesting: usize) -> Result<Primitive, ParseError> {
        let t = self.timestamp()?;
        self.comma()?;
        let p = *self.sub(nesting)?;
        Ok(match name {
            "At" => ast::at(t, p, self.delta),
            "Before" => ast::before(t, p),
            _ => ast::after(t, p),
        })
    }
}

/// Parses a whole expression; `delta` is used to expand `At`.
pub fn parse(text: &str, delta: Delta) -> Result<Primitive, ParseError> {
    let mut parser = Parser { tokens: lex(text), pos: 0, delta };
    let p = parser.expr(0)?;
    match parser.peek().tok {
        Tok::Eof => Ok(p),
        _ => Err(parser.error_at(parser.peek(), &["end of input"])),
    }
}

/// Canonical rendering: no sugar, one space after each comma.
pub fn pretty_print(p: &Primitive) -> String {
    p.to_string()
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Primitive::Zero => f.write_str("Zero"),
            Primitive::One(c) => write!(f, "One({c})"),
            Primitive::Scale(k, p) => write!(f, "Scale({k}, {p})"),
            Primitive::ScaleObs(a, p) => write!(f, "ScaleObs({a}, {p})"),
            Primitive::Give(p) => write!(f, "Give({p})"),
            Primitive::And(l, r) => write!(f, "And({l}, {r})"),
            Primitive::Or(l, r) => write!(f, "Or({l}, {r})"),
            Primitive::If(a, t, e) => write!(f, "If({a}, {t}, {e})"),
            Primitive::Timebound(t0, t1, p) => write!(f, "Timebound({t0}, {t1}, {p})"),
        }
    }
}
