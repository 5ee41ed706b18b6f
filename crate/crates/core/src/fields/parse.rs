//! Recursive-descent parser for the expression grammar.
//!
//! Precedence, loosest to tightest: `+ -`, `* /`, unary `-`, `^`
//! (right associative), atoms. Identifiers start with a letter and
//! continue with letters, digits, or underscores; an identifier
//! followed by `(` must be one of the known function names. Every
//! error carries the byte offset where it was detected.

use super::ast::{Expr, Func};
use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { offset: usize, name: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownFunction { offset, .. } => *offset,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0 }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Returns the next token with its starting byte offset, or `None`
    /// at end of input.
    fn next(&mut self) -> Result<Option<(usize, Tok)>, ParseError> {
        self.skip_ws();
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'0'..=b'9' | b'.' => self.lex_number(start)?,
            c if c.is_ascii_alphabetic() => {
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
                Tok::Ident(name)
            }
            other => {
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{}`", other as char),
                })
            }
        };
        Ok(Some((start, tok)))
    }

    fn lex_number(&mut self, start: usize) -> Result<Tok, ParseError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if self.pos < self.src.len() && (self.src[self.pos] | 0x20) == b'e' {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && (self.src[self.pos] == b'+' || self.src[self.pos] == b'-') {
                self.pos += 1;
            }
            if self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                // `e` not followed by digits belongs to the next token.
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>().map(Tok::Num).map_err(|_| ParseError::Syntax {
            offset: start,
            message: format!("invalid number literal `{text}`"),
        })
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    cursor: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&(usize, Tok)> {
        self.toks.get(self.cursor)
    }

    fn bump(&mut self) -> Option<(usize, Tok)> {
        let t = self.toks.get(self.cursor).cloned();
        if t.is_some() {
            self.cursor += 1;
        }
        t
    }

    fn here(&self) -> usize {
        self.peek().map(|(o, _)| *o).unwrap_or(self.end)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some((_, tok)) = self.peek() {
            let op = match tok {
                Tok::Plus => Expr::Add as fn(_, _) -> _,
                Tok::Minus => Expr::Sub as fn(_, _) -> _,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            lhs = op(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some((_, tok)) = self.peek() {
            let op = match tok {
                Tok::Star => Expr::Mul as fn(_, _) -> _,
                Tok::Slash => Expr::Div as fn(_, _) -> _,
                _ => break,
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = op(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if matches!(self.peek(), Some((_, Tok::Minus))) {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if matches!(self.peek(), Some((_, Tok::Caret))) {
            self.bump();
            // Right associative; a unary minus is admitted in the
            // exponent (`x^-2`).
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let offset = self.here();
        match self.bump() {
            Some((_, Tok::Num(v))) => Ok(Expr::Num(v)),
            Some((_, Tok::Ident(name))) => {
                if matches!(self.peek(), Some((_, Tok::LParen))) {
                    let func = Func::from_name(&name)
                        .ok_or(ParseError::UnknownFunction { offset, name })?;
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    Ok(Expr::Call(func, Box::new(arg)))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Some((_, Tok::LParen)) => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some((o, tok)) => Err(ParseError::Syntax {
                offset: o,
                message: format!("expected expression, found `{tok:?}`"),
            }),
            None => Err(ParseError::Syntax {
                offset,
                message: "unexpected end of input, expected expression".to_string(),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.bump() {
            Some((_, Tok::RParen)) => Ok(()),
            Some((o, tok)) => Err(ParseError::Syntax {
                offset: o,
                message: format!("expected `)`, found `{tok:?}`"),
            }),
            None => Err(ParseError::Syntax {
                offset: self.end,
                message: "unexpected end of input, expected `)`".to_string(),
            }),
        }
    }
}

/// Parses a source string into an expression tree.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let mut lexer = Lexer::new(src);
    let mut toks = Vec::new();
    while let Some(t) = lexer.next()? {
        toks.push(t);
    }
    let mut parser = Parser { toks, cursor: 0, end: src.len() };
    let expr = parser.expr()?;
    if let Some((o, tok)) = parser.peek() {
        return Err(ParseError::Syntax {
            offset: *o,
            message: format!("unexpected trailing token `{tok:?}`"),
        });
    }
    Ok(expr)
}
