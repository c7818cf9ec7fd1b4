//! Prefix s-expression syntax for [`Expr`].
//!
//! ```text
//! (+ (* 0.5 (* v0 (abs v0))) (pow v1 2))
//! ```
//!
//! Operators: `+` (n-ary), `-` (unary negation or left-folded difference),
//! `*` (left-folded product), `neg`, `pow <expr> <int>`, `abs`, `max`, `min`
//! (left-folded), `exp`, `sin`, `cos`. Variables are written `v<index>`.

use thiserror::Error;

use crate::expr::{Expr, SmoothKind};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("at byte {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Token<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(src: &str) -> Vec<(usize, Token<'_>)> {
    let mut out = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => {
                out.push((i, Token::Open));
                i += 1;
            }
            b')' => {
                out.push((i, Token::Close));
                i += 1;
            }
            c if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len()
                    && !bytes[i].is_ascii_whitespace()
                    && bytes[i] != b'('
                    && bytes[i] != b')'
                {
                    i += 1;
                }
                out.push((start, Token::Atom(&src[start..i])));
            }
        }
    }
    out
}

struct Parser<'a> {
    tokens: Vec<(usize, Token<'a>)>,
    at: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, pos: usize, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            pos,
            msg: msg.into(),
        })
    }

    fn pos(&self) -> usize {
        self.tokens.get(self.at).map_or(self.end, |t| t.0)
    }

    fn next(&mut self) -> Option<(usize, Token<'a>)> {
        let t = self.tokens.get(self.at).cloned();
        self.at += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        match self.next() {
            None => self.err(self.end, "unexpected end of input"),
            Some((p, Token::Close)) => self.err(p, "unexpected `)`"),
            Some((p, Token::Atom(a))) => atom(a).ok_or(ParseError {
                pos: p,
                msg: format!("unknown atom `{a}`"),
            }),
            Some((p, Token::Open)) => {
                let op = match self.next() {
                    Some((_, Token::Atom(a))) => a,
                    _ => return self.err(p, "expected operator after `(`"),
                };
                if op == "pow" {
                    let base = self.expr()?;
                    let kpos = self.pos();
                    let k = match self.next() {
                        Some((_, Token::Atom(a))) => a.parse::<u32>().ok().filter(|k| *k >= 1),
                        _ => None,
                    };
                    let Some(k) = k else {
                        return self.err(kpos, "pow exponent must be a positive integer");
                    };
                    self.close(p)?;
                    return Ok(base.powi(k));
                }
                let mut args = Vec::new();
                while !matches!(self.tokens.get(self.at), Some((_, Token::Close)) | None) {
                    args.push(self.expr()?);
                }
                self.close(p)?;
                build(op, args).map_err(|msg| ParseError { pos: p, msg })
            }
        }
    }

    fn close(&mut self, open_pos: usize) -> Result<(), ParseError> {
        match self.next() {
            Some((_, Token::Close)) => Ok(()),
            Some((p, _)) => self.err(p, "expected `)`"),
            None => self.err(open_pos, "unbalanced `(`"),
        }
    }
}

fn atom(a: &str) -> Option<Expr> {
    if let Some(idx) = a.strip_prefix('v') {
        return idx.parse::<usize>().ok().map(Expr::Variable);
    }
    a.parse::<f64>()
        .ok()
        .filter(|c| c.is_finite())
        .map(Expr::Constant)
}

fn fold2(args: Vec<Expr>, op: &str, f: fn(Expr, Expr) -> Expr) -> Result<Expr, String> {
    if args.len() < 2 {
        return Err(format!("`{op}` needs at least two arguments"));
    }
    let mut it = args.into_iter();
    let first = it.next().unwrap();
    Ok(it.fold(first, f))
}

fn unary(args: Vec<Expr>, op: &str) -> Result<Expr, String> {
    let mut args = args;
    if args.len() != 1 {
        return Err(format!("`{op}` takes exactly one argument"));
    }
    Ok(args.pop().unwrap())
}

fn build(op: &str, args: Vec<Expr>) -> Result<Expr, String> {
    match op {
        "+" => {
            if args.is_empty() {
                Err("`+` needs at least one argument".into())
            } else {
                Ok(Expr::Sum(args))
            }
        }
        "-" => match args.len() {
            0 => Err("`-` needs at least one argument".into()),
            1 => Ok(-args.into_iter().next().unwrap()),
            _ => {
                let mut it = args.into_iter();
                let mut terms = vec![it.next().unwrap()];
                terms.extend(it.map(|e| -e));
                Ok(Expr::Sum(terms))
            }
        },
        "*" => fold2(args, op, |a, b| a * b),
        "max" => fold2(args, op, Expr::max),
        "min" => fold2(args, op, Expr::min),
        "neg" => Ok(-unary(args, op)?),
        "abs" => Ok(unary(args, op)?.abs()),
        "exp" => Ok(Expr::Smooth(SmoothKind::Exp, Box::new(unary(args, op)?))),
        "sin" => Ok(Expr::Smooth(SmoothKind::Sin, Box::new(unary(args, op)?))),
        "cos" => Ok(Expr::Smooth(SmoothKind::Cos, Box::new(unary(args, op)?))),
        other => Err(format!("unknown operator `{other}`")),
    }
}

pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        tokens: tokenize(src),
        at: 0,
        end: src.len(),
    };
    let e = p.expr()?;
    if p.at < p.tokens.len() {
        return p.err(p.pos(), "trailing input");
    }
    Ok(e)
}
