//! Arithmetic expressions for user-defined coefficient functions.
//!
//! Grammar: `+ - * / ^` with standard precedence (`^` above unary minus,
//! unary minus above `* /`, those above `+ -`), left associativity for the
//! four binary operators, right associativity for `^`, parentheses, the
//! variable `x`, decimal literals (with optional exponent), and the
//! functions `sin cos exp tanh cosh sech abs sqrt`.

use std::fmt;

use thiserror::Error;

use crate::scalar::{cast, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("syntax error at byte {pos}: {message}")]
pub struct ParseError {
    pub pos: usize,
    pub message: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("expression is not finite at x = {x}")]
    NonFinite { x: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
    Cosh,
    Sech,
    Abs,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
            Func::Cosh => "cosh",
            Func::Sech => "sech",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "tanh" => Func::Tanh,
            "cosh" => Func::Cosh,
            "sech" => Func::Sech,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

/// Abstract syntax tree of a single-variable expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    X,
    Lit(f64),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Parses `src`; see the module docs for the grammar.
    pub fn parse(src: &str) -> Result<Self, ParseError> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens: &tokens, idx: 0, src_len: src.len() };
        let e = p.expr()?;
        if p.idx != p.tokens.len() {
            return Err(ParseError { pos: p.tokens[p.idx].0, message: "unexpected trailing input".into() });
        }
        Ok(e)
    }

    /// Evaluates at `x`, propagating NaN/inf silently.
    pub fn eval_lossy<T: Scalar>(&self, x: T) -> T {
        match self {
            Expr::X => x,
            Expr::Lit(v) => cast(*v),
            Expr::Neg(e) => -e.eval_lossy(x),
            Expr::Bin(op, l, r) => {
                let a = l.eval_lossy(x);
                let b = r.eval_lossy(x);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, e) => {
                let v = e.eval_lossy(x);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Tanh => v.tanh(),
                    Func::Cosh => v.cosh(),
                    Func::Sech => T::one() / v.cosh(),
                    Func::Abs => v.abs(),
                    Func::Sqrt => v.sqrt(),
                }
            }
        }
    }

    /// Evaluates at `x`, reporting a domain error when the result is not finite.
    pub fn eval<T: Scalar>(&self, x: T) -> Result<T, EvalError> {
        let v = self.eval_lossy(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite { x: x.to_f64().unwrap_or(f64::NAN) })
        }
    }

    fn prec(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Pow, ..) => 4,
            _ => 5,
        }
    }
}

/// Canonical rendering: minimal parentheses, stable under re-parsing.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn paren(f: &mut fmt::Formatter<'_>, e: &Expr, need: bool) -> fmt::Result {
            if need {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::X => write!(f, "x"),
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                paren(f, e, e.prec() < 3 || matches!(**e, Expr::Neg(_)))
            }
            Expr::Bin(op, l, r) => {
                let p = self.prec();
                let (sym, spaced) = match op {
                    BinOp::Add => ("+", true),
                    BinOp::Sub => ("-", true),
                    BinOp::Mul => ("*", false),
                    BinOp::Div => ("/", false),
                    BinOp::Pow => ("^", false),
                };
                let (lp, rp) = if *op == BinOp::Pow {
                    (l.prec() <= p, r.prec() < p)
                } else {
                    (l.prec() < p, r.prec() <= p)
                };
                paren(f, l, lp)?;
                if spaced {
                    write!(f, " {sym} ")?;
                } else {
                    write!(f, "{sym}")?;
                }
                paren(f, r, rp)
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
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

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => { out.push((i, Tok::Plus)); i += 1; }
            '-' => { out.push((i, Tok::Minus)); i += 1; }
            '*' => { out.push((i, Tok::Star)); i += 1; }
            '/' => { out.push((i, Tok::Slash)); i += 1; }
            '^' => { out.push((i, Tok::Caret)); i += 1; }
            '(' => { out.push((i, Tok::LParen)); i += 1; }
            ')' => { out.push((i, Tok::RParen)); i += 1; }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
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
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| ParseError {
                    pos: start,
                    message: format!("invalid number literal `{text}`"),
                })?;
                out.push((start, Tok::Num(v)));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(src[start..i].to_string())));
            }
            _ => {
                return Err(ParseError { pos: i, message: format!("unexpected character `{c}`") });
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [(usize, Tok)],
    idx: usize,
    src_len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.idx).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.tokens.get(self.idx).map_or(self.src_len, |(p, _)| *p)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.idx).map(|(_, t)| t.clone());
        self.idx += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        let pos = self.pos();
        match self.bump() {
            Some(t) if t == want => Ok(()),
            _ => Err(ParseError { pos, message: format!("expected {what}") }),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.bump();
            // Exponent re-enters at unary level: `^` binds tighter than
            // unary minus, but `x^-2` still reads as x^(-2).
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Lit(v)),
            Some(Tok::Ident(name)) if name == "x" => Ok(Expr::X),
            Some(Tok::Ident(name)) => {
                if let Some(func) = Func::from_name(&name) {
                    self.expect(Tok::LParen, "`(` after function name")?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "closing `)`")?;
                    Ok(Expr::Call(func, Box::new(arg)))
                } else {
                    Err(ParseError { pos, message: format!("unknown identifier `{name}`") })
                }
            }
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "closing `)`")?;
                Ok(inner)
            }
            _ => Err(ParseError { pos, message: "expected a value".into() }),
        }
    }
}
