//! Arithmetic expression language for configuration files: the delay kernel
//! is one scalar expression in `t`, and each nonlinearity component is an
//! expression over time, state, and Caputo-derivative variables.
//!
//! Precedence, lowest to highest: `+ -` < `* /` < unary minus < `^`
//! (right-associative) < function call. The exponent position of `^`
//! re-admits unary minus, so `x ^ -2` parses. Plain `^` on a negative base
//! with a fractional exponent is a domain error; the signed power
//! `spow(x, p) = sgn(x) |x|^p` is the real-valued alternative.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::specfun;

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("function `{name}` at byte {offset} takes {expected} argument(s), got {got}")]
    Arity { name: String, offset: usize, expected: usize, got: usize },
    #[error("unbound variable `{name}`")]
    UnboundVariable { name: String },
    #[error("domain error: {what}")]
    Domain { what: String },
    #[error("division by zero")]
    DivisionByZero,
    #[error("expression evaluated to a nonfinite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Abs,
    Sgn,
    Spow,
    Gamma,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "abs" => Func::Abs,
            "sgn" => Func::Sgn,
            "spow" => Func::Spow,
            "gamma" => Func::Gamma,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Abs => "abs",
            Func::Sgn => "sgn",
            Func::Spow => "spow",
            Func::Gamma => "gamma",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Spow => 2,
            _ => 1,
        }
    }
}

/// Expression AST. Structural equality is the round-trip contract:
/// `parse(serialize(e)) == e`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Variable bindings for evaluation: time `t`, state `x1..xn`, and the
/// Caputo-derivative estimates `d1_1..d1_n`, `d2_1..d2_n`.
#[derive(Debug, Clone, Default)]
pub struct VarEnv {
    bindings: Vec<(String, f64)>,
}

impl VarEnv {
    pub fn new() -> Self {
        VarEnv::default()
    }

    pub fn set(&mut self, name: &str, value: f64) {
        if let Some(slot) = self.bindings.iter_mut().find(|(n, _)| n == name) {
            slot.1 = value;
        } else {
            self.bindings.push((name.to_string(), value));
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.bindings.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// Full binding set for one evaluation point of the system: t, the state
    /// vector, and both Caputo-derivative estimate vectors.
    pub fn for_state(t: f64, x: &[f64], c1: &[f64], c2: &[f64]) -> Self {
        let mut env = VarEnv::new();
        env.set("t", t);
        for (i, &v) in x.iter().enumerate() {
            env.set(&format!("x{}", i + 1), v);
        }
        for (i, &v) in c1.iter().enumerate() {
            env.set(&format!("d1_{}", i + 1), v);
        }
        for (i, &v) in c2.iter().enumerate() {
            env.set(&format!("d2_{}", i + 1), v);
        }
        env
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
    Comma,
    Eof,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn next_token(&mut self) -> Result<(Tok, usize), ExprError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let at = self.pos;
        if self.pos >= self.src.len() {
            return Ok((Tok::Eof, at));
        }
        let c = self.src[self.pos];
        let single = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(t) = single {
            self.pos += 1;
            return Ok((t, at));
        }
        if c.is_ascii_digit() || c == b'.' {
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos < self.src.len() && self.src[self.pos] == b'.' {
                self.pos += 1;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
            if self.pos == start + 1 && c == b'.' {
                return Err(ExprError::Syntax {
                    offset: start,
                    expected: "digits around the decimal point".into(),
                });
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
                    // `2e` with no digits: the e belongs to something else
                    // only in theory; treat as a malformed exponent.
                    self.pos = mark;
                    return Err(ExprError::Syntax {
                        offset: mark,
                        expected: "exponent digits after `e`".into(),
                    });
                }
            }
            let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
                offset: start,
                expected: "a numeric literal".into(),
            })?;
            return Ok((Tok::Num(value), start));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while self.pos < self.src.len()
                && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
            {
                self.pos += 1;
            }
            let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            return Ok((Tok::Ident(text.to_string()), start));
        }
        Err(ExprError::Syntax {
            offset: at,
            expected: "a number, identifier, operator, or parenthesis".into(),
        })
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

// Binding powers: additive (10, 11), multiplicative (20, 21), unary minus 30,
// `^` (40, 30). The exponent's right power of 30 makes `^` right-associative
// and lets unary minus follow it.
const UNARY_BP: u8 = 30;

impl Parser {
    fn peek(&self) -> &(Tok, usize) {
        &self.toks[self.at]
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        match self.bump() {
            (Tok::RParen, _) => Ok(()),
            (_, offset) => Err(ExprError::Syntax { offset, expected: "`)`".into() }),
        }
    }

    fn parse_primary(&mut self) -> Result<Expr, ExprError> {
        match self.bump() {
            (Tok::Num(v), _) => Ok(Expr::Num(v)),
            (Tok::Ident(name), offset) => {
                if matches!(self.peek().0, Tok::LParen) {
                    self.bump();
                    let func = Func::lookup(&name)
                        .ok_or(ExprError::UnknownFunction { name: name.clone(), offset })?;
                    let mut args = Vec::new();
                    if matches!(self.peek().0, Tok::RParen) {
                        self.bump();
                    } else {
                        loop {
                            args.push(self.parse_bp(0)?);
                            match self.bump() {
                                (Tok::Comma, _) => continue,
                                (Tok::RParen, _) => break,
                                (_, offset) => {
                                    return Err(ExprError::Syntax {
                                        offset,
                                        expected: "`,` or `)` in argument list".into(),
                                    })
                                }
                            }
                        }
                    }
                    if args.len() != func.arity() {
                        return Err(ExprError::Arity {
                            name,
                            offset,
                            expected: func.arity(),
                            got: args.len(),
                        });
                    }
                    Ok(Expr::Call(func, args))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            (Tok::Minus, _) => {
                let operand = self.parse_bp(UNARY_BP)?;
                Ok(Expr::Neg(Box::new(operand)))
            }
            (Tok::LParen, _) => {
                let inner = self.parse_bp(0)?;
                self.expect_rparen()?;
                Ok(inner)
            }
            (_, offset) => Err(ExprError::Syntax {
                offset,
                expected: "a number, variable, function call, `-`, or `(`".into(),
            }),
        }
    }

    fn parse_bp(&mut self, min_bp: u8) -> Result<Expr, ExprError> {
        let mut lhs = self.parse_primary()?;
        loop {
            let (op, lbp, rbp) = match self.peek().0 {
                Tok::Plus => (BinOp::Add, 10, 11),
                Tok::Minus => (BinOp::Sub, 10, 11),
                Tok::Star => (BinOp::Mul, 20, 21),
                Tok::Slash => (BinOp::Div, 20, 21),
                Tok::Caret => (BinOp::Pow, 40, UNARY_BP),
                _ => break,
            };
            if lbp < min_bp {
                break;
            }
            self.bump();
            let rhs = self.parse_bp(rbp)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }
}

/// Parses an expression; errors carry the byte offset of the offending token.
pub fn parse(src: &str) -> Result<Expr, ExprError> {
    let mut lexer = Lexer { src: src.as_bytes(), pos: 0 };
    let mut toks = Vec::new();
    loop {
        let (tok, offset) = lexer.next_token()?;
        let end = matches!(tok, Tok::Eof);
        toks.push((tok, offset));
        if end {
            break;
        }
    }
    let mut parser = Parser { toks, at: 0 };
    let expr = parser.parse_bp(0)?;
    match parser.peek() {
        (Tok::Eof, _) => Ok(expr),
        (_, offset) => Err(ExprError::Syntax {
            offset: *offset,
            expected: "end of input or an operator".into(),
        }),
    }
}

/// Signed power sgn(x) * |x|^p: the real-valued reading of fractional powers
/// on possibly-negative bases.
fn spow(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        // sgn(0) = 0; defines spow(0, 0) = 0 as well.
        return 0.0;
    }
    x.signum() * x.abs().powf(p)
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn eval_node(e: &Expr, env: &VarEnv) -> Result<f64, ExprError> {
    Ok(match e {
        Expr::Num(v) => *v,
        Expr::Var(name) => env
            .get(name)
            .ok_or_else(|| ExprError::UnboundVariable { name: name.clone() })?,
        Expr::Neg(inner) => -eval_node(inner, env)?,
        Expr::Bin(op, l, r) => {
            let a = eval_node(l, env)?;
            let b = eval_node(r, env)?;
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(ExprError::DivisionByZero);
                    }
                    a / b
                }
                BinOp::Pow => {
                    if a < 0.0 && b.fract() != 0.0 {
                        return Err(ExprError::Domain {
                            what: format!(
                                "negative base {a} with fractional exponent {b}; use spow"
                            ),
                        });
                    }
                    a.powf(b)
                }
            }
        }
        Expr::Call(func, args) => {
            let a = eval_node(&args[0], env)?;
            match func {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Exp => a.exp(),
                Func::Ln => {
                    if a <= 0.0 {
                        return Err(ExprError::Domain { what: format!("ln of {a}") });
                    }
                    a.ln()
                }
                Func::Abs => a.abs(),
                Func::Sgn => sgn(a),
                Func::Spow => {
                    let p = eval_node(&args[1], env)?;
                    spow(a, p)
                }
                Func::Gamma => {
                    if a <= 0.0 {
                        return Err(ExprError::Domain { what: format!("gamma of {a}") });
                    }
                    specfun::gamma_fn(a)
                        .map_err(|e| ExprError::Domain { what: e.to_string() })?
                }
            }
        }
    })
}

/// Evaluates under the environment; every free variable must be bound and
/// the result must be finite.
pub fn eval(e: &Expr, env: &VarEnv) -> Result<f64, ExprError> {
    let v = eval_node(e, env)?;
    if !v.is_finite() {
        return Err(ExprError::NonFinite);
    }
    Ok(v)
}

fn collect_vars(e: &Expr, out: &mut BTreeSet<String>) {
    match e {
        Expr::Num(_) => {}
        Expr::Var(name) => {
            out.insert(name.clone());
        }
        Expr::Neg(inner) => collect_vars(inner, out),
        Expr::Bin(_, l, r) => {
            collect_vars(l, out);
            collect_vars(r, out);
        }
        Expr::Call(_, args) => {
            for a in args {
                collect_vars(a, out);
            }
        }
    }
}

/// Exact set of variables occurring in the expression.
pub fn free_vars(e: &Expr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    collect_vars(e, &mut out);
    out
}

// Printer precedence levels; a child is parenthesized when its level is
// below what its position requires.
fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Bin(BinOp::Pow, ..) => 4,
        Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 5,
    }
}

fn write_expr(e: &Expr, need: u8, out: &mut String) {
    use fmt::Write;
    let p = prec(e);
    let wrap = p < need;
    if wrap {
        out.push('(');
    }
    match e {
        Expr::Num(v) => {
            let _ = write!(out, "{v}");
        }
        Expr::Var(name) => out.push_str(name),
        Expr::Neg(inner) => {
            out.push('-');
            write_expr(inner, 4, out);
        }
        Expr::Bin(op, l, r) => {
            // Left-associative ops need strictly higher precedence on the
            // right; `^` is the mirror image and re-admits unary minus.
            let (ln, rn) = match op {
                BinOp::Add | BinOp::Sub => (1, 2),
                BinOp::Mul | BinOp::Div => (2, 3),
                BinOp::Pow => (5, 3),
            };
            write_expr(l, ln, out);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(r, rn, out);
        }
        Expr::Call(func, args) => {
            out.push_str(func.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(a, 0, out);
            }
            out.push(')');
        }
    }
    if wrap {
        out.push(')');
    }
}

/// Minimal-parentheses text form; `parse(serialize(e))` is structurally `e`.
pub fn serialize(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(e, 0, &mut out);
    out
}
