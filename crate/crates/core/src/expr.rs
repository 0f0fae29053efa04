//! Recursive-descent parser and evaluator for the small expression DSL in
//! which metrics, vector fields and ODE coefficient functions are written.
//!
//! Grammar (whitespace insignificant, no implicit multiplication):
//!
//! ```text
//! expr   := term { ("+"|"-") term }
//! term   := factor { ("*"|"/") factor }
//! factor := ["-"] power
//! power  := atom ["^" factor]          (so ^ is right-associative)
//! atom   := NUMBER | IDENT | IDENT "(" expr { "," expr } ")" | "(" expr ")"
//! ```
//!
//! `^` binds tighter than unary minus, which binds tighter than `*`/`/`,
//! which bind tighter than `+`/`-`.  The function set is fixed: `sin`, `cos`,
//! `tan`, `sinh`, `cosh`, `tanh`, `exp`, `ln`, `abs`, `sqrt`.
//!
//! Evaluation is generic over any scalar implementing [`Scalar`], so the same
//! AST is evaluated with plain `f64` and with second-order duals
//! ([`crate::autodiff::Dual2`]).  ASTs are immutable after construction and
//! safe to share across threads.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors produced by parsing or evaluating expressions.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ExprError {
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at offset {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("missing parameter binding `{0}`")]
    MissingParam(String),
    #[error("expected {expected} coordinate values, got {got}")]
    Arity { expected: usize, got: usize },
}

/// Named real parameter bindings (constants appearing inside expressions).
///
/// Evaluation with a parameter reference that has no binding is an error,
/// never a silent default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamEnv(pub BTreeMap<String, f64>);

impl ParamEnv {
    pub fn new() -> Self {
        Self(BTreeMap::new())
    }

    pub fn from_pairs(pairs: &[(&str, f64)]) -> Self {
        Self(
            pairs
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        )
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.0.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Result<f64, ExprError> {
        self.0
            .get(name)
            .copied()
            .ok_or_else(|| ExprError::MissingParam(name.to_string()))
    }

    pub fn names(&self) -> Vec<String> {
        self.0.keys().cloned().collect()
    }
}

/// The fixed set of unary functions available in the DSL.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    Exp,
    Ln,
    Abs,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "tanh" => Func::Tanh,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

/// Expression tree.  Constants produced by the parser are non-negative;
/// negative literals appear as `Neg(Const(_))`.
#[derive(Debug, Clone, PartialEq)]
pub enum Ast {
    Const(f64),
    /// Index into the declared coordinate list.
    Coord(usize),
    /// Named parameter, resolved at evaluation time through a [`ParamEnv`].
    Param(String),
    Neg(Box<Ast>),
    Add(Box<Ast>, Box<Ast>),
    Sub(Box<Ast>, Box<Ast>),
    Mul(Box<Ast>, Box<Ast>),
    Div(Box<Ast>, Box<Ast>),
    Pow(Box<Ast>, Box<Ast>),
    Apply(Func, Box<Ast>),
}

/// A parsed expression together with the coordinate list it was validated
/// against.  Printing ([`fmt::Display`]) produces text that re-parses to a
/// structurally identical AST.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarExpr {
    ast: Ast,
    coords: Vec<String>,
}

/// Scalar interface required by the evaluator: arithmetic plus the fixed
/// elementary-function set.  Implemented by `f64` and by
/// [`crate::autodiff::Dual2`].
pub trait Scalar:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Sized
{
    fn from_f64(c: f64) -> Self;
    /// The plain value slot (used for domain checks).
    fn re(&self) -> f64;
    fn s_sin(self) -> Self;
    fn s_cos(self) -> Self;
    fn s_tan(self) -> Self;
    fn s_sinh(self) -> Self;
    fn s_cosh(self) -> Self;
    fn s_tanh(self) -> Self;
    fn s_exp(self) -> Self;
    fn s_ln(self) -> Self;
    fn s_abs(self) -> Self;
    fn s_sqrt(self) -> Self;
    /// Integer power (valid for any base; `n` may be negative).
    fn s_powi(self, n: i32) -> Self;
}

impl Scalar for f64 {
    fn from_f64(c: f64) -> Self {
        c
    }
    fn re(&self) -> f64 {
        *self
    }
    fn s_sin(self) -> Self {
        self.sin()
    }
    fn s_cos(self) -> Self {
        self.cos()
    }
    fn s_tan(self) -> Self {
        self.tan()
    }
    fn s_sinh(self) -> Self {
        self.sinh()
    }
    fn s_cosh(self) -> Self {
        self.cosh()
    }
    fn s_tanh(self) -> Self {
        self.tanh()
    }
    fn s_exp(self) -> Self {
        self.exp()
    }
    fn s_ln(self) -> Self {
        self.ln()
    }
    fn s_abs(self) -> Self {
        self.abs()
    }
    fn s_sqrt(self) -> Self {
        self.sqrt()
    }
    fn s_powi(self, n: i32) -> Self {
        self.powi(n)
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

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
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
            }
            '+' => {
                toks.push((Tok::Plus, i));
                i += 1;
            }
            '-' => {
                toks.push((Tok::Minus, i));
                i += 1;
            }
            '*' => {
                toks.push((Tok::Star, i));
                i += 1;
            }
            '/' => {
                toks.push((Tok::Slash, i));
                i += 1;
            }
            '^' => {
                toks.push((Tok::Caret, i));
                i += 1;
            }
            '(' => {
                toks.push((Tok::LParen, i));
                i += 1;
            }
            ')' => {
                toks.push((Tok::RParen, i));
                i += 1;
            }
            ',' => {
                toks.push((Tok::Comma, i));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let val: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    pos: start,
                    msg: format!("invalid number `{text}`"),
                })?;
                toks.push((Tok::Num(val), start));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                toks.push((Tok::Ident(src[start..i].to_string()), start));
            }
            other => {
                return Err(ExprError::Syntax {
                    pos: i,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    src_len: usize,
    coords: &'a [String],
    params: &'a [String],
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn here(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|(_, p)| *p)
            .unwrap_or(self.src_len)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<(), ExprError> {
        if self.peek() == Some(want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ExprError::Syntax {
                pos: self.here(),
                msg: format!("expected {what}"),
            })
        }
    }

    fn expr(&mut self) -> Result<Ast, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Ast::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Ast::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Ast, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = Ast::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = Ast::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Ast, ExprError> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            let inner = self.power()?;
            // Canonical form: a negated literal is a negative constant.
            if let Ast::Const(c) = inner {
                Ok(Ast::Const(-c))
            } else {
                Ok(Ast::Neg(Box::new(inner)))
            }
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Ast, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let exp = self.factor()?;
            Ok(Ast::Pow(Box::new(base), Box::new(exp)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Ast, ExprError> {
        let pos = self.here();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Ast::Const(v)),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    // Function application.
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(&Tok::RParen, "`)`")?;
                    let func = Func::from_name(&name).ok_or_else(|| {
                        ExprError::UnknownIdentifier {
                            name: name.clone(),
                            pos,
                        }
                    })?;
                    if args.len() != 1 {
                        return Err(ExprError::Syntax {
                            pos,
                            msg: format!(
                                "function `{name}` takes 1 argument, got {}",
                                args.len()
                            ),
                        });
                    }
                    Ok(Ast::Apply(func, Box::new(args.pop().unwrap())))
                } else if let Some(idx) = self.coords.iter().position(|c| *c == name) {
                    Ok(Ast::Coord(idx))
                } else if self.params.contains(&name) {
                    Ok(Ast::Param(name))
                } else {
                    Err(ExprError::UnknownIdentifier { name, pos })
                }
            }
            Some(_) => Err(ExprError::Syntax {
                pos,
                msg: "expected number, identifier or `(`".to_string(),
            }),
            None => Err(ExprError::Syntax {
                pos,
                msg: "unexpected end of input".to_string(),
            }),
        }
    }
}

impl ScalarExpr {
    /// Parse `source` against a declared coordinate and parameter list.
    /// Identifiers that are neither coordinates, parameters nor known
    /// functions are rejected.
    pub fn parse(source: &str, coords: &[&str], params: &[&str]) -> Result<Self, ExprError> {
        let coord_names: Vec<String> = coords.iter().map(|s| s.to_string()).collect();
        let param_names: Vec<String> = params.iter().map(|s| s.to_string()).collect();
        let toks = tokenize(source)?;
        let mut p = Parser {
            toks,
            pos: 0,
            src_len: source.len(),
            coords: &coord_names,
            params: &param_names,
        };
        let ast = p.expr()?;
        if p.pos < p.toks.len() {
            return Err(ExprError::Syntax {
                pos: p.here(),
                msg: "trailing input".to_string(),
            });
        }
        Ok(ScalarExpr {
            ast,
            coords: coord_names,
        })
    }

    /// A constant expression (no coordinates).
    pub fn constant(value: f64, coords: &[&str]) -> Self {
        ScalarExpr {
            ast: Ast::Const(value),
            coords: coords.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Wrap an AST, normalizing negated literals to negative constants so
    /// that printing and re-parsing is the structural identity.
    pub fn from_ast(ast: Ast, coords: &[&str]) -> Self {
        ScalarExpr {
            ast: fold_neg_literals(ast),
            coords: coords.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn ast(&self) -> &Ast {
        &self.ast
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    /// Evaluate with any [`Scalar`] type.  `coords` must match the declared
    /// coordinate list in length and order.
    pub fn evaluate<T: Scalar>(&self, coords: &[T], params: &ParamEnv) -> Result<T, ExprError> {
        if coords.len() != self.coords.len() {
            return Err(ExprError::Arity {
                expected: self.coords.len(),
                got: coords.len(),
            });
        }
        eval_ast(&self.ast, coords, params)
    }

    /// Plain-float convenience wrapper.
    pub fn eval_f64(&self, coords: &[f64], params: &ParamEnv) -> Result<f64, ExprError> {
        self.evaluate(coords, params)
    }
}

fn eval_ast<T: Scalar>(ast: &Ast, coords: &[T], params: &ParamEnv) -> Result<T, ExprError> {
    match ast {
        Ast::Const(c) => Ok(T::from_f64(*c)),
        Ast::Coord(i) => Ok(coords[*i].clone()),
        Ast::Param(name) => Ok(T::from_f64(params.get(name)?)),
        Ast::Neg(a) => Ok(-eval_ast(a, coords, params)?),
        Ast::Add(a, b) => Ok(eval_ast(a, coords, params)? + eval_ast(b, coords, params)?),
        Ast::Sub(a, b) => Ok(eval_ast(a, coords, params)? - eval_ast(b, coords, params)?),
        Ast::Mul(a, b) => Ok(eval_ast(a, coords, params)? * eval_ast(b, coords, params)?),
        Ast::Div(a, b) => {
            let num = eval_ast(a, coords, params)?;
            let den = eval_ast(b, coords, params)?;
            if den.re() == 0.0 {
                return Err(ExprError::Domain("division by zero".to_string()));
            }
            Ok(num / den)
        }
        Ast::Pow(a, b) => {
            let base = eval_ast(a, coords, params)?;
            // Constant integer exponents are valid for any base (including
            // negative bases); general exponents require a positive base.
            if let Some(n) = const_int_exponent(b, params) {
                if base.re() == 0.0 && n < 0 {
                    return Err(ExprError::Domain(
                        "zero raised to a negative power".to_string(),
                    ));
                }
                Ok(base.s_powi(n))
            } else {
                let exp = eval_ast(b, coords, params)?;
                if base.re() <= 0.0 {
                    return Err(ExprError::Domain(format!(
                        "non-integer power of non-positive base {}",
                        base.re()
                    )));
                }
                Ok((exp * base.s_ln()).s_exp())
            }
        }
        Ast::Apply(f, a) => {
            let x = eval_ast(a, coords, params)?;
            Ok(match f {
                Func::Sin => x.s_sin(),
                Func::Cos => x.s_cos(),
                Func::Tan => x.s_tan(),
                Func::Sinh => x.s_sinh(),
                Func::Cosh => x.s_cosh(),
                Func::Tanh => x.s_tanh(),
                Func::Exp => x.s_exp(),
                Func::Ln => {
                    if x.re() <= 0.0 {
                        return Err(ExprError::Domain(format!(
                            "ln of non-positive value {}",
                            x.re()
                        )));
                    }
                    x.s_ln()
                }
                Func::Abs => x.s_abs(),
                Func::Sqrt => {
                    if x.re() < 0.0 {
                        return Err(ExprError::Domain(format!(
                            "sqrt of negative value {}",
                            x.re()
                        )));
                    }
                    x.s_sqrt()
                }
            })
        }
    }
}

/// If the exponent AST is a literal (possibly negated or a bound parameter)
/// whose value is an integer of modest size, return it.
fn const_int_exponent(ast: &Ast, params: &ParamEnv) -> Option<i32> {
    let v = match ast {
        Ast::Const(c) => *c,
        Ast::Neg(inner) => match inner.as_ref() {
            Ast::Const(c) => -*c,
            _ => return None,
        },
        Ast::Param(name) => params.get(name).ok()?,
        _ => return None,
    };
    if v.fract() == 0.0 && v.abs() <= 64.0 {
        Some(v as i32)
    } else {
        None
    }
}

/// Recursively replace `Neg(Const(c))` by `Const(-c)`, the canonical form
/// produced by the parser.
fn fold_neg_literals(ast: Ast) -> Ast {
    let b = |a: Ast| Box::new(fold_neg_literals(a));
    match ast {
        Ast::Neg(a) => match fold_neg_literals(*a) {
            Ast::Const(c) => Ast::Const(-c),
            other => Ast::Neg(Box::new(other)),
        },
        Ast::Add(a, c) => Ast::Add(b(*a), b(*c)),
        Ast::Sub(a, c) => Ast::Sub(b(*a), b(*c)),
        Ast::Mul(a, c) => Ast::Mul(b(*a), b(*c)),
        Ast::Div(a, c) => Ast::Div(b(*a), b(*c)),
        Ast::Pow(a, c) => Ast::Pow(b(*a), b(*c)),
        Ast::Apply(f, a) => Ast::Apply(f, b(*a)),
        leaf => leaf,
    }
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

// Precedence levels for printing: 1 add/sub, 2 mul/div, 3 unary minus,
// 4 power, 5 atom.  A child is parenthesized when its level is below the
// minimum its position requires, which makes print -> parse the identity on
// AST structure.
fn print_ast(ast: &Ast, names: &[String], min_prec: u8, out: &mut String) {
    let prec = match ast {
        Ast::Add(..) | Ast::Sub(..) => 1,
        Ast::Mul(..) | Ast::Div(..) => 2,
        Ast::Neg(..) => 3,
        Ast::Pow(..) => 4,
        // A negative literal prints with a leading minus sign, so it binds
        // like a negation, not like an atom.
        Ast::Const(c) if c.is_sign_negative() => 3,
        _ => 5,
    };
    let need_parens = prec < min_prec;
    if need_parens {
        out.push('(');
    }
    match ast {
        Ast::Const(c) => out.push_str(&format!("{c:?}")),
        Ast::Coord(i) => out.push_str(&names[*i]),
        Ast::Param(name) => out.push_str(name),
        Ast::Neg(a) => {
            out.push('-');
            print_ast(a, names, 4, out);
        }
        Ast::Add(a, b) => {
            print_ast(a, names, 1, out);
            out.push('+');
            print_ast(b, names, 2, out);
        }
        Ast::Sub(a, b) => {
            print_ast(a, names, 1, out);
            out.push('-');
            print_ast(b, names, 2, out);
        }
        Ast::Mul(a, b) => {
            print_ast(a, names, 2, out);
            out.push('*');
            print_ast(b, names, 3, out);
        }
        Ast::Div(a, b) => {
            print_ast(a, names, 2, out);
            out.push('/');
            print_ast(b, names, 3, out);
        }
        Ast::Pow(a, b) => {
            print_ast(a, names, 5, out);
            out.push('^');
            print_ast(b, names, 3, out);
        }
        Ast::Apply(f, a) => {
            out.push_str(f.name());
            out.push('(');
            print_ast(a, names, 0, out);
            out.push(')');
        }
    }
    if need_parens {
        out.push(')');
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        print_ast(&self.ast, &self.coords, 0, &mut out);
        f.write_str(&out)
    }
}
