//! Scalar coefficient expressions in the coordinates `x0..x3`.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' ['-' | '+'] integer)?
//! primary := number | x0..x3 | func '(' expr ')' | '(' expr ')'
//! func    := sqrt | sin | cos | exp | tanh
//! ```
//!
//! So `-x1^2` is `-(x1^2)`. Chained exponents (`x^2^3`) are rejected rather
//! than guessing an associativity.
//!
//! Evaluation is generic over [`Scalar`], which is implemented by `f64`,
//! [`Dual4`] (value and gradient) and [`Jet2`] (value, gradient and Hessian).

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of coordinates an expression may depend on.
pub const NVARS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sqrt,
    Sin,
    Cos,
    Exp,
    Tanh,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("empty expression")]
    Empty,
    #[error("unexpected {0}")]
    Unexpected(String),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("exponent must be an integer literal")]
    NonIntegerExponent,
    #[error("chained exponents are ambiguous; add parentheses")]
    ChainedExponent,
    #[error("invalid number literal `{0}`")]
    InvalidNumber(String),
    #[error("expected `{0}`")]
    Expected(char),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at byte {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    SqrtOfNegative,
    DivisionByZero,
    /// `sqrt` at 0 where the argument still varies, so no derivative exists.
    NotDifferentiable,
    NonFinite,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainKind::SqrtOfNegative => "square root of a negative number",
            DomainKind::DivisionByZero => "division by zero",
            DomainKind::NotDifferentiable => "not differentiable",
            DomainKind::NonFinite => "non-finite value",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} in `{subexpr}` at x = {point:?}")]
pub struct EvalError {
    pub kind: DomainKind,
    pub subexpr: String,
    pub point: [f64; NVARS],
}

/// Number-like type that expressions can be evaluated in.
///
/// Elementary functions are expressed through [`Scalar::chain`], which applies
/// a function given its value and first two derivatives at `self.value()`.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    /// The coordinate `x_i` taking value `v`.
    fn variable(i: usize, v: f64) -> Self;
    fn value(&self) -> f64;
    fn chain(&self, g0: f64, g1: f64, g2: f64) -> Self;
    /// True if any derivative component is nonzero.
    fn varies(&self) -> bool;
    fn all_finite(&self) -> bool;

    fn recip(&self) -> Self {
        let v = self.value();
        self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }

    fn sqrt(&self) -> Self {
        let s = self.value().sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * s * s))
    }

    fn sin(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.chain(s, c, -s)
    }

    fn cos(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.chain(c, -s, -c)
    }

    fn exp(&self) -> Self {
        let e = self.value().exp();
        self.chain(e, e, e)
    }

    fn tanh(&self) -> Self {
        let t = self.value().tanh();
        let d = 1.0 - t * t;
        self.chain(t, d, -2.0 * t * d)
    }

    fn sinh(&self) -> Self {
        let v = self.value();
        self.chain(v.sinh(), v.cosh(), v.sinh())
    }

    fn cosh(&self) -> Self {
        let v = self.value();
        self.chain(v.cosh(), v.sinh(), v.cosh())
    }

    fn scale(&self, k: f64) -> Self {
        *self * Self::constant(k)
    }

    /// Integer power by repeated squaring, so `0^n` has exact derivatives.
    fn powi(&self, n: i32) -> Self {
        let mut base = *self;
        let mut k = n.unsigned_abs();
        let mut acc = Self::constant(1.0);
        while k > 0 {
            if k & 1 == 1 {
                acc = acc * base;
            }
            k >>= 1;
            if k > 0 {
                base = base * base;
            }
        }
        if n < 0 {
            acc.recip()
        } else {
            acc
        }
    }
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn variable(_: usize, v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn chain(&self, g0: f64, _: f64, _: f64) -> Self {
        g0
    }
    fn varies(&self) -> bool {
        false
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
    fn recip(&self) -> Self {
        1.0 / self
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
}

/// Value plus gradient with respect to `x0..x3`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual4 {
    pub value: f64,
    pub grad: [f64; NVARS],
}

impl Dual4 {
    pub fn new(value: f64, grad: [f64; NVARS]) -> Self {
        Dual4 { value, grad }
    }
}

impl Scalar for Dual4 {
    fn constant(v: f64) -> Self {
        Dual4::new(v, [0.0; NVARS])
    }
    fn variable(i: usize, v: f64) -> Self {
        let mut grad = [0.0; NVARS];
        grad[i] = 1.0;
        Dual4::new(v, grad)
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn chain(&self, g0: f64, g1: f64, _: f64) -> Self {
        Dual4::new(g0, self.grad.map(|d| g1 * d))
    }
    fn varies(&self) -> bool {
        self.grad.iter().any(|&d| d != 0.0)
    }
    fn all_finite(&self) -> bool {
        self.value.is_finite() && self.grad.iter().all(|d| d.is_finite())
    }
}

impl Add for Dual4 {
    type Output = Dual4;
    fn add(self, o: Dual4) -> Dual4 {
        Dual4::new(
            self.value + o.value,
            std::array::from_fn(|i| self.grad[i] + o.grad[i]),
        )
    }
}

impl Sub for Dual4 {
    type Output = Dual4;
    fn sub(self, o: Dual4) -> Dual4 {
        Dual4::new(
            self.value - o.value,
            std::array::from_fn(|i| self.grad[i] - o.grad[i]),
        )
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl Mul for Dual4 {
    type Output = Dual4;
    fn mul(self, o: Dual4) -> Dual4 {
        Dual4::new(
            self.value * o.value,
            std::array::from_fn(|i| self.grad[i] * o.value + self.value * o.grad[i]),
        )
    }
}

impl Div for Dual4 {
    type Output = Dual4;
    fn div(self, o: Dual4) -> Dual4 {
        Dual4 {
            value: self.value / o.value,
            ..self * o.recip()
        }
    }
}

impl Neg for Dual4 {
    type Output = Dual4;
    fn neg(self) -> Dual4 {
        Dual4::new(-self.value, self.grad.map(|d| -d))
    }
}

/// Second-order jet: value, gradient and (symmetric) Hessian.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub value: f64,
    pub grad: [f64; NVARS],
    pub hess: [[f64; NVARS]; NVARS],
}

impl Jet2 {
    /// First-order part.
    pub fn dual(&self) -> Dual4 {
        Dual4::new(self.value, self.grad)
    }

    /// `d/dx_alpha` of this jet as a first-order quantity.
    pub fn partial(&self, alpha: usize) -> Dual4 {
        Dual4::new(self.grad[alpha], self.hess[alpha])
    }
}

impl Scalar for Jet2 {
    fn constant(v: f64) -> Self {
        Jet2 {
            value: v,
            ..Jet2::default()
        }
    }
    fn variable(i: usize, v: f64) -> Self {
        let mut jet = Jet2::constant(v);
        jet.grad[i] = 1.0;
        jet
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn chain(&self, g0: f64, g1: f64, g2: f64) -> Self {
        Jet2 {
            value: g0,
            grad: self.grad.map(|d| g1 * d),
            hess: std::array::from_fn(|a| {
                std::array::from_fn(|b| g1 * self.hess[a][b] + g2 * (self.grad[a] * self.grad[b]))
            }),
        }
    }
    fn varies(&self) -> bool {
        self.grad.iter().any(|&d| d != 0.0) || self.hess.iter().flatten().any(|&d| d != 0.0)
    }
    fn all_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad.iter().all(|d| d.is_finite())
            && self.hess.iter().flatten().all(|d| d.is_finite())
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        Jet2 {
            value: self.value + o.value,
            grad: std::array::from_fn(|i| self.grad[i] + o.grad[i]),
            hess: std::array::from_fn(|a| std::array::from_fn(|b| self.hess[a][b] + o.hess[a][b])),
        }
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        self + (-o)
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2 {
            value: self.value * o.value,
            grad: std::array::from_fn(|i| self.grad[i] * o.value + self.value * o.grad[i]),
            hess: std::array::from_fn(|a| {
                std::array::from_fn(|b| {
                    self.hess[a][b] * o.value
                        + (self.grad[a] * o.grad[b] + self.grad[b] * o.grad[a])
                        + self.value * o.hess[a][b]
                })
            }),
        }
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    fn div(self, o: Jet2) -> Jet2 {
        Jet2 {
            value: self.value / o.value,
            ..self * o.recip()
        }
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        Jet2 {
            value: -self.value,
            grad: self.grad.map(|d| -d),
            hess: self.hess.map(|row| row.map(|d| -d)),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        Parser::new(src).parse_all()
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Num(v)
    }

    /// True if the expression mentions no coordinate.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::Var(_) => false,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.is_constant(),
            Expr::Binary(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }

    pub fn eval(&self, x: [f64; NVARS]) -> Result<f64, EvalError> {
        self.eval_in(x)
    }

    pub fn eval_dual(&self, x: [f64; NVARS]) -> Result<Dual4, EvalError> {
        self.eval_in(x)
    }

    pub fn eval_jet(&self, x: [f64; NVARS]) -> Result<Jet2, EvalError> {
        self.eval_in(x)
    }

    /// Evaluates in any [`Scalar`], seeding `x_i` as the i-th variable.
    pub fn eval_in<S: Scalar>(&self, x: [f64; NVARS]) -> Result<S, EvalError> {
        let fail = |kind: DomainKind, node: &Expr| EvalError {
            kind,
            subexpr: node.to_string(),
            point: x,
        };
        let out = match self {
            Expr::Num(v) => S::constant(*v),
            Expr::Var(i) => S::variable(*i, x[*i]),
            Expr::Neg(a) => -a.eval_in::<S>(x)?,
            Expr::Binary(op, a, b) => {
                let a = a.eval_in::<S>(x)?;
                let b = b.eval_in::<S>(x)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b.value() == 0.0 {
                            return Err(fail(DomainKind::DivisionByZero, self));
                        }
                        a / b
                    }
                }
            }
            Expr::Pow(a, n) => {
                let a = a.eval_in::<S>(x)?;
                if *n < 0 && a.value() == 0.0 {
                    return Err(fail(DomainKind::DivisionByZero, self));
                }
                a.powi(*n)
            }
            Expr::Call(func, a) => {
                let a = a.eval_in::<S>(x)?;
                match func {
                    Func::Sqrt => {
                        let v = a.value();
                        if v < 0.0 {
                            return Err(fail(DomainKind::SqrtOfNegative, self));
                        }
                        if v == 0.0 && a.varies() {
                            return Err(fail(DomainKind::NotDifferentiable, self));
                        }
                        a.sqrt()
                    }
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Tanh => a.tanh(),
                }
            }
        };
        if !out.all_finite() {
            return Err(fail(DomainKind::NonFinite, self));
        }
        Ok(out)
    }
}

impl FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

/// Canonical, fully parenthesized form; re-parsing it yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if *v < 0.0 => write!(f, "(-{:?})", -v),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Binary(op, a, b) => {
                let sym = match op {
                    BinOp::Add => '+',
                    BinOp::Sub => '-',
                    BinOp::Mul => '*',
                    BinOp::Div => '/',
                };
                write!(f, "({a} {sym} {b})")
            }
            Expr::Pow(a, n) => write!(f, "({a}^{n})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let src = String::deserialize(deserializer)?;
        Expr::parse(&src).map_err(|err| serde::de::Error::custom(format!("`{src}`: {err}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<(usize, Tok)>,
    pos: usize,
    lex_error: Option<ParseError>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        let mut parser = Parser {
            src,
            toks: Vec::new(),
            pos: 0,
            lex_error: None,
        };
        if let Err(err) = parser.lex() {
            parser.lex_error = Some(err);
        }
        parser
    }

    fn lex(&mut self) -> Result<(), ParseError> {
        let bytes = self.src.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            if c.is_ascii_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == b'.' {
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
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &self.src[start..i];
                let value: f64 = text.parse().map_err(|_| ParseError {
                    offset: start,
                    kind: ParseErrorKind::InvalidNumber(text.to_string()),
                })?;
                self.toks.push((start, Tok::Num(value)));
            } else if c.is_ascii_alphabetic() || c == b'_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                self.toks
                    .push((start, Tok::Ident(self.src[start..i].to_string())));
            } else if b"+-*/^()".contains(&c) {
                self.toks.push((i, Tok::Sym(c as char)));
                i += 1;
            } else {
                let ch = self.src[i..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    offset: i,
                    kind: ParseErrorKind::Unexpected(format!("character `{ch}`")),
                });
            }
        }
        Ok(())
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|(o, _)| *o)
            .unwrap_or(self.src.len())
    }

    fn error(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            offset: self.offset(),
            kind,
        }
    }

    fn unexpected(&self) -> ParseError {
        match self.peek() {
            None => self.error(ParseErrorKind::UnexpectedEnd),
            Some(Tok::Num(v)) => self.error(ParseErrorKind::Unexpected(format!("number {v}"))),
            Some(Tok::Ident(name)) => {
                self.error(ParseErrorKind::Unexpected(format!("identifier `{name}`")))
            }
            Some(Tok::Sym(c)) => self.error(ParseErrorKind::Unexpected(format!("`{c}`"))),
        }
    }

    fn eat(&mut self, sym: char) -> bool {
        if self.peek() == Some(&Tok::Sym(sym)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn parse_all(mut self) -> Result<Expr, ParseError> {
        if let Some(err) = self.lex_error.take() {
            return Err(err);
        }
        if self.toks.is_empty() {
            return Err(ParseError {
                offset: 0,
                kind: ParseErrorKind::Empty,
            });
        }
        let expr = self.expr()?;
        if self.pos < self.toks.len() {
            return Err(self.unexpected());
        }
        Ok(expr)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let exp_offset = self.offset();
        let negative = if self.eat('-') {
            true
        } else {
            self.eat('+');
            false
        };
        let n = match self.peek() {
            Some(Tok::Num(v)) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => *v as i32,
            Some(Tok::Num(_)) | Some(Tok::Ident(_)) | Some(Tok::Sym('(')) => {
                return Err(ParseError {
                    offset: exp_offset,
                    kind: ParseErrorKind::NonIntegerExponent,
                })
            }
            _ => return Err(self.unexpected()),
        };
        self.pos += 1;
        if self.peek() == Some(&Tok::Sym('^')) {
            return Err(self.error(ParseErrorKind::ChainedExponent));
        }
        Ok(Expr::Pow(Box::new(base), if negative { -n } else { n }))
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error(ParseErrorKind::Expected(')')));
                }
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if let Some(i) = variable_index(&name) {
                    return Ok(Expr::Var(i));
                }
                let Some(func) = Func::from_name(&name) else {
                    return Err(ParseError {
                        offset,
                        kind: ParseErrorKind::UnknownIdentifier(name),
                    });
                };
                if !self.eat('(') {
                    return Err(self.error(ParseErrorKind::Expected('(')));
                }
                let arg = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error(ParseErrorKind::Expected(')')));
                }
                Ok(Expr::Call(func, Box::new(arg)))
            }
            _ => Err(self.unexpected()),
        }
    }
}

fn variable_index(name: &str) -> Option<usize> {
    match name {
        "x0" => Some(0),
        "x1" => Some(1),
        "x2" => Some(2),
        "x3" => Some(3),
        _ => None,
    }
}
