//! A small arithmetic language for drift and scale coefficients.
//!
//! Grammar: `+ - * / ^`, parentheses, numbers, `pi`, the state `x`,
//! parameters `alpha1, alpha2, ...` and `gamma1, gamma2, ...`, and the
//! functions `exp`, `log`, `sin`, `cos`, `pow(base, exponent)`.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
// Float math for no_std builds; std builds see the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// A parameter reference, zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Alpha(usize),
    Gamma(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    X,
    Param(Param),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

// Constructors that fold constants and drop neutral elements, keeping
// derivative trees small.
fn konst(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(c) => Some(*c),
        _ => None,
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (konst(&a), konst(&b)) {
        (Some(x), Some(y)) => Expr::Const(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (konst(&a), konst(&b)) {
        (Some(x), Some(y)) => Expr::Const(x - y),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (konst(&a), konst(&b)) {
        (Some(x), Some(y)) => Expr::Const(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Const(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), _) if x == -1.0 => neg(b),
        (_, Some(y)) if y == -1.0 => neg(a),
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (konst(&a), konst(&b)) {
        (Some(x), Some(y)) if y != 0.0 => Expr::Const(x / y),
        (Some(x), _) if x == 0.0 => Expr::Const(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    match (konst(&a), konst(&b)) {
        (Some(x), Some(y)) => Expr::Const(x.powf(y)),
        (_, Some(y)) if y == 0.0 => Expr::Const(1.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::Pow(Box::new(a), Box::new(b)),
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        match p.peek() {
            None => Ok(e),
            Some(t) => Err(Error::Expr(format!("unexpected {t} in `{src}`"))),
        }
    }

    pub fn eval(&self, x: f64, alpha: &[f64], gamma: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::X => x,
            Expr::Param(Param::Alpha(i)) => alpha[*i],
            Expr::Param(Param::Gamma(i)) => gamma[*i],
            Expr::Neg(a) => -a.eval(x, alpha, gamma),
            Expr::Add(a, b) => a.eval(x, alpha, gamma) + b.eval(x, alpha, gamma),
            Expr::Sub(a, b) => a.eval(x, alpha, gamma) - b.eval(x, alpha, gamma),
            Expr::Mul(a, b) => a.eval(x, alpha, gamma) * b.eval(x, alpha, gamma),
            Expr::Div(a, b) => a.eval(x, alpha, gamma) / b.eval(x, alpha, gamma),
            Expr::Pow(a, b) => {
                let base = a.eval(x, alpha, gamma);
                match **b {
                    Expr::Const(k) if k == k.round() && k.abs() <= 64.0 => base.powi(k as i32),
                    _ => base.powf(b.eval(x, alpha, gamma)),
                }
            }
            Expr::Exp(a) => a.eval(x, alpha, gamma).exp(),
            Expr::Log(a) => a.eval(x, alpha, gamma).ln(),
            Expr::Sin(a) => a.eval(x, alpha, gamma).sin(),
            Expr::Cos(a) => a.eval(x, alpha, gamma).cos(),
        }
    }

    /// Symbolic partial derivative with respect to a parameter.
    pub fn diff(&self, p: Param) -> Expr {
        match self {
            Expr::Const(_) | Expr::X => Expr::Const(0.0),
            Expr::Param(q) => Expr::Const(if *q == p { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.diff(p)),
            Expr::Add(a, b) => add(a.diff(p), b.diff(p)),
            Expr::Sub(a, b) => sub(a.diff(p), b.diff(p)),
            Expr::Mul(a, b) => add(mul(a.diff(p), (**b).clone()), mul((**a).clone(), b.diff(p))),
            Expr::Div(a, b) => {
                let num = sub(mul(a.diff(p), (**b).clone()), mul((**a).clone(), b.diff(p)));
                div(num, pow((**b).clone(), Expr::Const(2.0)))
            }
            Expr::Pow(a, b) => {
                let (da, db) = (a.diff(p), b.diff(p));
                if let Some(k) = konst(b) {
                    mul(mul(Expr::Const(k), pow((**a).clone(), Expr::Const(k - 1.0))), da)
                } else {
                    // d(a^b) = a^b (b' ln a + b a' / a)
                    let inner = add(mul(db, Expr::Log(a.clone())), div(mul((**b).clone(), da), (**a).clone()));
                    mul(self.clone(), inner)
                }
            }
            Expr::Exp(a) => mul(self.clone(), a.diff(p)),
            Expr::Log(a) => div(a.diff(p), (**a).clone()),
            Expr::Sin(a) => mul(Expr::Cos(a.clone()), a.diff(p)),
            Expr::Cos(a) => neg(mul(Expr::Sin(a.clone()), a.diff(p))),
        }
    }

    /// Visit every parameter reference.
    pub fn params(&self, f: &mut impl FnMut(Param)) {
        match self {
            Expr::Const(_) | Expr::X => {}
            Expr::Param(q) => f(*q),
            Expr::Neg(a) | Expr::Exp(a) | Expr::Log(a) | Expr::Sin(a) | Expr::Cos(a) => a.params(f),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.params(f);
                b.params(f);
            }
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Alpha(i) => write!(f, "alpha{}", i + 1),
            Param::Gamma(i) => write!(f, "gamma{}", i + 1),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::X => write!(f, "x"),
            Expr::Param(p) => write!(f, "{p}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Log(a) => write!(f, "log({a})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Num(v) => write!(f, "number {v}"),
            Token::Ident(s) => write!(f, "`{s}`"),
            Token::Op(c) => write!(f, "`{c}`"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
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
            let v = text.parse::<f64>().map_err(|_| Error::Expr(format!("bad number `{text}`")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token::Ident(String::from(&src[start..i])));
        } else if "+-*/^(),".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::Expr(format!("unexpected character `{c}` in `{src}`")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Token::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.eat(op) {
            Ok(())
        } else {
            Err(Error::Expr(match self.peek() {
                Some(t) => format!("expected `{op}`, found {t}"),
                None => format!("expected `{op}`, found end of input"),
            }))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    // `^` binds tighter than unary minus on its left and is right associative.
    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self.peek().cloned();
        self.pos += 1;
        match tok {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::Op('(')) => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Token::Ident(name)) => self.ident(&name),
            Some(t) => Err(Error::Expr(format!("unexpected {t}"))),
            None => Err(Error::Expr(String::from("unexpected end of input"))),
        }
    }

    fn ident(&mut self, name: &str) -> Result<Expr> {
        match name {
            "x" => return Ok(Expr::X),
            "pi" => return Ok(Expr::Const(core::f64::consts::PI)),
            "exp" | "log" | "sin" | "cos" | "pow" => {
                self.expect('(')?;
                let a = Box::new(self.expr()?);
                let e = match name {
                    "exp" => Expr::Exp(a),
                    "log" => Expr::Log(a),
                    "sin" => Expr::Sin(a),
                    "cos" => Expr::Cos(a),
                    _ => {
                        self.expect(',')?;
                        Expr::Pow(a, Box::new(self.expr()?))
                    }
                };
                self.expect(')')?;
                return Ok(e);
            }
            _ => {}
        }
        let param = |prefix: &str, make: fn(usize) -> Param| -> Option<Param> {
            let idx: usize = name.strip_prefix(prefix)?.parse().ok()?;
            (idx >= 1).then(|| make(idx - 1))
        };
        param("alpha", Param::Alpha)
            .or_else(|| param("gamma", Param::Gamma))
            .map(Expr::Param)
            .ok_or_else(|| Error::Expr(format!("unknown identifier `{name}`")))
    }
}
