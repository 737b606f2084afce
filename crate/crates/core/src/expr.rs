//! Small arithmetic expression language for forcing and initial data.
//!
//! Grammar: `+ - * /`, integer powers `^n`, unary minus, parentheses,
//! `sin`, `cos`, `exp`, the constant `pi` and the variables `t`, `x1`, `x2`, `y`.
//! Evaluation carries first derivatives with respect to `t`, `x1`, `x2`
//! and `y` so forcing gradients never need finite differences.

use std::fmt;

use crate::error::{FsiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X1,
    X2,
    Y,
}

const NVARS: usize = 4;

impl Var {
    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Sin(Box<Node>),
    Cos(Box<Node>),
    Exp(Box<Node>),
}

/// Value and gradient with respect to `(t, x1, x2, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; NVARS],
}

impl Dual {
    fn constant(v: f64) -> Self {
        Dual { v, d: [0.0; NVARS] }
    }

    fn map(self, f: f64, df: f64) -> Self {
        Dual { v: f, d: self.d.map(|x| df * x) }
    }

    pub fn partial(&self, var: Var) -> f64 {
        self.d[var.index()]
    }
}

/// Point of evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Point {
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let root = p.sum()?;
        if p.pos != p.tokens.len() {
            return Err(FsiError::InvalidArgument(format!("unexpected trailing input in `{src}`")));
        }
        Ok(Expr { source: src.trim().to_string(), root })
    }

    pub fn zero() -> Expr {
        Expr { source: "0".into(), root: Node::Num(0.0) }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// True when the expression is the literal constant zero.
    pub fn is_zero(&self) -> bool {
        self.root == Node::Num(0.0)
    }

    pub fn uses(&self, var: Var) -> bool {
        fn walk(n: &Node, var: Var) -> bool {
            match n {
                Node::Num(_) => false,
                Node::Var(v) => *v == var,
                Node::Neg(a) | Node::Pow(a, _) | Node::Sin(a) | Node::Cos(a) | Node::Exp(a) => walk(a, var),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => walk(a, var) || walk(b, var),
            }
        }
        walk(&self.root, var)
    }

    pub fn eval(&self, p: Point) -> f64 {
        self.eval_dual(p).v
    }

    pub fn eval_dual(&self, p: Point) -> Dual {
        eval(&self.root, &p)
    }
}

fn eval(n: &Node, p: &Point) -> Dual {
    match n {
        Node::Num(c) => Dual::constant(*c),
        Node::Var(v) => {
            let val = match v {
                Var::T => p.t,
                Var::X1 => p.x1,
                Var::X2 => p.x2,
                Var::Y => p.y,
            };
            let mut d = [0.0; NVARS];
            d[v.index()] = 1.0;
            Dual { v: val, d }
        }
        Node::Neg(a) => {
            let a = eval(a, p);
            a.map(-a.v, -1.0)
        }
        Node::Add(a, b) => {
            let (a, b) = (eval(a, p), eval(b, p));
            Dual { v: a.v + b.v, d: std::array::from_fn(|i| a.d[i] + b.d[i]) }
        }
        Node::Sub(a, b) => {
            let (a, b) = (eval(a, p), eval(b, p));
            Dual { v: a.v - b.v, d: std::array::from_fn(|i| a.d[i] - b.d[i]) }
        }
        Node::Mul(a, b) => {
            let (a, b) = (eval(a, p), eval(b, p));
            Dual { v: a.v * b.v, d: std::array::from_fn(|i| a.d[i] * b.v + a.v * b.d[i]) }
        }
        Node::Div(a, b) => {
            let (a, b) = (eval(a, p), eval(b, p));
            Dual { v: a.v / b.v, d: std::array::from_fn(|i| (a.d[i] * b.v - a.v * b.d[i]) / (b.v * b.v)) }
        }
        Node::Pow(a, k) => {
            let a = eval(a, p);
            let df = if *k == 0 { 0.0 } else { *k as f64 * a.v.powi(k - 1) };
            a.map(a.v.powi(*k), df)
        }
        Node::Sin(a) => {
            let a = eval(a, p);
            a.map(a.v.sin(), a.v.cos())
        }
        Node::Cos(a) => {
            let a = eval(a, p);
            a.map(a.v.cos(), -a.v.sin())
        }
        Node::Exp(a) => {
            let a = eval(a, p);
            let e = a.v.exp();
            a.map(e, e)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse().map_err(|_| FsiError::InvalidArgument(format!("bad number `{s}`")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            return Err(FsiError::InvalidArgument(format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<Node> {
        let mut lhs = self.product()?;
        loop {
            if self.eat('+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.product()?));
            } else if self.eat('-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.product()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn product(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat('^') {
            let neg = self.eat('-');
            match self.tokens.get(self.pos) {
                Some(Tok::Num(v)) if v.fract() == 0.0 && v.abs() < 64.0 => {
                    let k = *v as i32;
                    self.pos += 1;
                    return Ok(Node::Pow(Box::new(base), if neg { -k } else { k }));
                }
                _ => return Err(FsiError::InvalidArgument("exponent must be an integer literal".into())),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let tok = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        match tok {
            Some(Tok::Num(v)) => Ok(Node::Num(v)),
            Some(Tok::Op('(')) => {
                let inner = self.sum()?;
                if !self.eat(')') {
                    return Err(FsiError::InvalidArgument("missing `)`".into()));
                }
                Ok(inner)
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "t" => Ok(Node::Var(Var::T)),
                "x1" => Ok(Node::Var(Var::X1)),
                "x2" => Ok(Node::Var(Var::X2)),
                "y" => Ok(Node::Var(Var::Y)),
                "pi" => Ok(Node::Num(std::f64::consts::PI)),
                "sin" | "cos" | "exp" => {
                    if !self.eat('(') {
                        return Err(FsiError::InvalidArgument(format!("`{name}` needs parentheses")));
                    }
                    let arg = Box::new(self.sum()?);
                    if !self.eat(')') {
                        return Err(FsiError::InvalidArgument("missing `)`".into()));
                    }
                    Ok(match name.as_str() {
                        "sin" => Node::Sin(arg),
                        "cos" => Node::Cos(arg),
                        _ => Node::Exp(arg),
                    })
                }
                other => Err(FsiError::InvalidArgument(format!("unknown identifier `{other}`"))),
            },
            Some(Tok::Op(c)) => Err(FsiError::InvalidArgument(format!("unexpected `{c}`"))),
            None => Err(FsiError::InvalidArgument("unexpected end of expression".into())),
        }
    }
}
