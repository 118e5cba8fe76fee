//! Polynomial/rational expressions in a single variable `x`.
//!
//! Grammar:
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | '+' unary | power
//! power := atom ('^' integer)?
//! atom  := number | 'x' | '(' expr ')'
//! ```
//!
//! Derivatives are symbolic, so Jacobians of user branches carry no
//! finite-difference error.

use crate::error::{Error, Result};
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    X,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
}

/// A parsed expression together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    node: Node,
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser { chars: src.chars().filter(|c| !c.is_whitespace()).collect(), pos: 0 };
        if p.chars.is_empty() {
            return Err(Error::Parse("empty expression".into()));
        }
        let node = p.expr()?;
        if p.pos != p.chars.len() {
            return Err(Error::Parse(format!("unexpected '{}' at {} in '{}'", p.chars[p.pos], p.pos, src)));
        }
        Ok(Expr { source: src.trim().to_string(), node })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, x: f64) -> f64 {
        eval(&self.node, x)
    }

    /// Symbolic derivative with respect to `x`.
    pub fn derivative(&self) -> Expr {
        let node = simplify(diff(&self.node));
        Expr { source: format!("d/dx[{}]", self.source), node }
    }

    /// True when the expression does not depend on `x`.
    pub fn is_constant(&self) -> bool {
        !depends(&self.node)
    }
}

fn depends(n: &Node) -> bool {
    match n {
        Node::Num(_) => false,
        Node::X => true,
        Node::Neg(a) | Node::Pow(a, _) => depends(a),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => depends(a) || depends(b),
    }
}

fn eval(n: &Node, x: f64) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::X => x,
        Node::Neg(a) => -eval(a, x),
        Node::Add(a, b) => eval(a, x) + eval(b, x),
        Node::Sub(a, b) => eval(a, x) - eval(b, x),
        Node::Mul(a, b) => eval(a, x) * eval(b, x),
        Node::Div(a, b) => eval(a, x) / eval(b, x),
        Node::Pow(a, k) => eval(a, x).powi(*k),
    }
}

fn diff(n: &Node) -> Node {
    use Node::*;
    match n {
        Num(_) => Num(0.0),
        X => Num(1.0),
        Neg(a) => Neg(Box::new(diff(a))),
        Add(a, b) => Add(Box::new(diff(a)), Box::new(diff(b))),
        Sub(a, b) => Sub(Box::new(diff(a)), Box::new(diff(b))),
        Mul(a, b) => Add(
            Box::new(Mul(Box::new(diff(a)), b.clone())),
            Box::new(Mul(a.clone(), Box::new(diff(b)))),
        ),
        Div(a, b) => Div(
            Box::new(Sub(
                Box::new(Mul(Box::new(diff(a)), b.clone())),
                Box::new(Mul(a.clone(), Box::new(diff(b)))),
            )),
            Box::new(Pow(b.clone(), 2)),
        ),
        Pow(a, k) => {
            if *k == 0 {
                Num(0.0)
            } else {
                Mul(
                    Box::new(Mul(Box::new(Num(*k as f64)), Box::new(Pow(a.clone(), k - 1)))),
                    Box::new(diff(a)),
                )
            }
        }
    }
}

fn simplify(n: Node) -> Node {
    use Node::*;
    match n {
        Neg(a) => match simplify(*a) {
            Num(v) => Num(-v),
            s => Neg(Box::new(s)),
        },
        Add(a, b) => match (simplify(*a), simplify(*b)) {
            (Num(x), Num(y)) => Num(x + y),
            (Num(z), s) | (s, Num(z)) if z == 0.0 => s,
            (s, t) => Add(Box::new(s), Box::new(t)),
        },
        Sub(a, b) => match (simplify(*a), simplify(*b)) {
            (Num(x), Num(y)) => Num(x - y),
            (s, Num(z)) if z == 0.0 => s,
            (Num(z), t) if z == 0.0 => Neg(Box::new(t)),
            (s, t) => Sub(Box::new(s), Box::new(t)),
        },
        Mul(a, b) => match (simplify(*a), simplify(*b)) {
            (Num(x), Num(y)) => Num(x * y),
            (Num(z), _) | (_, Num(z)) if z == 0.0 => Num(0.0),
            (Num(o), s) | (s, Num(o)) if o == 1.0 => s,
            (s, t) => Mul(Box::new(s), Box::new(t)),
        },
        Div(a, b) => match (simplify(*a), simplify(*b)) {
            (Num(z), _) if z == 0.0 => Num(0.0),
            (s, Num(o)) if o == 1.0 => s,
            (s, t) => Div(Box::new(s), Box::new(t)),
        },
        Pow(a, k) => match (simplify(*a), k) {
            (_, 0) => Num(1.0),
            (s, 1) => s,
            (Num(v), k) => Num(v.powi(k)),
            (s, k) => Pow(Box::new(s), k),
        },
        other => other,
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                '+' => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                '-' => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.peek() {
            match c {
                '*' => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                '/' => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some('-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek() == Some('^') {
            self.pos += 1;
            let k = self.integer()?;
            return Ok(Node::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<i32> {
        let paren = self.peek() == Some('(');
        if paren {
            self.pos += 1;
        }
        let mut neg = false;
        if matches!(self.peek(), Some('-') | Some('+')) {
            neg = self.peek() == Some('-');
            self.pos += 1;
        }
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Parse("exponent must be an integer literal".into()));
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        let mut k: i32 = s.parse().map_err(|_| Error::Parse(format!("bad exponent '{s}'")))?;
        if neg {
            k = -k;
        }
        if paren {
            if self.peek() != Some(')') {
                return Err(Error::Parse("unclosed exponent".into()));
            }
            self.pos += 1;
        }
        Ok(k)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            Some('x') => {
                self.pos += 1;
                Ok(Node::X)
            }
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(Error::Parse("missing ')'".into()));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) => Err(Error::Parse(format!("unexpected '{c}' at {}", self.pos))),
            None => Err(Error::Parse("unexpected end of expression".into())),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            self.pos += 1;
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            self.pos += 1;
            if matches!(self.peek(), Some('-') | Some('+')) {
                self.pos += 1;
            }
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse::<f64>().map(Node::Num).map_err(|_| Error::Parse(format!("bad number '{s}'")))
    }
}
