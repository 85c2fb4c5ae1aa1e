//! Expression trees over chart coordinates `x1..xN`.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' ['-'] integer)?
//! atom  := number | 'x' index | func '(' expr ')' | '(' expr ')'
//! func  := sin | cos | exp | sqrt | neg
//! ```

use std::fmt;

use super::jet::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based coordinate index (`x1` is `Var(0)`).
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Neg(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Sqrt(Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser { chars: src.char_indices().collect(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    /// Largest coordinate index referenced, plus one.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.arity().max(b.arity())
            }
            Expr::Pow(a, _)
            | Expr::Neg(a)
            | Expr::Sin(a)
            | Expr::Cos(a)
            | Expr::Exp(a)
            | Expr::Sqrt(a) => a.arity(),
        }
    }

    /// Affine combination `c + Σ a_j x_j`, dropping zero coefficients.
    pub fn affine(c: f64, coeffs: &[f64]) -> Expr {
        let mut acc = Expr::Const(c);
        for (j, &a) in coeffs.iter().enumerate() {
            if a != 0.0 {
                let term = Expr::Mul(Box::new(Expr::Const(a)), Box::new(Expr::Var(j)));
                acc = Expr::Add(Box::new(acc), Box::new(term));
            }
        }
        acc
    }

    fn compile_into(&self, ops: &mut Vec<Op>) {
        match self {
            Expr::Const(v) => ops.push(Op::Const(*v)),
            Expr::Var(i) => ops.push(Op::Var(*i)),
            Expr::Add(a, b) => {
                a.compile_into(ops);
                b.compile_into(ops);
                ops.push(Op::Add);
            }
            Expr::Sub(a, b) => {
                a.compile_into(ops);
                b.compile_into(ops);
                ops.push(Op::Sub);
            }
            Expr::Mul(a, b) => {
                a.compile_into(ops);
                b.compile_into(ops);
                ops.push(Op::Mul);
            }
            Expr::Div(a, b) => {
                a.compile_into(ops);
                b.compile_into(ops);
                ops.push(Op::Div);
            }
            Expr::Pow(a, n) => {
                a.compile_into(ops);
                ops.push(Op::Pow(*n));
            }
            Expr::Neg(a) => {
                a.compile_into(ops);
                ops.push(Op::Neg);
            }
            Expr::Sin(a) => {
                a.compile_into(ops);
                ops.push(Op::Sin);
            }
            Expr::Cos(a) => {
                a.compile_into(ops);
                ops.push(Op::Cos);
            }
            Expr::Exp(a) => {
                a.compile_into(ops);
                ops.push(Op::Exp);
            }
            Expr::Sqrt(a) => {
                a.compile_into(ops);
                ops.push(Op::Sqrt);
            }
        }
    }

    pub fn compile(&self) -> Program {
        let mut ops = Vec::new();
        self.compile_into(&mut ops);
        Program { ops }
    }

    /// True if the expression is a literal constant (after no simplification).
    pub fn is_zero_literal(&self) -> bool {
        matches!(self, Expr::Const(v) if *v == 0.0)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => {
                if *v < 0.0 {
                    write!(f, "neg({})", -v)
                } else {
                    write!(f, "{v:?}")
                }
            }
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, n) => write!(f, "({a})^{n}"),
            Expr::Neg(a) => write!(f, "neg({a})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Sqrt(a) => write!(f, "sqrt({a})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Add,
    Sub,
    Mul,
    Div,
    Pow(i32),
    Neg,
    Sin,
    Cos,
    Exp,
    Sqrt,
}

/// Postfix program compiled from an [`Expr`].
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    ops: Vec<Op>,
}

impl Program {
    pub fn eval<S: Scalar>(&self, x: &[S]) -> Result<S> {
        let mut stack: Vec<S> = Vec::with_capacity(16);
        for op in &self.ops {
            match *op {
                Op::Const(v) => stack.push(S::cst(v)),
                Op::Var(i) => stack.push(x[i]),
                Op::Neg => {
                    let a = stack.pop().unwrap();
                    stack.push(-a);
                }
                Op::Sin => {
                    let a = stack.pop().unwrap();
                    stack.push(a.sin());
                }
                Op::Cos => {
                    let a = stack.pop().unwrap();
                    stack.push(a.cos());
                }
                Op::Exp => {
                    let a = stack.pop().unwrap();
                    stack.push(a.exp());
                }
                Op::Sqrt => {
                    let a = stack.pop().unwrap();
                    if a.re() < 0.0 {
                        return Err(Error::UndefinedExpression(format!(
                            "sqrt of negative value {}",
                            a.re()
                        )));
                    }
                    stack.push(a.sqrt());
                }
                Op::Pow(n) => {
                    let a = stack.pop().unwrap();
                    if n < 0 && a.re() == 0.0 {
                        return Err(Error::UndefinedExpression(
                            "negative power of zero".into(),
                        ));
                    }
                    stack.push(a.powi(n));
                }
                Op::Add | Op::Sub | Op::Mul | Op::Div => {
                    let b = stack.pop().unwrap();
                    let a = stack.pop().unwrap();
                    stack.push(match *op {
                        Op::Add => a + b,
                        Op::Sub => a - b,
                        Op::Mul => a * b,
                        _ => {
                            if b.re() == 0.0 {
                                return Err(Error::UndefinedExpression(
                                    "division by zero".into(),
                                ));
                            }
                            a / b
                        }
                    });
                }
            }
        }
        let v = stack.pop().unwrap();
        if !v.all_finite() {
            return Err(Error::UndefinedExpression("non-finite result".into()));
        }
        Ok(v)
    }
}

struct Parser {
    chars: Vec<(usize, char)>,
    pos: usize,
}

impl Parser {
    fn error(&self, msg: &str) -> Error {
        let column = self.chars.get(self.pos).map(|c| c.0).unwrap_or_else(|| {
            self.chars.last().map(|c| c.0 + c.1.len_utf8()).unwrap_or(0)
        });
        Error::Parse { column: column + 1, message: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].1.is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|c| c.1)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
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
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            let negative = self.eat('-');
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.chars.len() && self.chars[self.pos].1.is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.error("exponent must be an integer literal"));
            }
            if self.pos < self.chars.len() && matches!(self.chars[self.pos].1, '.' | 'e' | 'E') {
                return Err(self.error("exponent must be an integer literal"));
            }
            let digits: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
            let n: i32 = digits.parse().map_err(|_| self.error("exponent out of range"))?;
            return Ok(Expr::Pow(Box::new(base), if negative { -n } else { n }));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.chars.len() && self.chars[self.pos].1.is_ascii_alphanumeric()
                {
                    self.pos += 1;
                }
                let word: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
                if let Some(idx) = word.strip_prefix('x') {
                    if !idx.is_empty() && idx.chars().all(|c| c.is_ascii_digit()) {
                        let i: usize = idx.parse().map_err(|_| self.error("bad index"))?;
                        if i == 0 {
                            self.pos = start;
                            return Err(self.error("coordinates are numbered from x1"));
                        }
                        return Ok(Expr::Var(i - 1));
                    }
                }
                let wrap: fn(Box<Expr>) -> Expr = match word.as_str() {
                    "sin" => Expr::Sin,
                    "cos" => Expr::Cos,
                    "exp" => Expr::Exp,
                    "sqrt" => Expr::Sqrt,
                    "neg" => Expr::Neg,
                    _ => {
                        self.pos = start;
                        return Err(self.error(&format!("unknown identifier `{word}`")));
                    }
                };
                if !self.eat('(') {
                    return Err(self.error("expected `(` after function name"));
                }
                let arg = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(wrap(Box::new(arg)))
            }
            Some(c) => Err(self.error(&format!("unexpected character `{c}`"))),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let n = self.chars.len();
        while self.pos < n && (self.chars[self.pos].1.is_ascii_digit() || self.chars[self.pos].1 == '.')
        {
            self.pos += 1;
        }
        if self.pos < n && matches!(self.chars[self.pos].1, 'e' | 'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < n && matches!(self.chars[self.pos].1, '+' | '-') {
                self.pos += 1;
            }
            let digits_start = self.pos;
            while self.pos < n && self.chars[self.pos].1.is_ascii_digit() {
                self.pos += 1;
            }
            if digits_start == self.pos {
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
        text.parse::<f64>().map(Expr::Const).map_err(|_| {
            self.pos = start;
            self.error(&format!("malformed number `{text}`"))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, x: &[f64]) -> f64 {
        Expr::parse(src).unwrap().compile().eval(x).unwrap()
    }

    #[test]
    fn precedence_and_unary_minus() {
        assert_eq!(eval("1 + 2 * 3", &[]), 7.0);
        assert_eq!(eval("-x1^2", &[3.0]), -9.0);
        assert_eq!(eval("2 * x1 - x2 / 4", &[1.0, 8.0]), 0.0);
        assert_eq!(eval("neg(x2) + sqrt(4)", &[0.0, 1.0]), 1.0);
        assert_eq!(eval("x1^-2", &[2.0]), 0.25);
        assert_eq!(eval("1.5e1 + .5", &[]), 15.5);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Expr::parse("x0").is_err());
        assert!(Expr::parse("x1 ^ 1.5").is_err());
        assert!(Expr::parse("tan(x1)").is_err());
        assert!(Expr::parse("(x1 + 1").is_err());
        assert!(Expr::parse("x1 x2").is_err());
        assert!(Expr::parse("").is_err());
    }

    #[test]
    fn domain_guards() {
        let p = Expr::parse("1 / x1").unwrap().compile();
        assert!(matches!(p.eval(&[0.0]), Err(Error::UndefinedExpression(_))));
        let p = Expr::parse("sqrt(x1)").unwrap().compile();
        assert!(matches!(p.eval(&[-1.0]), Err(Error::UndefinedExpression(_))));
    }

    #[test]
    fn display_reparses_to_same_values() {
        let e = Expr::parse("sin(x1) * (x2 - 3)^2 / exp(-x1) + neg(2.5)").unwrap();
        let back = Expr::parse(&e.to_string()).unwrap();
        let x = [0.3, 1.7];
        assert_eq!(e.compile().eval(&x).unwrap(), back.compile().eval(&x).unwrap());
    }
}
