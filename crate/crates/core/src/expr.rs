//! Closed-form coefficient expressions in the chart coordinates `x1..xn`.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'pi' | 'x' digits | ident '(' expr ')' | '(' expr ')'
//! ident  := sin | cos | tan | exp | log | ln | sqrt | sinh | cosh | tanh
//! ```
//!
//! `^` is right-associative. Integer constant exponents are evaluated by
//! repeated multiplication so negative bases are allowed.

use std::fmt;

use crate::error::{FinslerError, Result};
use crate::jet::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Sinh,
    Cosh,
    Tanh,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" | "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "log",
            Func::Sqrt => "sqrt",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based coordinate index.
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            src,
        };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
            Expr::Neg(a) | Expr::Call(_, a) => a.max_var(),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.max_var().is_none()
    }

    /// Value when the expression does not depend on `x`.
    pub fn constant_value(&self) -> Option<f64> {
        if self.is_constant() {
            Some(self.eval_f64(&[]))
        } else {
            None
        }
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.eval(x, &0.0)
    }

    /// Evaluate over any [`Scalar`]; `template` supplies the kind for constants.
    pub fn eval<S: Scalar>(&self, x: &[S], template: &S) -> S {
        match self {
            Expr::Const(c) => template.lift(*c),
            Expr::Var(i) => x[*i].clone(),
            Expr::Add(a, b) => a.eval(x, template) + b.eval(x, template),
            Expr::Sub(a, b) => a.eval(x, template) - b.eval(x, template),
            Expr::Mul(a, b) => a.eval(x, template) * b.eval(x, template),
            Expr::Div(a, b) => a.eval(x, template) / b.eval(x, template),
            Expr::Neg(a) => -a.eval(x, template),
            Expr::Pow(a, b) => {
                let base = a.eval(x, template);
                match b.constant_value() {
                    Some(p) if p.fract() == 0.0 && p.abs() < 64.0 => base.powi(p as i32),
                    Some(p) => base.powf(p),
                    None => (b.eval(x, template) * base.ln()).exp(),
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval(x, template);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Tan => v.tan(),
                    Func::Exp => v.exp(),
                    Func::Ln => v.ln(),
                    Func::Sqrt => v.sqrt(),
                    Func::Sinh => v.sinh(),
                    Func::Cosh => v.cosh(),
                    Func::Tanh => v.tanh(),
                }
            }
        }
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

impl Expr {
    pub fn pow(self, p: Expr) -> Expr {
        Expr::Pow(Box::new(self), Box::new(p))
    }

    pub fn call(f: Func, arg: Expr) -> Expr {
        Expr::Call(f, Box::new(arg))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c})")
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Pow(a, b) => write!(f, "({a}^{b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>> {
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
            let text: String = chars[start..i].iter().collect();
            let v = text.parse::<f64>().map_err(|_| FinslerError::ExprParse {
                expr: src.to_string(),
                pos: start,
                msg: format!("bad number `{text}`"),
            })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), start));
        } else if "+-*/^".contains(c) {
            out.push((Tok::Op(c), i));
            i += 1;
        } else if c == '(' {
            out.push((Tok::LParen, i));
            i += 1;
        } else if c == ')' {
            out.push((Tok::RParen, i));
            i += 1;
        } else {
            return Err(FinslerError::ExprParse {
                expr: src.to_string(),
                pos: i,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> FinslerError {
        let pos = self
            .tokens
            .get(self.pos)
            .map(|t| t.1)
            .unwrap_or(self.src.len());
        FinslerError::ExprParse {
            expr: self.src.to_string(),
            pos,
            msg: msg.to_string(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.0)
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == '+' { lhs + rhs } else { lhs - rhs };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == '*' { lhs * rhs } else { lhs / rhs };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(-self.unary()?)
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(base.pow(exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self
            .peek()
            .cloned()
            .ok_or_else(|| self.error("unexpected end of expression"))?;
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.error("expected `)`"));
                }
                self.pos += 1;
                Ok(e)
            }
            Tok::Ident(name) => {
                if name == "pi" {
                    self.pos += 1;
                    return Ok(Expr::Const(std::f64::consts::PI));
                }
                if let Some(rest) = name.strip_prefix('x') {
                    if let Ok(k) = rest.parse::<usize>() {
                        if k == 0 {
                            return Err(self.error("coordinates are numbered from x1"));
                        }
                        self.pos += 1;
                        return Ok(Expr::Var(k - 1));
                    }
                }
                let func = Func::from_name(&name)
                    .ok_or_else(|| self.error(&format!("unknown identifier `{name}`")))?;
                self.pos += 1;
                if self.peek() != Some(&Tok::LParen) {
                    return Err(self.error("expected `(` after function name"));
                }
                self.pos += 1;
                let arg = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.error("expected `)`"));
                }
                self.pos += 1;
                Ok(Expr::call(func, arg))
            }
            _ => Err(self.error("expected a number, variable, or `(`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Jet;

    #[test]
    fn parses_and_evaluates() {
        let e = Expr::parse("x1^2 - 3*x2 + sin(pi/2) * exp(0)").unwrap();
        assert_eq!(e.eval_f64(&[2.0, 1.0]), 4.0 - 3.0 + 1.0);
        let e = Expr::parse("-x1^2").unwrap();
        assert_eq!(e.eval_f64(&[3.0]), -9.0);
        let e = Expr::parse("2^3^2").unwrap();
        assert_eq!(e.eval_f64(&[]), 512.0);
        let e = Expr::parse("4/(1 + x1^2 + x2^2)^2").unwrap();
        assert!((e.eval_f64(&[1.0, 1.0]) - 4.0 / 9.0).abs() < 1e-15);
        let e = Expr::parse("1.5e-1 * x1").unwrap();
        assert!((e.eval_f64(&[2.0]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn reports_errors_with_position() {
        match Expr::parse("x1 + foo(x2)") {
            Err(FinslerError::ExprParse { pos, .. }) => assert_eq!(pos, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Expr::parse("(x1 + 1").is_err());
        assert!(Expr::parse("x0").is_err());
        assert!(Expr::parse("x1 $").is_err());
    }

    #[test]
    fn display_round_trips() {
        let src = "exp(-(x1^2 + x2^2)/2) * cosh(x1) - 0.25";
        let e = Expr::parse(src).unwrap();
        let again = Expr::parse(&e.to_string()).unwrap();
        let p = [0.3, -0.7];
        assert!((e.eval_f64(&p) - again.eval_f64(&p)).abs() < 1e-15);
    }

    #[test]
    fn jet_evaluation_gives_derivatives() {
        let e = Expr::parse("x1^3 * x2 + tanh(x2)").unwrap();
        let v = Jet::seed(&[0.5, 0.2], 3);
        let j = e.eval(&v, &v[0]);
        let sech2 = 1.0 / 0.2f64.cosh().powi(2);
        assert!((j.partial(&[1]) - (0.125 + sech2)).abs() < 1e-13);
        assert!((j.partial(&[0, 0, 1]) - 6.0 * 0.5).abs() < 1e-13);
    }
}
