//! Closed-form scalar functions of one variable with exact derivatives of any
//! order.
//!
//! The grammar covers `cos(w x)`, `sin(w x)`, `exp(w x)`, `x^k`, constants,
//! sums and products, plus `|x - c|^p` (optionally times `sign(x - c)`) for
//! finite-smoothness test solutions.

use std::fmt;

use crate::error::{Result, RfmError};
use crate::problem::GevreyEnvelope;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Cos(f64),
    Sin(f64),
    Exp(f64),
    Pow(u32),
    /// `|x - center|^power`, times `sign(x - center)` when `odd`.
    AbsPow {
        center: f64,
        power: f64,
        odd: bool,
    },
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn x() -> Self {
        Expr::Pow(1)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn add(self, other: Expr) -> Expr {
        match (self, other) {
            (Expr::Const(a), Expr::Const(b)) => Expr::Const(a + b),
            (a, b) if a.is_zero() => b,
            (a, b) if b.is_zero() => a,
            (a, b) => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(self, other: Expr) -> Expr {
        match (self, other) {
            (Expr::Const(a), Expr::Const(b)) => Expr::Const(a * b),
            (a, b) if a.is_zero() || b.is_zero() => Expr::Const(0.0),
            (Expr::Const(1.0), b) => b,
            (a, Expr::Const(1.0)) => a,
            (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn scale(self, a: f64) -> Expr {
        Expr::Const(a).mul(self)
    }

    /// Symbolic first derivative.
    pub fn derivative(&self) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Cos(w) => Expr::Sin(*w).scale(-w),
            Expr::Sin(w) => Expr::Cos(*w).scale(*w),
            Expr::Exp(w) => Expr::Exp(*w).scale(*w),
            Expr::Pow(0) => Expr::Const(0.0),
            Expr::Pow(k) => Expr::Pow(k - 1).scale(*k as f64),
            Expr::AbsPow { power, .. } if *power == 0.0 => Expr::Const(0.0),
            Expr::AbsPow { center, power, odd } => Expr::AbsPow {
                center: *center,
                power: power - 1.0,
                odd: !odd,
            }
            .scale(*power),
            Expr::Add(a, b) => a.derivative().add(b.derivative()),
            Expr::Mul(a, b) => a.derivative().mul((**b).clone()).add((**a).clone().mul(b.derivative())),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.derivs(x, 0)[0]
    }

    pub fn deriv(&self, x: f64, order: usize) -> f64 {
        self.derivs(x, order)[order]
    }

    /// Values of the derivatives of order `0..=max_order` at `x`.
    pub fn derivs(&self, x: f64, max_order: usize) -> Vec<f64> {
        let n = max_order + 1;
        match self {
            Expr::Const(c) => {
                let mut v = vec![0.0; n];
                v[0] = *c;
                v
            }
            Expr::Cos(w) | Expr::Sin(w) => {
                let (s, c) = (w * x).sin_cos();
                let cycle = if matches!(self, Expr::Cos(_)) {
                    [c, -s, -c, s]
                } else {
                    [s, c, -s, -c]
                };
                let mut wp = 1.0;
                (0..n)
                    .map(|j| {
                        let v = wp * cycle[j % 4];
                        wp *= w;
                        v
                    })
                    .collect()
            }
            Expr::Exp(w) => {
                let e = (w * x).exp();
                let mut wp = 1.0;
                (0..n)
                    .map(|_| {
                        let v = wp * e;
                        wp *= w;
                        v
                    })
                    .collect()
            }
            Expr::Pow(k) => (0..n)
                .map(|j| {
                    let j = j as u32;
                    if j > *k {
                        0.0
                    } else {
                        let falling: f64 = ((k - j + 1)..=*k).map(f64::from).product();
                        falling * x.powi((k - j) as i32)
                    }
                })
                .collect(),
            Expr::AbsPow { center, power, odd } => {
                let d = x - center;
                let sign = if d < 0.0 { -1.0 } else { 1.0 };
                let mut falling = 1.0;
                (0..n)
                    .map(|j| {
                        let coef = falling;
                        falling *= power - j as f64;
                        if coef == 0.0 {
                            return 0.0;
                        }
                        let e = power - j as f64;
                        let signed = (*odd as usize + j) % 2 == 1;
                        if d == 0.0 {
                            if e > 0.0 {
                                0.0
                            } else if e == 0.0 && !signed {
                                coef
                            } else {
                                f64::NAN
                            }
                        } else {
                            let s = if signed { sign } else { 1.0 };
                            coef * s * d.abs().powf(e)
                        }
                    })
                    .collect()
            }
            Expr::Add(a, b) => {
                let (va, vb) = (a.derivs(x, max_order), b.derivs(x, max_order));
                va.iter().zip(&vb).map(|(p, q)| p + q).collect()
            }
            Expr::Mul(a, b) => {
                let (va, vb) = (a.derivs(x, max_order), b.derivs(x, max_order));
                (0..n)
                    .map(|m| {
                        let mut binom = 1.0;
                        let mut acc = 0.0;
                        for k in 0..=m {
                            acc += binom * va[k] * vb[m - k];
                            binom = binom * (m - k) as f64 / (k + 1) as f64;
                        }
                        acc
                    })
                    .collect()
            }
        }
    }

    /// Certified Gevrey envelope on `[-r, r]`, or `None` when the expression
    /// contains a finite-smoothness factor.
    pub fn envelope(&self, r: f64) -> Option<GevreyEnvelope> {
        Some(match self {
            Expr::Const(c) => GevreyEnvelope::new(c.abs(), 0.0, 0.0),
            Expr::Cos(w) | Expr::Sin(w) => GevreyEnvelope::new(1.0, w.abs(), 0.0),
            Expr::Exp(w) => GevreyEnvelope::new((w.abs() * r).exp(), w.abs(), 0.0),
            Expr::Pow(0) => GevreyEnvelope::new(1.0, 0.0, 0.0),
            Expr::Pow(k) => GevreyEnvelope::new(r.powi(*k as i32), *k as f64 / r, 0.0),
            Expr::AbsPow { .. } => return None,
            Expr::Add(a, b) => a.envelope(r)?.sum(&b.envelope(r)?),
            Expr::Mul(a, b) => a.envelope(r)?.product(&b.envelope(r)?),
        })
    }

    /// Upper bound for `|self|` on `[-r, r]`.
    pub fn sup_bound(&self, r: f64) -> f64 {
        match self {
            Expr::Const(c) => c.abs(),
            Expr::Cos(_) | Expr::Sin(_) => 1.0,
            Expr::Exp(w) => (w.abs() * r).exp(),
            Expr::Pow(k) => r.powi(*k as i32),
            Expr::AbsPow { center, power, .. } => {
                if *power >= 0.0 {
                    (r + center.abs()).powf(*power)
                } else {
                    f64::INFINITY
                }
            }
            Expr::Add(a, b) => a.sup_bound(r) + b.sup_bound(r),
            Expr::Mul(a, b) => a.sup_bound(r) * b.sup_bound(r),
        }
    }

    pub fn parse(input: &str) -> Result<Expr> {
        let tokens = tokenize(input)?;
        let mut p = Parser { tokens, pos: 0, input };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(p.error("trailing input"));
        }
        Ok(e)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Cos(w) => write!(f, "cos({w:?}*x)"),
            Expr::Sin(w) => write!(f, "sin({w:?}*x)"),
            Expr::Exp(w) => write!(f, "exp({w:?}*x)"),
            Expr::Pow(k) => write!(f, "x^{k}"),
            Expr::AbsPow { center, power, odd } => {
                write!(f, "abs(x - {center:?})^{power:?}")?;
                if *odd {
                    write!(f, "*sign(x - {center:?})")?;
                }
                Ok(())
            }
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(input: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = input.chars().collect();
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
            let v = s.parse::<f64>().map_err(|_| RfmError::Parse {
                input: input.to_string(),
                reason: format!("bad number `{s}`"),
            })?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*^()".contains(c) {
            out.push(Tok::Sym(c));
            i += 1;
        } else {
            return Err(RfmError::Parse {
                input: input.to_string(),
                reason: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Tok>,
    pos: usize,
    input: &'a str,
}

impl Parser<'_> {
    fn error(&self, reason: impl Into<String>) -> RfmError {
        RfmError::Parse {
            input: self.input.to_string(),
            reason: reason.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            if self.eat('+') {
                acc = acc.add(self.term()?);
            } else if self.eat('-') {
                acc = acc.add(self.term()?.scale(-1.0));
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        while self.eat('*') {
            acc = acc.mul(self.unary()?);
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(self.unary()?.scale(-1.0));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let negative = self.eat('-');
        let p = match self.peek() {
            Some(Tok::Num(v)) => *v,
            _ => return Err(self.error("exponent must be a number")),
        };
        self.pos += 1;
        let p = if negative { -p } else { p };
        match base {
            Expr::Pow(1) if p >= 0.0 && p.fract() == 0.0 => Ok(Expr::Pow(p as u32)),
            Expr::AbsPow {
                center,
                power: 1.0,
                odd: false,
            } => Ok(Expr::AbsPow {
                center,
                power: p,
                odd: false,
            }),
            Expr::Const(c) => Ok(Expr::Const(c.powf(p))),
            b if p >= 0.0 && p.fract() == 0.0 => {
                let mut acc = Expr::Const(1.0);
                for _ in 0..(p as u32) {
                    acc = acc.mul(b.clone());
                }
                Ok(acc)
            }
            _ => Err(self.error("only integer powers of general expressions are supported")),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match name.as_str() {
                    "x" => Ok(Expr::x()),
                    "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                    "cos" | "sin" | "exp" | "abs" | "sign" => {
                        self.expect('(')?;
                        let arg = self.expr()?;
                        self.expect(')')?;
                        self.function(&name, &arg)
                    }
                    other => Err(self.error(format!("unknown identifier `{other}`"))),
                }
            }
            _ => Err(self.error("unexpected end of expression")),
        }
    }

    fn function(&self, name: &str, arg: &Expr) -> Result<Expr> {
        match name {
            "cos" | "sin" | "exp" => {
                let w = linear_coefficient(arg)
                    .ok_or_else(|| self.error(format!("{name} takes an argument of the form w*x")))?;
                Ok(match name {
                    "cos" => Expr::Cos(w),
                    "sin" => Expr::Sin(w),
                    _ => Expr::Exp(w),
                })
            }
            _ => {
                let center =
                    shift_of(arg).ok_or_else(|| self.error(format!("{name} takes an argument of the form x - c")))?;
                Ok(Expr::AbsPow {
                    center,
                    power: if name == "abs" { 1.0 } else { 0.0 },
                    odd: name == "sign",
                })
            }
        }
    }
}

fn linear_coefficient(e: &Expr) -> Option<f64> {
    match e {
        Expr::Pow(1) => Some(1.0),
        Expr::Const(c) if *c == 0.0 => Some(0.0),
        Expr::Mul(a, b) => match (&**a, &**b) {
            (Expr::Const(c), other) | (other, Expr::Const(c)) => Some(c * linear_coefficient(other)?),
            _ => None,
        },
        _ => None,
    }
}

/// `c` for an argument of the form `x - c`.
fn shift_of(e: &Expr) -> Option<f64> {
    match e {
        Expr::Pow(1) => Some(0.0),
        Expr::Add(a, b) => match (&**a, &**b) {
            (Expr::Pow(1), Expr::Const(c)) | (Expr::Const(c), Expr::Pow(1)) => Some(-c),
            _ => None,
        },
        _ => None,
    }
}
