//! Closed-form expression trees for coefficients, penalties, obstacles and
//! boundary data.
//!
//! Grammar (whitespace ignored between tokens):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('+' | '-') unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'pi' | 'x1' | .. | 'xn'
//!         | ('exp' | 'log' | 'sin' | 'cos') '(' expr ')'
//!         | 'max' '(' expr ',' '0' ')'
//!         | '(' expr ')'
//! number := digits ('.' digits?)? (('e' | 'E') ('+' | '-')? digits)?
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x1^2`
//! means `-(x1^2)`. Integer exponents are evaluated by repeated
//! multiplication, which keeps negative bases legal.

use std::fmt;

use crate::error::{Error, Result};
use crate::poly::{factorial, Polynomial};
use crate::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    /// Zero-based coordinate index.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    /// `max(e, 0)`.
    PosPart(Box<Expr>),
}

impl Expr {
    /// Parse `src` with variables `x1..x{dim}`. `field` names the config entry
    /// in error messages.
    pub fn parse(src: &str, dim: usize, field: &str) -> Result<Expr> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
            dim,
            field,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn num(c: f64) -> Expr {
        Expr::Num(c)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    /// Largest variable index used plus one.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Pi => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) | Expr::Call(_, a) | Expr::PosPart(a) => a.arity(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.arity().max(b.arity())
            }
        }
    }

    /// True when `x_axis` does not appear.
    pub fn independent_of(&self, axis: usize) -> bool {
        match self {
            Expr::Num(_) | Expr::Pi => true,
            Expr::Var(i) => *i != axis,
            Expr::Neg(a) | Expr::Call(_, a) | Expr::PosPart(a) => a.independent_of(axis),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.independent_of(axis) && b.independent_of(axis)
            }
        }
    }

    /// Constant value when no variable appears.
    pub fn constant_value(&self) -> Option<f64> {
        (self.arity() == 0).then(|| self.eval(&[0.0; 3]))
    }

    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            Expr::Num(c) => *c,
            Expr::Pi => std::f64::consts::PI,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => {
                let base = a.eval(x);
                match integer_exponent(b) {
                    Some(k) => base.powi(k),
                    None => base.powf(b.eval(x)),
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval(x);
                match f {
                    Func::Exp => v.exp(),
                    Func::Log => v.ln(),
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                }
            }
            Expr::PosPart(a) => a.eval(x).max(0.0),
        }
    }

    /// Taylor polynomial of total degree `order` about `x0`, in the
    /// displacement variables `t = x - x0`.
    pub fn taylor(&self, x0: &Point, dim: usize, order: usize) -> Result<Polynomial> {
        match self {
            Expr::Num(c) => Ok(Polynomial::constant(dim, order, *c)),
            Expr::Pi => Ok(Polynomial::constant(dim, order, std::f64::consts::PI)),
            Expr::Var(i) => {
                if *i >= dim {
                    return Err(Error::Validation(format!("variable x{} exceeds dimension {dim}", i + 1)));
                }
                Ok(Polynomial::variable(dim, order, *i, x0[*i]))
            }
            Expr::Neg(a) => Ok(a.taylor(x0, dim, order)?.scale(-1.0)),
            Expr::Add(a, b) => Ok(a.taylor(x0, dim, order)?.add(&b.taylor(x0, dim, order)?)),
            Expr::Sub(a, b) => Ok(a.taylor(x0, dim, order)?.sub(&b.taylor(x0, dim, order)?)),
            Expr::Mul(a, b) => Ok(a.taylor(x0, dim, order)?.mul(&b.taylor(x0, dim, order)?)),
            Expr::Div(a, b) => {
                let den = b.taylor(x0, dim, order)?;
                let inv = den
                    .recip()
                    .ok_or_else(|| Error::NonSmooth(format!("division by zero in `{self}`")))?;
                Ok(a.taylor(x0, dim, order)?.mul(&inv))
            }
            Expr::Pow(a, b) => {
                let base = a.taylor(x0, dim, order)?;
                if let Some(k) = integer_exponent(b) {
                    return int_power(&base, k)
                        .ok_or_else(|| Error::NonSmooth(format!("negative power of zero in `{self}`")));
                }
                let c0 = base.constant_term();
                if c0 <= 0.0 {
                    return Err(Error::NonSmooth(format!("non-integer power of a non-positive base in `{self}`")));
                }
                let expo = b.taylor(x0, dim, order)?;
                let z = expo.mul(&base.compose_series(&log_series(c0, order)));
                Ok(z.compose_series(&exp_series(z.constant_term(), order)))
            }
            Expr::Call(f, a) => {
                let inner = a.taylor(x0, dim, order)?;
                let c0 = inner.constant_term();
                let series = match f {
                    Func::Exp => exp_series(c0, order),
                    Func::Log => {
                        if c0 <= 0.0 {
                            return Err(Error::NonSmooth(format!("log of a non-positive value in `{self}`")));
                        }
                        log_series(c0, order)
                    }
                    Func::Sin => trig_series(c0, order, false),
                    Func::Cos => trig_series(c0, order, true),
                };
                Ok(inner.compose_series(&series))
            }
            Expr::PosPart(a) => {
                let inner = a.taylor(x0, dim, order)?;
                let c0 = inner.constant_term();
                if c0 > 0.0 {
                    Ok(inner)
                } else if c0 < 0.0 || order == 0 || inner.is_zero() {
                    Ok(Polynomial::zero(dim, order))
                } else {
                    Err(Error::NonSmooth(format!("`{self}` has a kink at the expansion point")))
                }
            }
        }
    }

    /// Value and gradient at `x`.
    pub fn value_and_gradient(&self, x: &Point, dim: usize) -> Result<(f64, Point)> {
        let jet = self.taylor(x, dim, 1)?;
        let mut g = [0.0; 3];
        for (a, slot) in g.iter_mut().enumerate().take(dim) {
            let mut e = [0u8; 3];
            e[a] = 1;
            *slot = jet.coeff(&e);
        }
        Ok((jet.constant_term(), g))
    }

    /// Replace each `x_i` by `offset[i] + sum_j map[i][j] * y_j`.
    pub fn substitute_affine(&self, offset: &Point, map: &[[f64; 3]; 3], dim: usize) -> Expr {
        match self {
            Expr::Var(i) => {
                let mut acc = Expr::Num(offset[*i]);
                for (j, &m) in map[*i].iter().enumerate().take(dim) {
                    if m != 0.0 {
                        acc = Expr::Add(
                            Box::new(acc),
                            Box::new(Expr::Mul(Box::new(Expr::Num(m)), Box::new(Expr::Var(j)))),
                        );
                    }
                }
                acc
            }
            Expr::Num(_) | Expr::Pi => self.clone(),
            Expr::Neg(a) => Expr::Neg(Box::new(a.substitute_affine(offset, map, dim))),
            Expr::Call(f, a) => Expr::Call(*f, Box::new(a.substitute_affine(offset, map, dim))),
            Expr::PosPart(a) => Expr::PosPart(Box::new(a.substitute_affine(offset, map, dim))),
            Expr::Add(a, b) => bin(Expr::Add, a, b, offset, map, dim),
            Expr::Sub(a, b) => bin(Expr::Sub, a, b, offset, map, dim),
            Expr::Mul(a, b) => bin(Expr::Mul, a, b, offset, map, dim),
            Expr::Div(a, b) => bin(Expr::Div, a, b, offset, map, dim),
            Expr::Pow(a, b) => bin(Expr::Pow, a, b, offset, map, dim),
        }
    }

    /// Scale the whole expression by a constant.
    pub fn scaled(&self, s: f64) -> Expr {
        Expr::Mul(Box::new(Expr::Num(s)), Box::new(self.clone()))
    }

    /// Expression tree of a polynomial in absolute coordinates.
    pub fn from_polynomial(p: &Polynomial) -> Expr {
        let mut acc: Option<Expr> = None;
        for (e, c) in p.terms() {
            let mut term = Expr::Num(c);
            for (axis, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                let factor = if k == 1 {
                    Expr::Var(axis)
                } else {
                    Expr::Pow(Box::new(Expr::Var(axis)), Box::new(Expr::Num(k as f64)))
                };
                term = Expr::Mul(Box::new(term), Box::new(factor));
            }
            acc = Some(match acc {
                None => term,
                Some(a) => Expr::Add(Box::new(a), Box::new(term)),
            });
        }
        acc.unwrap_or(Expr::Num(0.0))
    }
}

fn bin(
    ctor: fn(Box<Expr>, Box<Expr>) -> Expr,
    a: &Expr,
    b: &Expr,
    offset: &Point,
    map: &[[f64; 3]; 3],
    dim: usize,
) -> Expr {
    ctor(
        Box::new(a.substitute_affine(offset, map, dim)),
        Box::new(b.substitute_affine(offset, map, dim)),
    )
}

fn integer_exponent(e: &Expr) -> Option<i32> {
    match e {
        Expr::Num(c) if c.fract() == 0.0 && c.abs() <= 64.0 => Some(*c as i32),
        Expr::Neg(inner) => integer_exponent(inner).map(|k| -k),
        _ => None,
    }
}

fn int_power(base: &Polynomial, k: i32) -> Option<Polynomial> {
    let b = if k < 0 { base.recip()? } else { base.clone() };
    let mut n = k.unsigned_abs();
    let mut result = Polynomial::constant(base.dim(), base.order(), 1.0);
    let mut sq = b;
    while n > 0 {
        if n & 1 == 1 {
            result = result.mul(&sq);
        }
        n >>= 1;
        if n > 0 {
            sq = sq.mul(&sq);
        }
    }
    Some(result)
}

fn exp_series(c0: f64, order: usize) -> Vec<f64> {
    let e = c0.exp();
    (0..=order).map(|k| e / factorial(k)).collect()
}

fn log_series(c0: f64, order: usize) -> Vec<f64> {
    let mut s = vec![c0.ln()];
    for k in 1..=order {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        s.push(sign / (k as f64 * c0.powi(k as i32)));
    }
    s
}

fn trig_series(c0: f64, order: usize, cosine: bool) -> Vec<f64> {
    let (s, c) = c0.sin_cos();
    // derivatives of sin cycle through sin, cos, -sin, -cos
    let cycle = if cosine { [c, -s, -c, s] } else { [s, c, -s, -c] };
    (0..=order).map(|k| cycle[k % 4] / factorial(k)).collect()
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "(-{:?})", -c)
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Pi => write!(f, "pi"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::PosPart(a) => write!(f, "max({a}, 0)"),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
    field: &'a str,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Parse {
            field: self.field.to_string(),
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(match self.unary()? {
                Expr::Num(c) => Expr::Num(-c),
                e => Expr::Neg(Box::new(e)),
            });
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let expo = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(expo)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            self.pos = start;
            return Err(self.error("malformed number"));
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
                return Err(self.error("malformed exponent"));
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Expr::Num).map_err(|_| {
            self.pos = start;
            self.error("malformed number")
        })
    }

    fn ident(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let func = match name {
            "pi" => return Ok(Expr::Pi),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "max" => None,
            _ => {
                if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                    if idx >= 1 && idx <= self.dim {
                        return Ok(Expr::Var(idx - 1));
                    }
                }
                self.pos = start;
                return Err(self.error(&format!("unknown identifier `{name}`")));
            }
        };
        self.expect(b'(')?;
        let arg = self.expr()?;
        let e = match func {
            Some(f) => Expr::Call(f, Box::new(arg)),
            None => {
                self.expect(b',')?;
                let zero_pos = self.pos;
                match self.expr()? {
                    Expr::Num(0.0) => {}
                    _ => {
                        self.pos = zero_pos;
                        return Err(self.error("max supports only a literal 0 second argument"));
                    }
                }
                Expr::PosPart(Box::new(arg))
            }
        };
        self.expect(b')')?;
        Ok(e)
    }
}

/// Fornberg weights for the `deriv`-th derivative at 0 on `nodes`.
pub fn fornberg_weights(nodes: &[f64], deriv: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; deriv + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0];
    for i in 1..n {
        let mn = i.min(deriv);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i];
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[deriv]).collect()
}

/// Taylor polynomial of `f` about `x0` in the first `axes` variables from
/// tensor-product central differences with the given step.
pub fn finite_difference_taylor(
    f: &dyn Fn(&Point) -> f64,
    x0: &Point,
    dim: usize,
    axes: usize,
    order: usize,
    step: f64,
) -> Polynomial {
    let stencil = |d: usize| -> (Vec<f64>, Vec<f64>) {
        if d == 0 {
            return (vec![0.0], vec![1.0]);
        }
        let half = d.div_ceil(2) + 1;
        let nodes: Vec<f64> = (-(half as i64)..=half as i64).map(|k| k as f64).collect();
        let w = fornberg_weights(&nodes, d);
        let scale = step.powi(d as i32);
        (
            nodes.iter().map(|t| t * step).collect(),
            w.iter().map(|c| c / scale).collect(),
        )
    };
    let mut out = Polynomial::zero(dim, order);
    let exps: Vec<_> = out.basis().exponents().to_vec();
    for e in exps {
        if e[axes..].iter().any(|&k| k != 0) {
            continue;
        }
        let stencils: Vec<_> = (0..3).map(|a| stencil(e[a] as usize)).collect();
        let mut total = 0.0;
        for (i0, w0) in stencils[0].0.iter().zip(&stencils[0].1) {
            for (i1, w1) in stencils[1].0.iter().zip(&stencils[1].1) {
                for (i2, w2) in stencils[2].0.iter().zip(&stencils[2].1) {
                    let x = [x0[0] + i0, x0[1] + i1, x0[2] + i2];
                    total += w0 * w1 * w2 * f(&x);
                }
            }
        }
        let denom: f64 = e.iter().map(|&k| factorial(k as usize)).product();
        out.set(&e, total / denom);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        Expr::parse(s, 3, "test").unwrap()
    }

    #[test]
    fn precedence() {
        assert_eq!(p("-x1^2").eval(&[3.0, 0.0, 0.0]), -9.0);
        assert_eq!(p("2^3^2").eval(&[0.0; 3]), 512.0);
        assert_eq!(p("1 - 2 - 3").eval(&[0.0; 3]), -4.0);
        assert_eq!(p("8/4/2").eval(&[0.0; 3]), 1.0);
        assert_eq!(p("2*-3").eval(&[0.0; 3]), -6.0);
        assert_eq!(p("1.5e-1 + .5").eval(&[0.0; 3]), 0.65);
        assert_eq!(p("max(x1, 0)").eval(&[-1.0, 0.0, 0.0]), 0.0);
        assert_eq!(p("(-2)^3").eval(&[0.0; 3]), -8.0);
    }

    #[test]
    fn errors_carry_field_and_position() {
        match Expr::parse("1 + y", 2, "obstacle") {
            Err(Error::Parse { field, position, .. }) => {
                assert_eq!(field, "obstacle");
                assert_eq!(position, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(Expr::parse("x3", 2, "a").is_err());
        assert!(Expr::parse("max(x1, 1)", 2, "a").is_err());
        assert!(Expr::parse("(x1", 2, "a").is_err());
        assert!(Expr::parse("x1 x2", 2, "a").is_err());
    }

    #[test]
    fn display_round_trip() {
        for s in ["-x1^2 + 3*x2", "exp(sin(x1)) / (1 + x2^2)", "max(x1 - 0.5, 0)^3", "-2.5e-7*pi"] {
            let e = p(s);
            let again = p(&e.to_string());
            assert_eq!(e, again, "{s}");
        }
    }

    #[test]
    fn jets_match_closed_forms() {
        let x0 = [0.3, 0.7, 0.0];
        let e = p("exp(x1) * sin(x2) + log(1 + x1^2) / cos(x2)");
        let jet = e.taylor(&x0, 2, 3).unwrap();
        assert!((jet.constant_term() - e.eval(&x0)).abs() < 1e-14);
        // d/dx1 and d2/dx2^2 by hand
        let d1 = 0.3f64.exp() * 0.7f64.sin() + 2.0 * 0.3 / (1.0 + 0.09) / 0.7f64.cos();
        assert!((jet.coeff(&[1, 0, 0]) - d1).abs() < 1e-13);
        let fx = |x: &Point| e.eval(x);
        let fd = finite_difference_taylor(&fx, &x0, 2, 2, 3, 1e-2);
        assert!(jet.max_abs_diff(&fd) < 1e-6);
    }

    #[test]
    fn kink_is_reported() {
        let e = p("max(x1, 0)");
        assert!(matches!(e.taylor(&[0.0; 3], 2, 2), Err(Error::NonSmooth(_))));
        assert!(e.taylor(&[0.5, 0.0, 0.0], 2, 2).is_ok());
        assert_eq!(e.taylor(&[0.0; 3], 2, 0).unwrap().constant_term(), 0.0);
    }

    #[test]
    fn affine_substitution() {
        let e = p("x1^2 + x2");
        let map = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let s = e.substitute_affine(&[1.0, 0.5, 0.0], &map, 2);
        // (1 + 2y1)^2 + 0.5 + y2 at y = (0.5, 1)
        assert!((s.eval(&[0.5, 1.0, 0.0]) - 5.5).abs() < 1e-14);
    }

    #[test]
    fn fornberg_second_derivative() {
        let w = fornberg_weights(&[-1.0, 0.0, 1.0], 2);
        assert_eq!(w, vec![1.0, -2.0, 1.0]);
    }
}
