//! One-variable profile functions given as expression trees.
//!
//! Profiles are the `A`, `B`, `F`, `G` slots of the solution families. They
//! are trees rather than opaque callbacks so that jets can differentiate
//! them, polynomial antiderivatives stay exact, and the command line can
//! parse them from strings. Grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := number | 'x' | func '(' expr ')' | '(' expr ')' | factor '^' integer
//! func   := sin | cos | exp
//! ```
//!
//! A leading `-` on a factor is accepted as negation.

use crate::error::{Error, Result};
use crate::jets::{Jet, ScalarField};
use std::fmt;
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq)]
enum Expr {
    Const(f64),
    Var,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Neg(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

/// A smooth real function of one variable.
#[derive(Clone)]
pub struct Profile {
    expr: Arc<Expr>,
    source: String,
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Profile({})", self.source)
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

const QUAD_TOL: f64 = 1e-12;

impl Profile {
    pub fn parse(src: &str) -> Result<Profile> {
        let mut p = Parser { chars: src.as_bytes(), pos: 0 };
        let expr = p.expr()?;
        p.skip_ws();
        if p.pos != p.chars.len() {
            return Err(Error::ProfileParse(format!(
                "unexpected trailing input at byte {} of `{src}`",
                p.pos
            )));
        }
        Ok(Profile { expr: Arc::new(expr), source: src.trim().to_string() })
    }

    pub fn constant(c: f64) -> Profile {
        Profile { expr: Arc::new(Expr::Const(c)), source: format!("{c}") }
    }

    pub fn zero() -> Profile {
        Profile::constant(0.0)
    }

    pub fn identity() -> Profile {
        Profile { expr: Arc::new(Expr::Var), source: "x".to_string() }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn add(&self, other: &Profile) -> Profile {
        Profile {
            expr: Arc::new(Expr::Add(
                Box::new((*self.expr).clone()),
                Box::new((*other.expr).clone()),
            )),
            source: format!("({}) + ({})", self.source, other.source),
        }
    }

    pub fn mul(&self, other: &Profile) -> Profile {
        Profile {
            expr: Arc::new(Expr::Mul(
                Box::new((*self.expr).clone()),
                Box::new((*other.expr).clone()),
            )),
            source: format!("({}) * ({})", self.source, other.source),
        }
    }

    pub fn scale(&self, s: f64) -> Profile {
        self.mul(&Profile::constant(s))
    }

    pub fn powi(&self, k: i32) -> Profile {
        Profile {
            expr: Arc::new(Expr::Pow(Box::new((*self.expr).clone()), k)),
            source: format!("({})^{k}", self.source),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        eval_f64(&self.expr, x)
    }

    pub fn eval_jet(&self, x: &Jet) -> Jet {
        eval_jet(&self.expr, x)
    }

    /// Symbolic derivative tree.
    pub fn derivative(&self) -> Profile {
        let expr = derive(&self.expr);
        Profile { source: format!("d/dx({})", self.source), expr: Arc::new(expr) }
    }

    /// Ascending coefficients when the tree is a polynomial (divisions only
    /// by nonzero constants).
    pub fn as_polynomial(&self) -> Option<Vec<f64>> {
        let mut c = poly(&self.expr)?;
        while c.len() > 1 && c.last() == Some(&0.0) {
            c.pop();
        }
        Some(c)
    }

    pub fn is_zero(&self) -> bool {
        self.as_polynomial().map(|c| c.iter().all(|&v| v == 0.0)).unwrap_or(false)
    }

    /// Definite integral from `a` to `b`: exact for polynomial trees,
    /// adaptive Simpson quadrature otherwise.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if let Some(c) = self.as_polynomial() {
            let anti = |x: f64| -> f64 {
                let mut acc = 0.0;
                for (i, &ci) in c.iter().enumerate().rev() {
                    acc = acc * x + ci / (i as f64 + 1.0);
                }
                acc * x
            };
            return anti(b) - anti(a);
        }
        if a == b {
            return 0.0;
        }
        let f = |x: f64| self.eval(x);
        let whole = simpson(&f, a, b);
        adaptive(&f, a, b, whole, QUAD_TOL, 50)
    }

    /// The antiderivative `x -> integral_base^x` applied to a jet: the value
    /// comes from `integral`, the derivative coefficients from the profile's
    /// own Taylor expansion.
    pub fn antiderivative_jet(&self, x: &Jet, base: f64) -> Jet {
        let x0 = x.value();
        let n = x.order();
        let ftaylor = self.eval_jet(&Jet::seed(x0, 0, n)).univariate_coeffs();
        let mut c = vec![0.0; n + 1];
        c[0] = self.integral(base, x0);
        for m in 1..=n {
            c[m] = ftaylor[m - 1] / m as f64;
        }
        x.compose_univariate(&c)
    }

    /// Compose the profile with a scalar field: `F(psi)`.
    pub fn of(&self, psi: &ScalarField) -> ScalarField {
        let me = self.clone();
        let psi = psi.clone();
        ScalarField::from_fn(psi.depth(), move |jp| me.eval_jet(&psi.jet(jp)))
    }

    /// The field `p -> integral_base^{psi(p)} F(q) dq`.
    pub fn antiderivative_of(&self, psi: &ScalarField, base: f64) -> ScalarField {
        let me = self.clone();
        let psi = psi.clone();
        ScalarField::from_fn(psi.depth(), move |jp| me.antiderivative_jet(&psi.jet(jp), base))
    }
}

fn eval_f64(e: &Expr, x: f64) -> f64 {
    match e {
        Expr::Const(c) => *c,
        Expr::Var => x,
        Expr::Add(a, b) => eval_f64(a, x) + eval_f64(b, x),
        Expr::Sub(a, b) => eval_f64(a, x) - eval_f64(b, x),
        Expr::Mul(a, b) => eval_f64(a, x) * eval_f64(b, x),
        Expr::Div(a, b) => eval_f64(a, x) / eval_f64(b, x),
        Expr::Pow(a, k) => eval_f64(a, x).powi(*k),
        Expr::Neg(a) => -eval_f64(a, x),
        Expr::Sin(a) => eval_f64(a, x).sin(),
        Expr::Cos(a) => eval_f64(a, x).cos(),
        Expr::Exp(a) => eval_f64(a, x).exp(),
    }
}

fn eval_jet(e: &Expr, x: &Jet) -> Jet {
    match e {
        Expr::Const(c) => Jet::constant(*c, x.order()),
        Expr::Var => x.clone(),
        Expr::Add(a, b) => eval_jet(a, x) + eval_jet(b, x),
        Expr::Sub(a, b) => eval_jet(a, x) - eval_jet(b, x),
        Expr::Mul(a, b) => eval_jet(a, x) * eval_jet(b, x),
        Expr::Div(a, b) => eval_jet(a, x) / eval_jet(b, x),
        Expr::Pow(a, k) => eval_jet(a, x).powi(*k),
        Expr::Neg(a) => -eval_jet(a, x),
        Expr::Sin(a) => eval_jet(a, x).sin(),
        Expr::Cos(a) => eval_jet(a, x).cos(),
        Expr::Exp(a) => eval_jet(a, x).exp(),
    }
}

fn derive(e: &Expr) -> Expr {
    use Expr::*;
    match e {
        Const(_) => Const(0.0),
        Var => Const(1.0),
        Add(a, b) => Add(Box::new(derive(a)), Box::new(derive(b))),
        Sub(a, b) => Sub(Box::new(derive(a)), Box::new(derive(b))),
        Mul(a, b) => Add(
            Box::new(Mul(Box::new(derive(a)), b.clone())),
            Box::new(Mul(a.clone(), Box::new(derive(b)))),
        ),
        Div(a, b) => Div(
            Box::new(Sub(
                Box::new(Mul(Box::new(derive(a)), b.clone())),
                Box::new(Mul(a.clone(), Box::new(derive(b)))),
            )),
            Box::new(Pow(b.clone(), 2)),
        ),
        Pow(a, k) => Mul(
            Box::new(Mul(Box::new(Const(*k as f64)), Box::new(Pow(a.clone(), k - 1)))),
            Box::new(derive(a)),
        ),
        Neg(a) => Neg(Box::new(derive(a))),
        Sin(a) => Mul(Box::new(Cos(a.clone())), Box::new(derive(a))),
        Cos(a) => Neg(Box::new(Mul(Box::new(Sin(a.clone())), Box::new(derive(a))))),
        Exp(a) => Mul(Box::new(Exp(a.clone())), Box::new(derive(a))),
    }
}

fn poly(e: &Expr) -> Option<Vec<f64>> {
    use Expr::*;
    fn add(a: &[f64], b: &[f64], sign: f64) -> Vec<f64> {
        let mut out = vec![0.0; a.len().max(b.len())];
        for (i, &v) in a.iter().enumerate() {
            out[i] += v;
        }
        for (i, &v) in b.iter().enumerate() {
            out[i] += sign * v;
        }
        out
    }
    fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }
    match e {
        Const(c) => Some(vec![*c]),
        Var => Some(vec![0.0, 1.0]),
        Add(a, b) => Some(add(&poly(a)?, &poly(b)?, 1.0)),
        Sub(a, b) => Some(add(&poly(a)?, &poly(b)?, -1.0)),
        Mul(a, b) => Some(mul(&poly(a)?, &poly(b)?)),
        Div(a, b) => {
            let d = poly(b)?;
            if d.len() == 1 && d[0] != 0.0 {
                Some(poly(a)?.iter().map(|c| c / d[0]).collect())
            } else {
                None
            }
        }
        Pow(a, k) => {
            if *k < 0 {
                return None;
            }
            let base = poly(a)?;
            let mut out = vec![1.0];
            for _ in 0..*k {
                out = mul(&out, &base);
            }
            Some(out)
        }
        Neg(a) => Some(poly(a)?.iter().map(|c| -c).collect()),
        Sin(_) | Cos(_) | Exp(_) => None,
    }
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = simpson(f, a, m);
    let right = simpson(f, m, b);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive(f, a, m, left, tol / 2.0, depth - 1)
            + adaptive(f, m, b, right, tol / 2.0, depth - 1)
    }
}

struct Parser<'a> {
    chars: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::ProfileParse(format!(
                "expected `{}` at byte {}",
                c as char, self.pos
            )))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if op == b'+' {
                Expr::Add(Box::new(acc), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(acc), Box::new(rhs))
            };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.factor()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            acc = if op == b'*' {
                Expr::Mul(Box::new(acc), Box::new(rhs))
            } else {
                Expr::Div(Box::new(acc), Box::new(rhs))
            };
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        let mut base = self.atom()?;
        while self.peek() == Some(b'^') {
            self.pos += 1;
            let k = self.integer()?;
            base = Expr::Pow(Box::new(base), k);
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let name = self.ident();
                match name.as_str() {
                    "x" => Ok(Expr::Var),
                    "sin" | "cos" | "exp" => {
                        self.expect(b'(')?;
                        let arg = self.expr()?;
                        self.expect(b')')?;
                        Ok(match name.as_str() {
                            "sin" => Expr::Sin(Box::new(arg)),
                            "cos" => Expr::Cos(Box::new(arg)),
                            _ => Expr::Exp(Box::new(arg)),
                        })
                    }
                    other => Err(Error::ProfileParse(format!("unknown name `{other}`"))),
                }
            }
            Some(c) => Err(Error::ProfileParse(format!(
                "unexpected `{}` at byte {}",
                c as char, self.pos
            ))),
            None => Err(Error::ProfileParse("unexpected end of input".into())),
        }
    }

    fn ident(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.chars[start..self.pos]).into_owned()
    }

    fn number(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.chars.len()
            && (self.chars[self.pos].is_ascii_digit() || self.chars[self.pos] == b'.')
        {
            self.pos += 1;
        }
        // Scientific notation.
        if self.pos < self.chars.len() && (self.chars[self.pos] | 32) == b'e' {
            let mut probe = self.pos + 1;
            if probe < self.chars.len() && (self.chars[probe] == b'+' || self.chars[probe] == b'-')
            {
                probe += 1;
            }
            if probe < self.chars.len() && self.chars[probe].is_ascii_digit() {
                self.pos = probe;
                while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        let text = std::str::from_utf8(&self.chars[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| Error::ProfileParse(format!("bad number `{text}`")))
    }

    fn integer(&mut self) -> Result<i32> {
        self.skip_ws();
        let start = self.pos;
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.chars[start..self.pos]).unwrap();
        text.parse::<i32>()
            .map_err(|_| Error::ProfileParse(format!("bad integer exponent `{text}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::MultiIndex;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (diff {:.3e})", (a - b).abs());
    }

    #[test]
    fn parse_and_eval() {
        let f = Profile::parse("2*(3*x-2)").unwrap();
        close(f.eval(1.0), 2.0, 1e-15);
        close(f.eval(0.0), -4.0, 1e-15);
        assert_eq!(f.as_polynomial().unwrap(), vec![-4.0, 6.0]);

        let g = Profile::parse("1-x").unwrap();
        close(g.eval(0.25), 0.75, 1e-15);

        let h = Profile::parse("x^2*sin(x) + x/2 - 1.5e-1").unwrap();
        let x = 0.8;
        close(h.eval(x), x * x * x.sin() + x / 2.0 - 0.15, 1e-15);
        assert!(h.as_polynomial().is_none());

        let neg = Profile::parse("-x^2").unwrap();
        close(neg.eval(3.0), -9.0, 1e-15);

        let powneg = Profile::parse("x^-2").unwrap();
        close(powneg.eval(2.0), 0.25, 1e-15);

        for bad in ["x+", "2**x", "y", "sin x", "(x", "x^1.5"] {
            assert!(Profile::parse(bad).is_err(), "`{bad}` should not parse");
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let cases = ["2*(3*x-2)", "x^3 - x", "sin(2*x)*cos(x)", "exp(x/2)/(1+x^2)"];
        for src in cases {
            let f = Profile::parse(src).unwrap();
            let df = f.derivative();
            for x in [-0.7, 0.0, 0.4, 1.3] {
                let h = 1e-5;
                let fd = (f.eval(x + h) - f.eval(x - h)) / (2.0 * h);
                close(df.eval(x), fd, 1e-7 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn jet_evaluation_chain_rule() {
        let f = Profile::parse("x^2 - sin(x)").unwrap();
        let x = Jet::seed(0.6, 0, 2);
        let y = f.eval_jet(&x);
        close(y.value(), 0.36 - 0.6_f64.sin(), 1e-15);
        close(
            y.partial_value(MultiIndex::new(1, 0, 0)),
            1.2 - 0.6_f64.cos(),
            1e-14,
        );
        close(
            y.partial_value(MultiIndex::new(2, 0, 0)),
            2.0 + 0.6_f64.sin(),
            1e-14,
        );
    }

    #[test]
    fn integrals_polynomial_exact_and_quadrature() {
        let f = Profile::parse("x^2").unwrap();
        close(f.integral(0.0, 2.0), 8.0 / 3.0, 1e-15);
        // Reversed and negative limits.
        close(f.integral(2.0, 0.0), -8.0 / 3.0, 1e-15);
        close(f.integral(-1.0, 1.0), 2.0 / 3.0, 1e-15);

        let g = Profile::parse("sin(x)").unwrap();
        close(g.integral(0.0, 1.0), 1.0 - 1.0_f64.cos(), 1e-12);
        let e = Profile::parse("exp(x)").unwrap();
        close(e.integral(0.0, 2.0), 2.0_f64.exp() - 1.0, 1e-11);
    }

    #[test]
    fn antiderivative_jet_has_profile_gradient() {
        // d/dx integral_0^x F = F, checked through a jet.
        for src in ["2*(3*x-2)", "sin(x)*x"] {
            let f = Profile::parse(src).unwrap();
            let x = Jet::seed(0.9, 0, 3);
            let a = f.antiderivative_jet(&x, 0.0);
            close(a.value(), f.integral(0.0, 0.9), 1e-12);
            close(a.partial_value(MultiIndex::new(1, 0, 0)), f.eval(0.9), 1e-12);
            close(
                a.partial_value(MultiIndex::new(2, 0, 0)),
                f.derivative().eval(0.9),
                1e-11,
            );
        }
    }

    #[test]
    fn composition_with_scalar_field() {
        let f = Profile::parse("2*(3*x-2)").unwrap();
        let psi = ScalarField::from_fn(0, |jp| jp[0].cos().powi(2));
        let fpsi = f.of(&psi);
        let p: [f64; 3] = [0.7, 0.1, 0.2];
        let x = p[0].cos().powi(2);
        close(fpsi.value(p).unwrap(), 2.0 * (3.0 * x - 2.0), 1e-14);
        // Chain rule: d/ds F(cos^2 s) = F'(cos^2 s) * (-sin 2s).
        close(
            fpsi.partial(p, MultiIndex::new(1, 0, 0)).unwrap(),
            6.0 * -(2.0 * p[0]).sin(),
            1e-13,
        );
    }
}
