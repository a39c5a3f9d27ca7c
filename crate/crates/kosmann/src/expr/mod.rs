//! A minimal scalar expression language over four chart coordinates.
//!
//! Expressions are immutable trees with complex constants, exact symbolic
//! differentiation and complex double-precision evaluation. Simplification
//! is limited to constant folding and 0/1 identity elimination; identity
//! verification downstream is numeric, so no canonical-zero rewriting is
//! attempted here.

mod parser;

pub use parser::parse;

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// A chart point: four real coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point(pub [f64; 4]);

impl Point {
    pub fn new(x: [f64; 4]) -> Self {
        Point(x)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Conj,
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Sinh,
    Cosh,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Conj => "conj",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Sinh => "sinh",
            UnaryOp::Cosh => "cosh",
        }
    }

    fn apply(self, v: C64) -> C64 {
        match self {
            UnaryOp::Neg => -v,
            UnaryOp::Conj => v.conj(),
            UnaryOp::Sin => v.sin(),
            UnaryOp::Cos => v.cos(),
            UnaryOp::Tan => v.tan(),
            UnaryOp::Exp => v.exp(),
            UnaryOp::Log => v.ln(),
            UnaryOp::Sqrt => v.sqrt(),
            UnaryOp::Sinh => v.sinh(),
            UnaryOp::Cosh => v.cosh(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Immutable expression tree. Children are shared via `Arc`, so cloning is
/// cheap and every rewriting operation produces a new tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(C64),
    Coord(usize),
    Unary(UnaryOp, Arc<Expr>),
    Binary(BinaryOp, Arc<Expr>, Arc<Expr>),
}

fn finite(v: C64) -> bool {
    v.re.is_finite() && v.im.is_finite()
}

impl Expr {
    pub fn constant(v: C64) -> Expr {
        Expr::Const(v)
    }

    pub fn real(v: f64) -> Expr {
        Expr::Const(C64::new(v, 0.0))
    }

    pub fn imaginary_unit() -> Expr {
        Expr::Const(C64::new(0.0, 1.0))
    }

    pub fn zero() -> Expr {
        Expr::real(0.0)
    }

    pub fn one() -> Expr {
        Expr::real(1.0)
    }

    pub fn coord(k: usize) -> Expr {
        assert!(k < 4, "coordinate index out of range");
        Expr::Coord(k)
    }

    pub fn as_const(&self) -> Option<C64> {
        match self {
            Expr::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(C64::new(0.0, 0.0))
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(C64::new(1.0, 0.0))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if finite(x + y) {
                return Expr::Const(x + y);
            }
        }
        if a.is_zero() {
            return b;
        }
        if b.is_zero() {
            return a;
        }
        Expr::Binary(BinaryOp::Add, Arc::new(a), Arc::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if finite(x - y) {
                return Expr::Const(x - y);
            }
        }
        if b.is_zero() {
            return a;
        }
        if a.is_zero() {
            return Expr::neg(b);
        }
        Expr::Binary(BinaryOp::Sub, Arc::new(a), Arc::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if finite(x * y) {
                return Expr::Const(x * y);
            }
        }
        if a.is_zero() || b.is_zero() {
            return Expr::zero();
        }
        if a.is_one() {
            return b;
        }
        if b.is_one() {
            return a;
        }
        Expr::Binary(BinaryOp::Mul, Arc::new(a), Arc::new(b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if y != C64::new(0.0, 0.0) && finite(x / y) {
                return Expr::Const(x / y);
            }
        }
        if b.is_one() {
            return a;
        }
        if a.is_zero() && b.as_const() != Some(C64::new(0.0, 0.0)) {
            return Expr::zero();
        }
        Expr::Binary(BinaryOp::Div, Arc::new(a), Arc::new(b))
    }

    /// Power with a constant exponent. Non-constant exponents are rejected
    /// at parse time; programmatic construction panics on them so that
    /// differentiation stays total.
    pub fn pow(base: Expr, expo: Expr) -> Expr {
        let e = expo
            .as_const()
            .expect("pow exponent must be a constant expression");
        if e == C64::new(0.0, 0.0) {
            return Expr::one();
        }
        if e == C64::new(1.0, 0.0) {
            return base;
        }
        if let Some(x) = base.as_const() {
            let v = x.powc(e);
            if finite(v) {
                return Expr::Const(v);
            }
        }
        Expr::Binary(BinaryOp::Pow, Arc::new(base), Arc::new(expo))
    }

    pub fn powi(base: Expr, n: i32) -> Expr {
        Expr::pow(base, Expr::real(n as f64))
    }

    pub fn neg(e: Expr) -> Expr {
        if let Some(x) = e.as_const() {
            return Expr::Const(-x);
        }
        if let Expr::Unary(UnaryOp::Neg, inner) = &e {
            return (**inner).clone();
        }
        Expr::Unary(UnaryOp::Neg, Arc::new(e))
    }

    pub fn conj(e: Expr) -> Expr {
        if let Some(x) = e.as_const() {
            return Expr::Const(x.conj());
        }
        if let Expr::Unary(UnaryOp::Conj, inner) = &e {
            return (**inner).clone();
        }
        Expr::Unary(UnaryOp::Conj, Arc::new(e))
    }

    pub fn unary(op: UnaryOp, e: Expr) -> Expr {
        match op {
            UnaryOp::Neg => return Expr::neg(e),
            UnaryOp::Conj => return Expr::conj(e),
            _ => {}
        }
        if let Some(x) = e.as_const() {
            let v = op.apply(x);
            if finite(v) {
                return Expr::Const(v);
            }
        }
        Expr::Unary(op, Arc::new(e))
    }

    pub fn sin(e: Expr) -> Expr {
        Expr::unary(UnaryOp::Sin, e)
    }
    pub fn cos(e: Expr) -> Expr {
        Expr::unary(UnaryOp::Cos, e)
    }
    pub fn exp(e: Expr) -> Expr {
        Expr::unary(UnaryOp::Exp, e)
    }
    pub fn sqrt(e: Expr) -> Expr {
        Expr::unary(UnaryOp::Sqrt, e)
    }

    /// Exact symbolic derivative with respect to coordinate `k`.
    ///
    /// `conj` commutes with differentiation since the coordinates are
    /// real-valued.
    pub fn differentiate(&self, k: usize) -> Expr {
        assert!(k < 4, "coordinate index out of range");
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Coord(j) => {
                if *j == k {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Expr::Unary(op, a) => {
                let da = a.differentiate(k);
                if da.is_zero() && *op != UnaryOp::Neg {
                    return Expr::zero();
                }
                let a = (**a).clone();
                match op {
                    UnaryOp::Neg => Expr::neg(da),
                    UnaryOp::Conj => Expr::conj(da),
                    UnaryOp::Sin => Expr::mul(Expr::cos(a), da),
                    UnaryOp::Cos => Expr::neg(Expr::mul(Expr::sin(a), da)),
                    UnaryOp::Tan => Expr::div(da, Expr::powi(Expr::cos(a), 2)),
                    UnaryOp::Exp => Expr::mul(Expr::exp(a), da),
                    UnaryOp::Log => Expr::div(da, a),
                    UnaryOp::Sqrt => {
                        Expr::div(da, Expr::mul(Expr::real(2.0), Expr::sqrt(a)))
                    }
                    UnaryOp::Sinh => Expr::mul(Expr::unary(UnaryOp::Cosh, a), da),
                    UnaryOp::Cosh => Expr::mul(Expr::unary(UnaryOp::Sinh, a), da),
                }
            }
            Expr::Binary(op, a, b) => {
                let (a, b) = ((**a).clone(), (**b).clone());
                match op {
                    BinaryOp::Add => Expr::add(a.differentiate(k), b.differentiate(k)),
                    BinaryOp::Sub => Expr::sub(a.differentiate(k), b.differentiate(k)),
                    BinaryOp::Mul => Expr::add(
                        Expr::mul(a.differentiate(k), b.clone()),
                        Expr::mul(a, b.differentiate(k)),
                    ),
                    BinaryOp::Div => {
                        let da = a.differentiate(k);
                        let db = b.differentiate(k);
                        if db.is_zero() {
                            return Expr::div(da, b);
                        }
                        Expr::div(
                            Expr::sub(
                                Expr::mul(da, b.clone()),
                                Expr::mul(a, db),
                            ),
                            Expr::powi(b, 2),
                        )
                    }
                    BinaryOp::Pow => {
                        let c = b.as_const().expect("pow exponent must be constant");
                        let da = a.differentiate(k);
                        Expr::mul(
                            Expr::mul(
                                Expr::Const(c),
                                Expr::pow(a, Expr::Const(c - C64::new(1.0, 0.0))),
                            ),
                            da,
                        )
                    }
                }
            }
        }
    }

    /// Pointwise evaluation in IEEE double-precision complex arithmetic.
    pub fn evaluate(&self, p: &Point) -> Result<C64> {
        match self {
            Expr::Const(v) => Ok(*v),
            Expr::Coord(k) => Ok(C64::new(p.0[*k], 0.0)),
            Expr::Unary(op, a) => {
                let v = a.evaluate(p)?;
                match op {
                    UnaryOp::Log if v == C64::new(0.0, 0.0) => Err(self.eval_error("log of zero")),
                    _ => {
                        let r = op.apply(v);
                        if finite(r) {
                            Ok(r)
                        } else {
                            Err(self.eval_error("domain error"))
                        }
                    }
                }
            }
            Expr::Binary(op, a, b) => {
                let x = a.evaluate(p)?;
                let y = b.evaluate(p)?;
                let r = match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                    BinaryOp::Div => {
                        if y == C64::new(0.0, 0.0) {
                            return Err(self.eval_error("division by zero"));
                        }
                        x / y
                    }
                    BinaryOp::Pow => x.powc(y),
                };
                if finite(r) {
                    Ok(r)
                } else {
                    Err(self.eval_error("domain error"))
                }
            }
        }
    }

    /// Evaluation that demands a real value; an imaginary part above 1e-9
    /// is an error. Used for flows, metrics and frame matrices.
    pub fn evaluate_real(&self, p: &Point) -> Result<f64> {
        let v = self.evaluate(p)?;
        if v.im.abs() > 1e-9 {
            return Err(self.eval_error("expected a real value"));
        }
        Ok(v.re)
    }

    fn eval_error(&self, msg: &str) -> Error {
        Error::Eval {
            expr: self.print(&default_names()),
            msg: msg.to_string(),
        }
    }

    /// Canonical printer. Reparsing the output with the same coordinate
    /// names yields a structurally identical tree.
    pub fn print(&self, names: &[String; 4]) -> String {
        let mut out = String::new();
        self.write(&mut out, names, 0);
        out
    }

    // Precedence levels: 1 add/sub, 2 mul/div, 3 unary minus, 4 pow, 5 atom.
    fn prec(&self) -> u8 {
        match self {
            Expr::Const(c) => {
                if c.im == 0.0 {
                    if c.re < 0.0 {
                        3
                    } else {
                        5
                    }
                } else if c.re == 0.0 {
                    if c.im == 1.0 {
                        5
                    } else if c.im < 0.0 {
                        3
                    } else {
                        2
                    }
                } else {
                    5 // printed fully parenthesized
                }
            }
            Expr::Coord(_) => 5,
            Expr::Unary(UnaryOp::Neg, _) => 3,
            Expr::Unary(..) => 5,
            Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
            Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
            Expr::Binary(BinaryOp::Pow, ..) => 4,
        }
    }

    fn write(&self, out: &mut String, names: &[String; 4], min_prec: u8) {
        let p = self.prec();
        let need_paren = p < min_prec;
        if need_paren {
            out.push('(');
        }
        match self {
            Expr::Const(c) => write_const(out, *c),
            Expr::Coord(k) => out.push_str(&names[*k]),
            Expr::Unary(UnaryOp::Neg, a) => {
                out.push('-');
                a.write(out, names, 4);
            }
            Expr::Unary(op, a) => {
                out.push_str(op.name());
                out.push('(');
                a.write(out, names, 0);
                out.push(')');
            }
            Expr::Binary(op, a, b) => match op {
                BinaryOp::Add => {
                    a.write(out, names, 1);
                    out.push_str(" + ");
                    b.write(out, names, 2);
                }
                BinaryOp::Sub => {
                    a.write(out, names, 1);
                    out.push_str(" - ");
                    b.write(out, names, 2);
                }
                BinaryOp::Mul => {
                    a.write(out, names, 2);
                    out.push('*');
                    b.write(out, names, 3);
                }
                BinaryOp::Div => {
                    a.write(out, names, 2);
                    out.push('/');
                    b.write(out, names, 3);
                }
                BinaryOp::Pow => {
                    a.write(out, names, 5);
                    out.push('^');
                    b.write(out, names, 4);
                }
            },
        }
        if need_paren {
            out.push(')');
        }
    }
}

fn write_const(out: &mut String, c: C64) {
    if c.im == 0.0 {
        let _ = write!(out, "{}", c.re);
    } else if c.re == 0.0 {
        if c.im == 1.0 {
            out.push('i');
        } else if c.im == -1.0 {
            out.push_str("-i");
        } else {
            let _ = write!(out, "{}*i", c.im);
        }
    } else {
        let _ = write!(out, "({} + {}*i)", c.re, c.im);
    }
}

pub fn default_names() -> [String; 4] {
    ["x0", "x1", "x2", "x3"].map(|s| s.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> [String; 4] {
        ["t", "r", "theta", "phi"].map(|s| s.to_string())
    }

    fn p(x: [f64; 4]) -> Point {
        Point::new(x)
    }

    #[test]
    fn parse_literal_zero() {
        let e = parse("0", &names()).unwrap();
        assert_eq!(e, Expr::zero());
    }

    #[test]
    fn parse_power_and_sum() {
        let e = parse("t^2 + r", &names()).unwrap();
        let expect = Expr::add(Expr::powi(Expr::coord(0), 2), Expr::coord(1));
        assert_eq!(e, expect);
    }

    #[test]
    fn parse_conj_of_imaginary_product() {
        let e = parse("conj(i*t)", &names()).unwrap();
        let expect = Expr::conj(Expr::mul(Expr::imaginary_unit(), Expr::coord(0)));
        assert_eq!(e, expect);
    }

    #[test]
    fn diff_power_rule() {
        let e = parse("t^2", &names()).unwrap();
        let d = e.differentiate(0);
        let v = d.evaluate(&p([3.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(v, C64::new(6.0, 0.0));
    }

    #[test]
    fn diff_independent_coordinate() {
        let e = parse("t", &names()).unwrap();
        assert!(e.differentiate(1).is_zero());
    }

    #[test]
    fn diff_conj_matches_central_difference() {
        // d/dt conj(i*t) = conj(i) = -i; check both parts by central
        // differences at t = 0.7 with step 1e-6.
        let e = parse("conj(i*t)", &names()).unwrap();
        let d = e.differentiate(0);
        let at = |t: f64| e.evaluate(&p([t, 0.0, 0.0, 0.0])).unwrap();
        let h = 1e-6;
        let fd = (at(0.7 + h) - at(0.7 - h)) / C64::new(2.0 * h, 0.0);
        let dv = d.evaluate(&p([0.7, 0.0, 0.0, 0.0])).unwrap();
        assert!((dv - fd).norm() < 1e-8);
        assert!((dv - C64::new(0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn evaluate_polynomial() {
        let e = parse("t^2+r", &names()).unwrap();
        let v = e.evaluate(&p([2.0, 3.0, 0.0, 0.0])).unwrap();
        assert_eq!(v, C64::new(7.0, 0.0));
    }

    #[test]
    fn evaluate_imaginary_square() {
        let e = parse("i*i", &names()).unwrap();
        assert_eq!(e, Expr::real(-1.0));
    }

    #[test]
    fn evaluate_sqrt() {
        let e = parse("sqrt(1 - 2/r)", &names()).unwrap();
        let v = e.evaluate(&p([0.0, 4.0, 0.0, 0.0])).unwrap();
        assert!((v.re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(v.im, 0.0);
    }

    #[test]
    fn division_by_zero_is_reported() {
        let e = parse("1/r", &names()).unwrap();
        let err = e.evaluate(&p([0.0, 0.0, 0.0, 0.0])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("division by zero"), "{msg}");
    }

    #[test]
    fn unknown_identifier_is_reported_with_position() {
        let err = parse("t + bogus", &names()).unwrap_err();
        match err {
            Error::UnknownIdentifier { name, pos } => {
                assert_eq!(name, "bogus");
                assert_eq!(pos, 4);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn nonconstant_exponent_rejected() {
        assert!(parse("t^r", &names()).is_err());
        assert!(parse("2^t", &names()).is_err());
    }

    #[test]
    fn print_reparse_roundtrip() {
        for src in [
            "t^2 + r",
            "conj(i*t)",
            "sin(theta)*cos(phi) - 1/r^2",
            "-t*(r + 2)",
            "exp(2*t)/sqrt(1 - 2/r)",
            "(1 + 2*i)*t - i",
        ] {
            let e = parse(src, &names()).unwrap();
            let printed = e.print(&names());
            let e2 = parse(&printed, &names()).unwrap();
            assert_eq!(e, e2, "roundtrip failed for `{src}` -> `{printed}`");
        }
    }

    #[test]
    fn conj_involution() {
        let e = parse("conj(conj(i*t + r))", &names()).unwrap();
        let plain = parse("i*t + r", &names()).unwrap();
        assert_eq!(e, plain);
    }
}
