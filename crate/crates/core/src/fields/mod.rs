//! Scalar coordinate functions: parsing, evaluation, and second-order
//! forward differentiation.
//!
//! A [`ScalarField`] couples an expression tree with an ordered list of
//! variable names; [`ScalarField::eval2`] returns value, gradient, and
//! Hessian with respect to that ordering in one sweep. The
//! finite-difference routine [`fd_oracle`] exists to cross-check the
//! propagated derivatives and is only as accurate as central
//! differences allow.

mod ast;
mod jet;
mod parse;

pub use ast::{Expr, Func};
pub use jet::Taylor2;
pub use parse::{parse, ParseError};

use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;
use thiserror::Error;

/// Domain failures during evaluation; each names the offending value so
/// the caller can report the subexpression.
#[derive(Clone, Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("log of non-positive argument {arg}")]
    LogDomain { arg: f64 },
    #[error("sqrt of negative argument {arg}")]
    SqrtDomain { arg: f64 },
    #[error("real power of non-positive base {base}")]
    PowDomain { base: f64 },
    #[error("variable `{name}` is not in the field's variable list")]
    UnboundVariable { name: String },
    #[error("point has {got} coordinates, field expects {expected}")]
    PointLength { got: usize, expected: usize },
    #[error("in subexpression `{expr}`: {source}")]
    In {
        expr: String,
        #[source]
        source: Box<EvalError>,
    },
}

/// Value, gradient, and Hessian of a scalar field at a point, in the
/// field's variable order.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet2Scalar {
    pub value: f64,
    pub grad: DVector<f64>,
    /// Symmetric by construction: only the upper triangle is computed
    /// and it is mirrored on extraction.
    pub hess: DMatrix<f64>,
}

/// An expression together with the ordered variables it may mention.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    expr: Expr,
    vars: Vec<String>,
    index: HashMap<String, usize>,
}

impl ScalarField {
    /// Builds a field, checking that every free variable of the
    /// expression appears in `vars`.
    pub fn new(expr: Expr, vars: Vec<String>) -> Result<ScalarField, EvalError> {
        let index: HashMap<String, usize> =
            vars.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
        for name in expr.free_vars() {
            if !index.contains_key(&name) {
                return Err(EvalError::UnboundVariable { name });
            }
        }
        Ok(ScalarField { expr, vars, index })
    }

    /// Parses `src` and binds it to the given variable order.
    pub fn parse(src: &str, vars: Vec<String>) -> Result<ScalarField, FieldError> {
        let expr = parse(src)?;
        Ok(ScalarField::new(expr, vars)?)
    }

    /// A field that is identically `v`.
    pub fn constant(v: f64, vars: Vec<String>) -> ScalarField {
        ScalarField::new(Expr::Num(v), vars).expect("constants have no free variables")
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    /// Value only, without derivative propagation.
    pub fn eval0(&self, point: &[f64]) -> Result<f64, EvalError> {
        self.check_len(point)?;
        eval0_rec(&self.expr, &self.index, point)
    }

    /// Value, gradient, and Hessian in one forward sweep.
    pub fn eval2(&self, point: &[f64]) -> Result<Jet2Scalar, EvalError> {
        self.check_len(point)?;
        let d = self.vars.len();
        let t = eval2_rec(&self.expr, &self.index, point, d)?;
        let grad = DVector::from_vec(t.grad);
        let mut hess = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v = t.hess[jet::tri_index(d, i, j)];
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        Ok(Jet2Scalar { value: t.val, grad, hess })
    }

    fn check_len(&self, point: &[f64]) -> Result<(), EvalError> {
        if point.len() != self.vars.len() {
            return Err(EvalError::PointLength { got: point.len(), expected: self.vars.len() });
        }
        Ok(())
    }
}

/// Parse or evaluation failure when building fields from text.
#[derive(Clone, Debug, Error, PartialEq)]
pub enum FieldError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn locate(e: EvalError, expr: &Expr) -> EvalError {
    match e {
        // Keep the innermost location; it names the smallest offender.
        EvalError::In { .. } => e,
        other => EvalError::In { expr: expr.to_string(), source: Box::new(other) },
    }
}

fn eval0_rec(expr: &Expr, index: &HashMap<String, usize>, point: &[f64]) -> Result<f64, EvalError> {
    Ok(match expr {
        Expr::Num(v) => *v,
        Expr::Var(name) => point[index[name]],
        Expr::Neg(a) => -eval0_rec(a, index, point)?,
        Expr::Add(a, b) => eval0_rec(a, index, point)? + eval0_rec(b, index, point)?,
        Expr::Sub(a, b) => eval0_rec(a, index, point)? - eval0_rec(b, index, point)?,
        Expr::Mul(a, b) => eval0_rec(a, index, point)? * eval0_rec(b, index, point)?,
        Expr::Div(a, b) => {
            let den = eval0_rec(b, index, point)?;
            if den == 0.0 {
                return Err(locate(EvalError::DivisionByZero, expr));
            }
            eval0_rec(a, index, point)? / den
        }
        Expr::Pow(a, b) => {
            let base = eval0_rec(a, index, point)?;
            if let Some(e) = integral_exponent(b) {
                let v = base.powi(e.clamp(i64::from(i32::MIN), i64::from(i32::MAX)) as i32);
                if !v.is_finite() && base == 0.0 && e < 0 {
                    return Err(locate(EvalError::DivisionByZero, expr));
                }
                v
            } else {
                if base <= 0.0 {
                    return Err(locate(EvalError::PowDomain { base }, expr));
                }
                base.powf(eval0_rec(b, index, point)?)
            }
        }
        Expr::Call(f, a) => {
            let v = eval0_rec(a, index, point)?;
            match f {
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                Func::Exp => v.exp(),
                Func::Log => {
                    if v <= 0.0 {
                        return Err(locate(EvalError::LogDomain { arg: v }, expr));
                    }
                    v.ln()
                }
                Func::Sqrt => {
                    if v < 0.0 {
                        return Err(locate(EvalError::SqrtDomain { arg: v }, expr));
                    }
                    v.sqrt()
                }
            }
        }
    })
}

fn eval2_rec(
    expr: &Expr,
    index: &HashMap<String, usize>,
    point: &[f64],
    d: usize,
) -> Result<Taylor2, EvalError> {
    Ok(match expr {
        Expr::Num(v) => Taylor2::constant(d, *v),
        Expr::Var(name) => {
            let i = index[name];
            Taylor2::variable(d, i, point[i])
        }
        Expr::Neg(a) => eval2_rec(a, index, point, d)?.neg(),
        Expr::Add(a, b) => eval2_rec(a, index, point, d)?.add(&eval2_rec(b, index, point, d)?),
        Expr::Sub(a, b) => eval2_rec(a, index, point, d)?.sub(&eval2_rec(b, index, point, d)?),
        Expr::Mul(a, b) => eval2_rec(a, index, point, d)?.mul(&eval2_rec(b, index, point, d)?),
        Expr::Div(a, b) => {
            let num = eval2_rec(a, index, point, d)?;
            let den = eval2_rec(b, index, point, d)?;
            num.div(&den).map_err(|e| locate(e, expr))?
        }
        Expr::Pow(a, b) => {
            let base = eval2_rec(a, index, point, d)?;
            if let Some(e) = integral_exponent(b) {
                base.powi(e).map_err(|er| locate(er, expr))?
            } else {
                let exp = eval2_rec(b, index, point, d)?;
                base.powf(&exp).map_err(|er| locate(er, expr))?
            }
        }
        Expr::Call(f, a) => {
            let arg = eval2_rec(a, index, point, d)?;
            match f {
                Func::Sin => arg.sin(),
                Func::Cos => arg.cos(),
                Func::Exp => arg.exp(),
                Func::Log => arg.log().map_err(|e| locate(e, expr))?,
                Func::Sqrt => arg.sqrt().map_err(|e| locate(e, expr))?,
            }
        }
    })
}

/// An exponent subtree that folds to an integer routes the power
/// through repeated multiplication; anything else goes via exp∘log.
fn integral_exponent(b: &Expr) -> Option<i64> {
    let v = b.as_const()?;
    (v.fract() == 0.0 && v.abs() <= 1e9).then_some(v as i64)
}

/// Central finite differences for gradient and Hessian with step `h`.
///
/// Truncation error is O(h²); this is a cross-check oracle, not a
/// production derivative.
pub fn fd_oracle(f: &ScalarField, point: &[f64], h: f64) -> Result<Jet2Scalar, EvalError> {
    let d = f.dim();
    let value = f.eval0(point)?;
    let mut shifted = point.to_vec();
    let mut grad = DVector::zeros(d);
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        shifted.copy_from_slice(point);
        shifted[i] = point[i] + h;
        let fp = f.eval0(&shifted)?;
        shifted[i] = point[i] - h;
        let fm = f.eval0(&shifted)?;
        grad[i] = (fp - fm) / (2.0 * h);
        hess[(i, i)] = (fp - 2.0 * value + fm) / (h * h);
    }
    for i in 0..d {
        for j in (i + 1)..d {
            shifted.copy_from_slice(point);
            shifted[i] = point[i] + h;
            shifted[j] = point[j] + h;
            let fpp = f.eval0(&shifted)?;
            shifted[j] = point[j] - h;
            let fpm = f.eval0(&shifted)?;
            shifted[i] = point[i] - h;
            let fmm = f.eval0(&shifted)?;
            shifted[j] = point[j] + h;
            let fmp = f.eval0(&shifted)?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(Jet2Scalar { value, grad, hess })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn field(src: &str, vars: &[&str]) -> ScalarField {
        ScalarField::parse(src, vars.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn eval2_square_difference() {
        let f = field("x1^2 - x2^2", &["x1", "x2"]);
        let j = f.eval2(&[1.0, 2.0]).unwrap();
        assert_eq!(j.value, -3.0);
        assert_eq!(j.grad.as_slice(), &[2.0, -4.0]);
        assert_eq!(j.hess[(0, 0)], 2.0);
        assert_eq!(j.hess[(1, 1)], -2.0);
        assert_eq!(j.hess[(0, 1)], 0.0);
    }

    #[test]
    fn eval2_product() {
        let f = field("x1*x2", &["x1", "x2"]);
        let j = f.eval2(&[3.0, 5.0]).unwrap();
        assert_eq!(j.value, 15.0);
        assert_eq!(j.grad.as_slice(), &[5.0, 3.0]);
        assert_eq!(j.hess[(0, 1)], 1.0);
        assert_eq!(j.hess[(1, 0)], 1.0);
        assert_eq!(j.hess[(0, 0)], 0.0);
    }

    #[test]
    fn eval2_ignores_unused_variables() {
        let f = field("x1^2", &["x1", "x2", "x3"]);
        let j = f.eval2(&[2.0, 9.0, -4.0]).unwrap();
        assert_eq!(j.value, 4.0);
        assert_eq!(j.grad.as_slice(), &[4.0, 0.0, 0.0]);
    }

    #[test]
    fn unbound_variable_rejected() {
        let err = ScalarField::parse("x1 + q", vec!["x1".to_string()]).unwrap_err();
        assert!(matches!(err, FieldError::Eval(EvalError::UnboundVariable { ref name }) if name == "q"));
    }

    #[test]
    fn fd_oracle_matches_eval2() {
        let f = field("sin(x1*x2) + exp(x1 - x2^2)", &["x1", "x2"]);
        let p = [0.6, -0.4];
        let ad = f.eval2(&p).unwrap();
        let fd = fd_oracle(&f, &p, 1e-4).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(ad.grad[i], fd.grad[i], epsilon = 1e-6);
            for j in 0..2 {
                assert_abs_diff_eq!(ad.hess[(i, j)], fd.hess[(i, j)], epsilon = 1e-4);
            }
        }
    }

    #[test]
    fn domain_error_names_subexpression() {
        let f = field("x1 + log(x2)", &["x1", "x2"]);
        let err = f.eval2(&[1.0, -2.0]).unwrap_err();
        match err {
            EvalError::In { expr, source } => {
                assert_eq!(expr, "log(x2)");
                assert_eq!(*source, EvalError::LogDomain { arg: -2.0 });
            }
            other => panic!("expected located error, got {other:?}"),
        }
    }

    #[test]
    fn integer_power_at_negative_base() {
        // (−2)³ must evaluate, which rules out the exp∘log route.
        let f = field("x1^3", &["x1"]);
        let j = f.eval2(&[-2.0]).unwrap();
        assert_eq!(j.value, -8.0);
        assert_eq!(j.grad[0], 12.0);
        assert_eq!(j.hess[(0, 0)], -12.0);
        // A fractional exponent on the same base is a domain error.
        let g = field("x1^2.5", &["x1"]);
        assert!(g.eval2(&[-2.0]).is_err());
    }

    #[test]
    fn real_power_with_variable_exponent() {
        let f = field("x1^x2", &["x1", "x2"]);
        let j = f.eval2(&[2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(j.value, 8.0, epsilon = 1e-12);
        // ∂/∂x1 = x2·x1^(x2−1), ∂/∂x2 = ln(x1)·x1^x2.
        assert_abs_diff_eq!(j.grad[0], 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(j.grad[1], 8.0 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn linearity_of_eval2() {
        let f = field("sin(x1) + x1*x2^2", &["x1", "x2"]);
        let g = field("exp(x2) - x1^3", &["x1", "x2"]);
        let combo = field("3*(sin(x1) + x1*x2^2) - 2*(exp(x2) - x1^3)", &["x1", "x2"]);
        let p = [0.3, 0.8];
        let (jf, jg, jc) = (f.eval2(&p).unwrap(), g.eval2(&p).unwrap(), combo.eval2(&p).unwrap());
        assert_abs_diff_eq!(jc.value, 3.0 * jf.value - 2.0 * jg.value, epsilon = 1e-13);
        for i in 0..2 {
            assert_abs_diff_eq!(jc.grad[i], 3.0 * jf.grad[i] - 2.0 * jg.grad[i], epsilon = 1e-13);
            for j in 0..2 {
                assert_abs_diff_eq!(
                    jc.hess[(i, j)],
                    3.0 * jf.hess[(i, j)] - 2.0 * jg.hess[(i, j)],
                    epsilon = 1e-13
                );
            }
        }
    }
}
