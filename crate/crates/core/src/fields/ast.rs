//! Expression trees for scalar coordinate functions.
//!
//! The grammar is small on purpose: arithmetic, powers, and the five
//! elementary functions needed by the worked field theories. Trees are
//! plain data so they can be assembled programmatically (example
//! families, random test generators) as well as parsed from text.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops;

/// Unary elementary functions admitted in expressions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }
}

/// A scalar expression in named variables.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn pow(self, exponent: Expr) -> Expr {
        Expr::Pow(Box::new(self), Box::new(exponent))
    }

    pub fn call(func: Func, arg: Expr) -> Expr {
        Expr::Call(func, Box::new(arg))
    }

    /// Collects the free variable names, sorted.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Folds the tree to a constant when it contains no variables.
    /// Returns `None` for any tree with a free variable or a domain
    /// violation under exact folding.
    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            Expr::Var(_) => None,
            Expr::Neg(a) => a.as_const().map(|v| -v),
            Expr::Add(a, b) => Some(a.as_const()? + b.as_const()?),
            Expr::Sub(a, b) => Some(a.as_const()? - b.as_const()?),
            Expr::Mul(a, b) => Some(a.as_const()? * b.as_const()?),
            Expr::Div(a, b) => {
                let d = b.as_const()?;
                if d == 0.0 {
                    None
                } else {
                    Some(a.as_const()? / d)
                }
            }
            Expr::Pow(a, b) => {
                let base = a.as_const()?;
                let exp = b.as_const()?;
                let v = base.powf(exp);
                v.is_finite().then_some(v)
            }
            Expr::Call(f, a) => {
                let v = a.as_const()?;
                let out = match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Log => v.ln(),
                    Func::Sqrt => v.sqrt(),
                };
                out.is_finite().then_some(out)
            }
        }
    }

    /// Replaces every occurrence of the mapped variables by the given
    /// subtrees. Unmapped variables are left in place.
    pub fn substitute(&self, map: &HashMap<String, Expr>) -> Expr {
        match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::Var(name) => map.get(name).cloned().unwrap_or_else(|| self.clone()),
            Expr::Neg(a) => Expr::Neg(Box::new(a.substitute(map))),
            Expr::Add(a, b) => Expr::Add(Box::new(a.substitute(map)), Box::new(b.substitute(map))),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.substitute(map)), Box::new(b.substitute(map))),
            Expr::Mul(a, b) => Expr::Mul(Box::new(a.substitute(map)), Box::new(b.substitute(map))),
            Expr::Div(a, b) => Expr::Div(Box::new(a.substitute(map)), Box::new(b.substitute(map))),
            Expr::Pow(a, b) => Expr::Pow(Box::new(a.substitute(map)), Box::new(b.substitute(map))),
            Expr::Call(f, a) => Expr::Call(*f, Box::new(a.substitute(map))),
        }
    }

    /// Precedence level used by the printer; higher binds tighter.
    fn prec(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let p = self.prec();
        if p < min {
            write!(f, "(")?;
        }
        match self {
            Expr::Num(v) => write!(f, "{v}")?,
            Expr::Var(name) => write!(f, "{name}")?,
            Expr::Neg(a) => {
                write!(f, "-")?;
                a.fmt_prec(f, 3)?;
            }
            Expr::Add(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " + ")?;
                b.fmt_prec(f, 2)?;
            }
            Expr::Sub(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " - ")?;
                b.fmt_prec(f, 2)?;
            }
            Expr::Mul(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, "*")?;
                b.fmt_prec(f, 3)?;
            }
            Expr::Div(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, "/")?;
                b.fmt_prec(f, 3)?;
            }
            Expr::Pow(a, b) => {
                // Right associative; a bare unary minus must not become
                // the base, so the base is held to atom level.
                a.fmt_prec(f, 5)?;
                write!(f, "^")?;
                b.fmt_prec(f, 4)?;
            }
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.fmt_prec(f, 0)?;
                write!(f, ")")?;
            }
        }
        if p < min {
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// Prints with the fewest parentheses that still reparse to the same
/// tree. Numbers use Rust's shortest round-trip form.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(rhs))
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}
