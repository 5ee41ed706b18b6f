//! Second-order forward-mode differentiation.
//!
//! A [`Taylor2`] carries a value, a gradient, and the upper triangle of
//! a Hessian with respect to `d` seed variables, and propagates all
//! three through arithmetic in one pass. Symmetry of the Hessian is
//! structural: only entries (i, j) with i ≤ j are ever stored.

use super::EvalError;

/// Truncated second-order Taylor data in `d` variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Taylor2 {
    pub val: f64,
    /// ∂f/∂x_i, length `d`.
    pub grad: Vec<f64>,
    /// Packed upper triangle of ∂²f/∂x_i∂x_j, row-major: the entry for
    /// i ≤ j sits at `i*d - i*(i+1)/2 + j`, length `d*(d+1)/2`.
    pub hess: Vec<f64>,
}

#[inline]
pub(crate) fn tri_index(d: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < d);
    i * d - i * (i + 1) / 2 + j
}

impl Taylor2 {
    pub fn constant(d: usize, val: f64) -> Taylor2 {
        Taylor2 { val, grad: vec![0.0; d], hess: vec![0.0; d * (d + 1) / 2] }
    }

    /// Seed for the i-th coordinate variable at the given value.
    pub fn variable(d: usize, i: usize, val: f64) -> Taylor2 {
        let mut t = Taylor2::constant(d, val);
        t.grad[i] = 1.0;
        t
    }

    fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn neg(&self) -> Taylor2 {
        Taylor2 {
            val: -self.val,
            grad: self.grad.iter().map(|g| -g).collect(),
            hess: self.hess.iter().map(|h| -h).collect(),
        }
    }

    pub fn add(&self, rhs: &Taylor2) -> Taylor2 {
        Taylor2 {
            val: self.val + rhs.val,
            grad: self.grad.iter().zip(&rhs.grad).map(|(a, b)| a + b).collect(),
            hess: self.hess.iter().zip(&rhs.hess).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, rhs: &Taylor2) -> Taylor2 {
        Taylor2 {
            val: self.val - rhs.val,
            grad: self.grad.iter().zip(&rhs.grad).map(|(a, b)| a - b).collect(),
            hess: self.hess.iter().zip(&rhs.hess).map(|(a, b)| a - b).collect(),
        }
    }

    /// Product rule: (fg)_ij = f_ij g + f_i g_j + f_j g_i + f g_ij.
    pub fn mul(&self, rhs: &Taylor2) -> Taylor2 {
        let d = self.dim();
        let mut out = Taylor2::constant(d, self.val * rhs.val);
        for i in 0..d {
            out.grad[i] = self.grad[i] * rhs.val + self.val * rhs.grad[i];
        }
        for i in 0..d {
            for j in i..d {
                let k = tri_index(d, i, j);
                out.hess[k] = self.hess[k] * rhs.val
                    + self.grad[i] * rhs.grad[j]
                    + self.grad[j] * rhs.grad[i]
                    + self.val * rhs.hess[k];
            }
        }
        out
    }

    pub fn div(&self, rhs: &Taylor2) -> Result<Taylor2, EvalError> {
        if rhs.val == 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        let inv = rhs.chain(1.0 / rhs.val, -1.0 / (rhs.val * rhs.val), 2.0 / (rhs.val * rhs.val * rhs.val));
        Ok(self.mul(&inv))
    }

    /// Chain rule for a scalar map u with u(f) = `val`, u'(f) = `d1`,
    /// u''(f) = `d2`: (u∘f)_i = u' f_i, (u∘f)_ij = u'' f_i f_j + u' f_ij.
    pub fn chain(&self, val: f64, d1: f64, d2: f64) -> Taylor2 {
        let d = self.dim();
        let mut out = Taylor2::constant(d, val);
        for i in 0..d {
            out.grad[i] = d1 * self.grad[i];
        }
        for i in 0..d {
            for j in i..d {
                let k = tri_index(d, i, j);
                out.hess[k] = d2 * self.grad[i] * self.grad[j] + d1 * self.hess[k];
            }
        }
        out
    }

    /// Integer power by repeated multiplication, exact for
    /// differentiation; negative exponents go through one division.
    pub fn powi(&self, e: i64) -> Result<Taylor2, EvalError> {
        let d = self.dim();
        if e == 0 {
            return Ok(Taylor2::constant(d, 1.0));
        }
        let mut result = Taylor2::constant(d, 1.0);
        let mut base = self.clone();
        let mut k = e.unsigned_abs();
        while k > 0 {
            if k & 1 == 1 {
                result = result.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        if e < 0 {
            Taylor2::constant(d, 1.0).div(&result)
        } else {
            Ok(result)
        }
    }

    pub fn sin(&self) -> Taylor2 {
        self.chain(self.val.sin(), self.val.cos(), -self.val.sin())
    }

    pub fn cos(&self) -> Taylor2 {
        self.chain(self.val.cos(), -self.val.sin(), -self.val.cos())
    }

    pub fn exp(&self) -> Taylor2 {
        let e = self.val.exp();
        self.chain(e, e, e)
    }

    pub fn log(&self) -> Result<Taylor2, EvalError> {
        if self.val <= 0.0 {
            return Err(EvalError::LogDomain { arg: self.val });
        }
        Ok(self.chain(self.val.ln(), 1.0 / self.val, -1.0 / (self.val * self.val)))
    }

    pub fn sqrt(&self) -> Result<Taylor2, EvalError> {
        if self.val < 0.0 {
            return Err(EvalError::SqrtDomain { arg: self.val });
        }
        if self.val == 0.0 {
            // Derivatives blow up at zero; only an exactly constant jet
            // survives.
            if self.grad.iter().all(|g| *g == 0.0) && self.hess.iter().all(|h| *h == 0.0) {
                return Ok(Taylor2::constant(self.dim(), 0.0));
            }
            return Err(EvalError::SqrtDomain { arg: self.val });
        }
        let s = self.val.sqrt();
        Ok(self.chain(s, 0.5 / s, -0.25 / (s * self.val)))
    }

    /// Real power through exp∘log; requires a strictly positive base.
    pub fn powf(&self, rhs: &Taylor2) -> Result<Taylor2, EvalError> {
        if self.val <= 0.0 {
            return Err(EvalError::PowDomain { base: self.val });
        }
        Ok(rhs.mul(&self.log()?).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x_y(d0: f64, d1: f64) -> (Taylor2, Taylor2) {
        (Taylor2::variable(2, 0, d0), Taylor2::variable(2, 1, d1))
    }

    #[test]
    fn square_difference() {
        // f = x² − y² at (1, 2): value −3, grad (2, −4), hess diag (2, −2).
        let (x, y) = x_y(1.0, 2.0);
        let f = x.mul(&x).sub(&y.mul(&y));
        assert_eq!(f.val, -3.0);
        assert_eq!(f.grad, vec![2.0, -4.0]);
        assert_eq!(f.hess, vec![2.0, 0.0, -2.0]);
    }

    #[test]
    fn product_cross_term() {
        // f = x·y at (3, 5): value 15, grad (5, 3), hess off-diagonal 1.
        let (x, y) = x_y(3.0, 5.0);
        let f = x.mul(&y);
        assert_eq!(f.val, 15.0);
        assert_eq!(f.grad, vec![5.0, 3.0]);
        assert_eq!(f.hess, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn powi_matches_direct_products() {
        let x = Taylor2::variable(1, 0, 1.5);
        let p5 = x.powi(5).unwrap();
        let direct = x.mul(&x).mul(&x).mul(&x).mul(&x);
        assert!((p5.val - direct.val).abs() < 1e-12);
        assert!((p5.grad[0] - direct.grad[0]).abs() < 1e-12);
        assert!((p5.hess[0] - direct.hess[0]).abs() < 1e-12);
        let pm2 = x.powi(-2).unwrap();
        assert!((pm2.val - 1.5f64.powi(-2)).abs() < 1e-14);
        assert!((pm2.grad[0] - (-2.0) * 1.5f64.powi(-3)).abs() < 1e-14);
        assert!((pm2.hess[0] - 6.0 * 1.5f64.powi(-4)).abs() < 1e-14);
    }

    #[test]
    fn chain_rule_trig() {
        // f = sin(x·y): f_x = y cos, f_xy = cos − xy sin.
        let (x, y) = x_y(0.7, 1.3);
        let f = x.mul(&y).sin();
        let (s, c) = (0.91f64.sin(), 0.91f64.cos());
        assert!((f.val - s).abs() < 1e-15);
        assert!((f.grad[0] - 1.3 * c).abs() < 1e-15);
        assert!((f.hess[tri_index(2, 0, 1)] - (c - 0.91 * s)).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        let x = Taylor2::variable(1, 0, -1.0);
        assert!(matches!(x.log(), Err(EvalError::LogDomain { .. })));
        assert!(matches!(x.sqrt(), Err(EvalError::SqrtDomain { .. })));
        assert!(matches!(x.powf(&Taylor2::constant(1, 0.5)), Err(EvalError::PowDomain { .. })));
        let zero = Taylor2::constant(1, 0.0);
        assert!(matches!(x.div(&zero), Err(EvalError::DivisionByZero)));
    }
}
