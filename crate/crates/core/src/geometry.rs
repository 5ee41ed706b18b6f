//! Coordinate geometry of the bundle spaces over a fibration π: E → M.
//!
//! Every space carries one fixed coordinate ordering: the base block
//! x¹..xᵐ first, then the fibre block u¹..uⁿ, then p, then the momenta
//! p^i_α in row-major (α, i) order, then jet blocks in declaration
//! order. [`Layout`] turns (block, multi-index) pairs into flat
//! positions so forms and tangent vectors built in different modules
//! can never disagree about where a coordinate sits.
//!
//! The volume convention is η = dx¹∧…∧dxᵐ in every working chart, and
//! d^{m−1}x_i means the interior product of η with ∂/∂x^i (first slot),
//! so dx^j ∧ d^{m−1}x_i = δ^j_i η.

use crate::exterior::KForm;
use crate::fields::{EvalError, Expr, ScalarField};
use thiserror::Error;

/// n×m coefficient block, indexed `[alpha][i]`.
pub type Block2 = Vec<Vec<f64>>;
/// n×m×m coefficient block, indexed `[alpha][i][j]`.
pub type Block3 = Vec<Vec<Vec<f64>>>;

pub fn block2_zeros(n: usize, m: usize) -> Block2 {
    vec![vec![0.0; m]; n]
}

pub fn block3_zeros(n: usize, m: usize) -> Block3 {
    vec![vec![vec![0.0; m]; m]; n]
}

pub fn block2_from(n: usize, m: usize, f: impl Fn(usize, usize) -> f64) -> Block2 {
    (0..n).map(|a| (0..m).map(|i| f(a, i)).collect()).collect()
}

pub fn block3_from(n: usize, m: usize, f: impl Fn(usize, usize, usize) -> f64) -> Block3 {
    (0..n)
        .map(|a| (0..m).map(|i| (0..m).map(|j| f(a, i, j)).collect()).collect())
        .collect()
}

/// Base and fibre dimensions of the fibration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BundleDims {
    pub m: usize,
    pub n: usize,
}

impl BundleDims {
    pub fn new(m: usize, n: usize) -> BundleDims {
        assert!(m >= 1 && n >= 1, "bundle dimensions must be at least 1");
        BundleDims { m, n }
    }
}

/// The coordinate spaces handled by the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Space {
    /// E: (x, u).
    E,
    /// J¹π: (x, u, u^α_i).
    J1,
    /// Mπ = Λ^m₂E: (x, u, p, p^i_α).
    MPi,
    /// M°π: (x, u, p^i_α).
    M0,
    /// J¹π₁: (x, u, u^α_i, ū^α_i, u^α_{ij}).
    J1Pi1,
    /// J¹(π∘ν): (x, u, p, p^i_α, u^α_i, p_j, p^i_{αj}).
    J1PiNu,
    /// Λ^{m+1}₂J¹π: (x, u, u^α_i, p̄_α, p̄^i_α).
    LambdaJ1,
    /// Λ^{m+1}₂Mπ: (x, u, p, p^i_α, p̄_α, p̄, p̄^α_i).
    LambdaMPi,
}

/// Flat coordinate positions for one space at fixed dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub dims: BundleDims,
    pub space: Space,
}

impl Layout {
    pub fn new(dims: BundleDims, space: Space) -> Layout {
        Layout { dims, space }
    }

    /// Total coordinate count.
    pub fn total(&self) -> usize {
        let (m, n) = (self.dims.m, self.dims.n);
        match self.space {
            Space::E => m + n,
            Space::J1 => m + n + n * m,
            Space::MPi => m + n + 1 + n * m,
            Space::M0 => m + n + n * m,
            Space::J1Pi1 => m + n + 2 * n * m + n * m * m,
            Space::J1PiNu => m + n + 1 + 2 * n * m + m + n * m * m,
            Space::LambdaJ1 => m + n + n * m + n + n * m,
            Space::LambdaMPi => m + n + 1 + n * m + n + 1 + n * m,
        }
    }

    fn has(&self, ok: bool, what: &str) -> usize {
        assert!(ok, "coordinate block `{what}` does not exist on {:?}", self.space);
        0
    }

    pub fn x(&self, i: usize) -> usize {
        assert!(i < self.dims.m, "base index out of range");
        i
    }

    pub fn u(&self, a: usize) -> usize {
        assert!(a < self.dims.n, "fibre index out of range");
        self.dims.m + a
    }

    pub fn p(&self) -> usize {
        let (m, n) = (self.dims.m, self.dims.n);
        self.has(matches!(self.space, Space::MPi | Space::J1PiNu | Space::LambdaMPi), "p");
        m + n
    }

    pub fn pmom(&self, a: usize, i: usize) -> usize {
        let (m, n) = (self.dims.m, self.dims.n);
        assert!(a < n && i < m, "momentum index out of range");
        let base = match self.space {
            Space::MPi | Space::J1PiNu | Space::LambdaMPi => m + n + 1,
            Space::M0 => m + n,
            _ => self.has(false, "pmom"),
        };
        base + a * m + i
    }

    pub fn ujet(&self, a: usize, i: usize) -> usize {
        let (m, n) = (self.dims.m, self.dims.n);
        assert!(a < n && i < m, "jet index out of range");
        let base = match self.space {
            Space::J1 | Space::J1Pi1 | Space::LambdaJ1 => m + n,
            Space::J1PiNu => m + n + 1 + n * m,
            _ => self.has(false, "ujet"),
        };
        base + a * m + i
    }

    pub fn ubar(&self, a: usize, i: usize) -> usize {
        let (m, n) = (self.dims.m, self.dims.n);
        assert!(a < n && i < m, "jet index out of range");
        self.has(matches!(self.space, Space::J1Pi1), "ubar");
        m + n + n * m + a * m + i
    }

    pub fn usec(&self, a: usize, i: usize, j: usize) -> usize {
        let (m, n) = (self.dims.m, self.dims.n);
        assert!(a < n && i < m && j < m, "second-jet index out of range");
        self.has(matches!(self.space, Space::J1Pi1), "usec");
        m + n + 2 * n * m + a * m * m + i * m + j
    }

    pub fn pjet(&self, j: usize) -> usize {
        let (m, n) = (self.dims.m, self.dims.n);
        assert!(j < m, "jet index out of range");
        self.has(matches!(self.space, Space::J1PiNu), "pjet");
        m + n + 1 + 2 * n * m + j
    }

    pub fn pmomjet(&self, a: usize, i: usize, j: usize) -> usize {
        let (m, n) = (self.dims.m, self.dims.n);
        assert!(a < n && i < m && j < m, "momentum-jet index out of range");
        self.has(matches!(self.space, Space::J1PiNu), "pmomjet");
        m + n + 1 + 2 * n * m + m + a * m * m + i * m + j
    }

    pub fn pbar_u(&self, a: usize) -> usize {
        let (m, n) = (self.dims.m, self.dims.n);
        assert!(a < n, "fibre index out of range");
        match self.space {
            Space::LambdaJ1 => m + n + n * m + a,
            Space::LambdaMPi => m + n + 1 + n * m + a,
            _ => self.has(false, "pbar_u") + a,
        }
    }

    pub fn pbar_ujet(&self, a: usize, i: usize) -> usize {
        let (m, n) = (self.dims.m, self.dims.n);
        assert!(a < n && i < m, "index out of range");
        self.has(matches!(self.space, Space::LambdaJ1), "pbar_ujet");
        m + n + n * m + n + a * m + i
    }

    pub fn pbar_p(&self) -> usize {
        let (m, n) = (self.dims.m, self.dims.n);
        self.has(matches!(self.space, Space::LambdaMPi), "pbar_p");
        m + n + 1 + n * m + n
    }

    pub fn pbar_pmom(&self, a: usize, i: usize) -> usize {
        let (m, n) = (self.dims.m, self.dims.n);
        assert!(a < n && i < m, "index out of range");
        self.has(matches!(self.space, Space::LambdaMPi), "pbar_pmom");
        m + n + 1 + n * m + n + 1 + a * m + i
    }
}

/// Canonical variable names "x1".."xm".
pub fn x_names(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("x{i}")).collect()
}

/// Names for E: x-block then "u1".."un".
pub fn eu_names(m: usize, n: usize) -> Vec<String> {
    let mut v = x_names(m);
    v.extend((1..=n).map(|a| format!("u{a}")));
    v
}

/// Names for J¹π: E names then "uA_i" row-major in (A, i).
pub fn j1_names(m: usize, n: usize) -> Vec<String> {
    let mut v = eu_names(m, n);
    for a in 1..=n {
        for i in 1..=m {
            v.push(format!("u{a}_{i}"));
        }
    }
    v
}

/// Names for M°π: E names then "pA_i" row-major in (A, i), where
/// "pA_i" is the momentum dual to u^A_i.
pub fn m0_names(m: usize, n: usize) -> Vec<String> {
    let mut v = eu_names(m, n);
    for a in 1..=n {
        for i in 1..=m {
            v.push(format!("p{a}_{i}"));
        }
    }
    v
}

// ---------------------------------------------------------------------
// Points
// ---------------------------------------------------------------------

/// Point of E.
#[derive(Clone, Debug, PartialEq)]
pub struct PointE {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

/// Point of J¹π.
#[derive(Clone, Debug, PartialEq)]
pub struct PointJ1 {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub ujet: Block2,
}

/// Point of Mπ (extended multimomentum bundle).
#[derive(Clone, Debug, PartialEq)]
pub struct PointMpi {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub p: f64,
    pub pmom: Block2,
}

/// Point of M°π (reduced multimomentum bundle).
#[derive(Clone, Debug, PartialEq)]
pub struct PointM0 {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub pmom: Block2,
}

/// Point of the iterated jet space J¹π₁, with u^α_{ij} stored as
/// `usec[α][i][j]` = ∂u^α_i/∂x^j.
#[derive(Clone, Debug, PartialEq)]
pub struct PointJ1Pi1 {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub ujet: Block2,
    pub ubar: Block2,
    pub usec: Block3,
}

/// Point of J¹(π∘ν), the first jets of sections of Mπ → M, with
/// `pmomjet[α][i][j]` = ∂p^i_α/∂x^j.
#[derive(Clone, Debug, PartialEq)]
pub struct PointJ1PiNu {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub p: f64,
    pub pmom: Block2,
    pub ujet: Block2,
    pub pjet: Vec<f64>,
    pub pmomjet: Block3,
}

impl PointJ1 {
    pub fn dims(&self) -> BundleDims {
        BundleDims::new(self.x.len(), self.u.len())
    }
}

impl PointMpi {
    pub fn dims(&self) -> BundleDims {
        BundleDims::new(self.x.len(), self.u.len())
    }
}

impl PointJ1Pi1 {
    pub fn dims(&self) -> BundleDims {
        BundleDims::new(self.x.len(), self.u.len())
    }

    /// Underlying J¹π point (first jet block).
    pub fn to_j1(&self) -> PointJ1 {
        PointJ1 { x: self.x.clone(), u: self.u.clone(), ujet: self.ujet.clone() }
    }
}

impl PointJ1PiNu {
    pub fn dims(&self) -> BundleDims {
        BundleDims::new(self.x.len(), self.u.len())
    }

    /// Underlying Mπ point.
    pub fn to_mpi(&self) -> PointMpi {
        PointMpi { x: self.x.clone(), u: self.u.clone(), p: self.p, pmom: self.pmom.clone() }
    }

    /// Underlying J¹π point (base, fibre, and u-jet block).
    pub fn to_j1(&self) -> PointJ1 {
        PointJ1 { x: self.x.clone(), u: self.u.clone(), ujet: self.ujet.clone() }
    }
}

// ---------------------------------------------------------------------
// Sections and prolongations
// ---------------------------------------------------------------------

/// A local section of π: components u^α = φ^α(x).
#[derive(Clone, Debug)]
pub struct SectionE {
    comps: Vec<ScalarField>,
}

impl SectionE {
    /// Builds from component fields; each must be a function of the
    /// x-variables only (in order).
    pub fn new(comps: Vec<ScalarField>) -> SectionE {
        assert!(!comps.is_empty(), "a section needs at least one component");
        let m = comps[0].dim();
        assert!(comps.iter().all(|c| c.dim() == m), "components disagree on base dimension");
        SectionE { comps }
    }

    pub fn parse(srcs: &[String], m: usize) -> Result<SectionE, crate::fields::FieldError> {
        let vars = x_names(m);
        let comps = srcs
            .iter()
            .map(|s| ScalarField::parse(s, vars.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SectionE::new(comps))
    }

    pub fn n(&self) -> usize {
        self.comps.len()
    }

    pub fn m(&self) -> usize {
        self.comps[0].dim()
    }

    pub fn comps(&self) -> &[ScalarField] {
        &self.comps
    }

    pub fn value(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.comps.iter().map(|c| c.eval0(x)).collect()
    }
}

/// A section of M°π → M: u^α(x) and p^i_α(x).
#[derive(Clone, Debug)]
pub struct SectionM0 {
    pub u: Vec<ScalarField>,
    pub pmom: Vec<Vec<ScalarField>>,
}

/// A section of Mπ → M: u^α(x), p(x), and p^i_α(x).
#[derive(Clone, Debug)]
pub struct SectionMpi {
    pub u: Vec<ScalarField>,
    pub p: ScalarField,
    pub pmom: Vec<Vec<ScalarField>>,
}

/// First jet prolongation j¹φ of a section of π at x.
pub fn prolong_section(phi: &SectionE, x: &[f64]) -> Result<PointJ1, EvalError> {
    let (m, n) = (phi.m(), phi.n());
    assert_eq!(x.len(), m, "base point has wrong dimension");
    let mut u = Vec::with_capacity(n);
    let mut ujet = block2_zeros(n, m);
    for (a, comp) in phi.comps.iter().enumerate() {
        let jet = comp.eval2(x)?;
        u.push(jet.value);
        for i in 0..m {
            ujet[a][i] = jet.grad[i];
        }
    }
    Ok(PointJ1 { x: x.to_vec(), u, ujet })
}

/// Holonomic lift j¹(j¹φ) of a section at x: both jet blocks carry ∂φ
/// and the second block is the (symmetric) Hessian.
pub fn prolong_holonomic(phi: &SectionE, x: &[f64]) -> Result<PointJ1Pi1, EvalError> {
    let (m, n) = (phi.m(), phi.n());
    assert_eq!(x.len(), m, "base point has wrong dimension");
    let mut u = Vec::with_capacity(n);
    let mut ujet = block2_zeros(n, m);
    let mut usec = block3_zeros(n, m);
    for (a, comp) in phi.comps.iter().enumerate() {
        let jet = comp.eval2(x)?;
        u.push(jet.value);
        for i in 0..m {
            ujet[a][i] = jet.grad[i];
            for j in 0..m {
                usec[a][i][j] = jet.hess[(i, j)];
            }
        }
    }
    Ok(PointJ1Pi1 { x: x.to_vec(), u, ujet: ujet.clone(), ubar: ujet, usec })
}

/// First jet of a section of Mπ → M at x.
pub fn prolong_mpi_section(tau: &SectionMpi, x: &[f64]) -> Result<PointJ1PiNu, EvalError> {
    let n = tau.u.len();
    let m = x.len();
    let mut u = Vec::with_capacity(n);
    let mut ujet = block2_zeros(n, m);
    for (a, comp) in tau.u.iter().enumerate() {
        let jet = comp.eval2(x)?;
        u.push(jet.value);
        for j in 0..m {
            ujet[a][j] = jet.grad[j];
        }
    }
    let pj = tau.p.eval2(x)?;
    let p = pj.value;
    let pjet: Vec<f64> = (0..m).map(|j| pj.grad[j]).collect();
    let mut pmom = block2_zeros(n, m);
    let mut pmomjet = block3_zeros(n, m);
    for a in 0..n {
        for i in 0..m {
            let jet = tau.pmom[a][i].eval2(x)?;
            pmom[a][i] = jet.value;
            for j in 0..m {
                pmomjet[a][i][j] = jet.grad[j];
            }
        }
    }
    Ok(PointJ1PiNu { x: x.to_vec(), u, p, pmom, ujet, pjet, pmomjet })
}

// ---------------------------------------------------------------------
// Connections on the base
// ---------------------------------------------------------------------

/// A linear connection on M given by Christoffel fields Γ^k_{ij}(x),
/// stored as `gamma[k][i][j]`, each a function of the x-variables.
#[derive(Clone, Debug)]
pub struct Connection {
    m: usize,
    symmetric: bool,
    gamma: Vec<Vec<Vec<ScalarField>>>,
}

impl Connection {
    pub fn new(m: usize, gamma: Vec<Vec<Vec<ScalarField>>>, symmetric: bool) -> Connection {
        assert_eq!(gamma.len(), m, "gamma must have m upper slots");
        assert!(
            gamma.iter().all(|g| g.len() == m && g.iter().all(|r| r.len() == m)),
            "gamma must be m×m×m"
        );
        Connection { m, symmetric, gamma }
    }

    /// The flat connection Γ ≡ 0.
    pub fn zero(m: usize) -> Connection {
        let vars = x_names(m);
        let gamma = (0..m)
            .map(|_| {
                (0..m)
                    .map(|_| (0..m).map(|_| ScalarField::constant(0.0, vars.clone())).collect())
                    .collect()
            })
            .collect();
        Connection { m, symmetric: true, gamma }
    }

    /// Builds from a coefficient function Γ^k_{ij} = f(k, i, j) of
    /// expression trees over the x-variables.
    pub fn from_exprs(m: usize, symmetric: bool, f: impl Fn(usize, usize, usize) -> Expr) -> Connection {
        let vars = x_names(m);
        let gamma = (0..m)
            .map(|k| {
                (0..m)
                    .map(|i| {
                        (0..m)
                            .map(|j| {
                                ScalarField::new(f(k, i, j), vars.clone())
                                    .expect("connection expressions must use x-variables only")
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Connection { m, symmetric, gamma }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn gamma(&self, k: usize, i: usize, j: usize) -> &ScalarField {
        &self.gamma[k][i][j]
    }

    /// Christoffel values at x, indexed `[k][i][j]`.
    pub fn eval(&self, x: &[f64]) -> Result<Block3, EvalError> {
        assert_eq!(x.len(), self.m, "base point has wrong dimension");
        let mut out = block3_zeros(self.m, self.m);
        for k in 0..self.m {
            for i in 0..self.m {
                for j in 0..self.m {
                    out[k][i][j] = self.gamma[k][i][j].eval0(x)?;
                }
            }
        }
        Ok(out)
    }

    /// Torsion values T^k_{ij} = Γ^k_{ij} − Γ^k_{ji} at x.
    pub fn torsion_at(&self, x: &[f64]) -> Result<Block3, EvalError> {
        let g = self.eval(x)?;
        Ok(block3_from(self.m, self.m, |k, i, j| g[k][i][j] - g[k][j][i]))
    }

    /// The connection ∇ + T whose Christoffels are the lower-index
    /// transpose Γ^k_{ji}; its exchange map inverts the one built
    /// from ∇, and applying it to a symmetric connection is a no-op.
    pub fn add_torsion(&self) -> Connection {
        let gamma = (0..self.m)
            .map(|k| {
                (0..self.m)
                    .map(|i| {
                        (0..self.m)
                            .map(|j| self.gamma[k][j][i].clone())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Connection { m: self.m, symmetric: self.symmetric, gamma }
    }

    /// Checks the symmetry claim at the given sample points.
    pub fn validate_symmetry(&self, points: &[Vec<f64>], tol: f64) -> Result<bool, EvalError> {
        for x in points {
            let g = self.eval(x)?;
            for k in 0..self.m {
                for i in 0..self.m {
                    for j in 0..self.m {
                        if (g[k][i][j] - g[k][j][i]).abs() > tol {
                            return Ok(false);
                        }
                    }
                }
            }
        }
        Ok(true)
    }

    /// Σ_j Γ^j_{ij}(x) for each i, the trace entering d^{∇,η}.
    pub fn trace_at(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let g = self.eval(x)?;
        Ok((0..self.m).map(|i| (0..self.m).map(|j| g[j][i][j]).sum()).collect())
    }
}

/// Covariant-volume differential of a base function:
/// d^{∇,η} f = (∂f/∂x^i − f Γ^j_{ij}) dx^i, returned as the covector of
/// coefficients.
pub fn d_nabla_eta(f: &ScalarField, conn: &Connection, x: &[f64]) -> Result<Vec<f64>, EvalError> {
    assert_eq!(f.dim(), conn.m(), "f must be a function of the base variables");
    let jet = f.eval2(x)?;
    let tr = conn.trace_at(x)?;
    Ok((0..conn.m()).map(|i| jet.grad[i] - jet.value * tr[i]).collect())
}

/// The connection-dependent splitting map on volume-valued jets:
/// (a, a_i) ↦ (a, a_i − a Γ^j_{ij}).
pub fn phi_nabla(conn: &Connection, x: &[f64], a: f64, a_i: &[f64]) -> Result<(f64, Vec<f64>), EvalError> {
    assert_eq!(a_i.len(), conn.m(), "covector has wrong length");
    let tr = conn.trace_at(x)?;
    Ok((a, (0..conn.m()).map(|i| a_i[i] - a * tr[i]).collect()))
}

// ---------------------------------------------------------------------
// Canonical forms
// ---------------------------------------------------------------------

/// η = dx¹∧…∧dxᵐ on the given space.
pub fn volume_form(layout: Layout) -> KForm {
    let idx: Vec<usize> = (0..layout.dims.m).map(|i| layout.x(i)).collect();
    KForm::basis(layout.total(), &idx)
}

/// d^{m−1}x_i = i_{∂/∂x^i} η on the given space.
pub fn dm1x(layout: Layout, i: usize) -> KForm {
    let vol = volume_form(layout);
    let mut e = vec![0.0; layout.total()];
    e[layout.x(i)] = 1.0;
    vol.interior(&e)
}

/// Canonical m-form Θ of Mπ at z: p η + p^i_α du^α ∧ d^{m−1}x_i.
pub fn canonical_theta(z: &PointMpi) -> KForm {
    let dims = z.dims();
    let layout = Layout::new(dims, Space::MPi);
    let mut theta = volume_form(layout).scale(z.p);
    for a in 0..dims.n {
        for i in 0..dims.m {
            let du = KForm::basis(layout.total(), &[layout.u(a)]);
            theta = theta.add(&du.wedge(&dm1x(layout, i)).scale(z.pmom[a][i]));
        }
    }
    theta
}

/// Canonical multisymplectic (m+1)-form Ω = −dΘ of Mπ:
/// −dp∧η − dp^i_α∧du^α∧d^{m−1}x_i. Its coefficients are constant.
pub fn canonical_omega(dims: BundleDims) -> KForm {
    let layout = Layout::new(dims, Space::MPi);
    let total = layout.total();
    let dp = KForm::basis(total, &[layout.p()]);
    let mut omega = dp.wedge(&volume_form(layout)).scale(-1.0);
    for a in 0..dims.n {
        for i in 0..dims.m {
            let dpmom = KForm::basis(total, &[layout.pmom(a, i)]);
            let du = KForm::basis(total, &[layout.u(a)]);
            omega = omega.add(&dpmom.wedge(&du).wedge(&dm1x(layout, i)).scale(-1.0));
        }
    }
    omega
}

/// Canonical (m+2)-form of Λ^{m+1}₂J¹π:
/// −dp̄_α∧du^α∧η − dp̄^i_α∧du^α_i∧η.
pub fn canonical_omega_lambda_j1(dims: BundleDims) -> KForm {
    let layout = Layout::new(dims, Space::LambdaJ1);
    let total = layout.total();
    let vol = volume_form(layout);
    let mut omega = KForm::zero(total, dims.m + 2);
    for a in 0..dims.n {
        let dpb = KForm::basis(total, &[layout.pbar_u(a)]);
        let du = KForm::basis(total, &[layout.u(a)]);
        omega = omega.add(&dpb.wedge(&du).wedge(&vol).scale(-1.0));
        for i in 0..dims.m {
            let dpbj = KForm::basis(total, &[layout.pbar_ujet(a, i)]);
            let duj = KForm::basis(total, &[layout.ujet(a, i)]);
            omega = omega.add(&dpbj.wedge(&duj).wedge(&vol).scale(-1.0));
        }
    }
    omega
}

/// Canonical (m+2)-form of Λ^{m+1}₂Mπ:
/// −dp̄_α∧du^α∧η − dp̄∧dp∧η − dp̄^α_i∧dp^i_α∧η.
pub fn canonical_omega_lambda_mpi(dims: BundleDims) -> KForm {
    let layout = Layout::new(dims, Space::LambdaMPi);
    let total = layout.total();
    let vol = volume_form(layout);
    let mut omega = KForm::zero(total, dims.m + 2);
    for a in 0..dims.n {
        let dpb = KForm::basis(total, &[layout.pbar_u(a)]);
        let du = KForm::basis(total, &[layout.u(a)]);
        omega = omega.add(&dpb.wedge(&du).wedge(&vol).scale(-1.0));
        for i in 0..dims.m {
            let dpbm = KForm::basis(total, &[layout.pbar_pmom(a, i)]);
            let dpm = KForm::basis(total, &[layout.pmom(a, i)]);
            omega = omega.add(&dpbm.wedge(&dpm).wedge(&vol).scale(-1.0));
        }
    }
    let dpbp = KForm::basis(total, &[layout.pbar_p()]);
    let dp = KForm::basis(total, &[layout.p()]);
    omega.add(&dpbp.wedge(&dp).wedge(&vol).scale(-1.0))
}

/// The vertical endomorphism S_η at a J¹π point: the family of m-forms
/// (du^α − u^α_j dx^j) ∧ d^{m−1}x_i, one per momentum slot (α, i). Its
/// contraction with dL reassembles the Poincaré-Cartan form.
pub struct VerticalEndomorphism {
    pub dims: BundleDims,
    /// `factors[α][i]` is the m-form multiplying ∂/∂u^α_i.
    pub factors: Vec<Vec<KForm>>,
}

pub fn vertical_endomorphism(z: &PointJ1) -> VerticalEndomorphism {
    let dims = z.dims();
    let layout = Layout::new(dims, Space::J1);
    let total = layout.total();
    let factors = (0..dims.n)
        .map(|a| {
            // Contact 1-form θ^α = du^α − u^α_j dx^j at z.
            let mut theta = KForm::basis(total, &[layout.u(a)]);
            for j in 0..dims.m {
                theta = theta.add(&KForm::basis(total, &[layout.x(j)]).scale(-z.ujet[a][j]));
            }
            (0..dims.m).map(|i| theta.wedge(&dm1x(layout, i))).collect()
        })
        .collect();
    VerticalEndomorphism { dims, factors }
}

impl VerticalEndomorphism {
    /// ⟨S_η, df⟩ for a function with u-jet partials `df_ujet[α][i]`.
    pub fn contract(&self, df_ujet: &Block2) -> KForm {
        let layout = Layout::new(self.dims, Space::J1);
        let mut out = KForm::zero(layout.total(), self.dims.m);
        for a in 0..self.dims.n {
            for i in 0..self.dims.m {
                out = out.add(&self.factors[a][i].scale(df_ujet[a][i]));
            }
        }
        out
    }
}

// ---------------------------------------------------------------------
// Fibred chart changes
// ---------------------------------------------------------------------

/// A fibred change of chart: base maps y^j(x) and fibre maps v^β(x, u).
#[derive(Clone, Debug)]
pub struct FiberedChart {
    base: Vec<ScalarField>,
    fiber: Vec<ScalarField>,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ChartError {
    #[error("base Jacobian is singular at the evaluation point")]
    SingularBase,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Result of transporting a J¹π₁ point: the point in the new chart and
/// the transformed Christoffel values at the image base point.
#[derive(Clone, Debug)]
pub struct ChartImage {
    pub point: PointJ1Pi1,
    pub gamma_b: Block3,
}

impl FiberedChart {
    pub fn new(base: Vec<ScalarField>, fiber: Vec<ScalarField>) -> FiberedChart {
        let m = base.len();
        let n = fiber.len();
        assert!(base.iter().all(|f| f.dim() == m), "base maps must depend on x only");
        assert!(fiber.iter().all(|f| f.dim() == m + n), "fibre maps must depend on (x, u)");
        FiberedChart { base, fiber }
    }

    pub fn m(&self) -> usize {
        self.base.len()
    }

    pub fn n(&self) -> usize {
        self.fiber.len()
    }

    pub fn base(&self) -> &[ScalarField] {
        &self.base
    }

    pub fn fiber(&self) -> &[ScalarField] {
        &self.fiber
    }

    /// The identity chart at the given dimensions.
    pub fn identity(dims: BundleDims) -> FiberedChart {
        let base = (0..dims.m)
            .map(|i| ScalarField::new(Expr::var(format!("x{}", i + 1)), x_names(dims.m)).unwrap())
            .collect();
        let fiber = (0..dims.n)
            .map(|a| {
                ScalarField::new(Expr::var(format!("u{}", a + 1)), eu_names(dims.m, dims.n)).unwrap()
            })
            .collect();
        FiberedChart { base, fiber }
    }
}

/// Transports a J¹π₁ point and a connection through a fibred chart
/// change. The second-jet block and Christoffels transform with the
/// second derivatives of the chart; the inverse base Jacobian is
/// computed numerically at the point.
pub fn change_chart_j1pi1(
    chart: &FiberedChart,
    conn: &Connection,
    z: &PointJ1Pi1,
) -> Result<ChartImage, ChartError> {
    let dims = z.dims();
    let (m, n) = (dims.m, dims.n);
    assert_eq!(chart.m(), m, "chart base dimension mismatch");
    assert_eq!(chart.n(), n, "chart fibre dimension mismatch");
    assert_eq!(conn.m(), m, "connection dimension mismatch");

    // Base jets: y, J[j][i] = ∂y^j/∂x^i, S[j][i][i'] = ∂²y^j/∂x^i∂x^{i'}.
    let mut y = vec![0.0; m];
    let mut jac = nalgebra::DMatrix::zeros(m, m);
    let mut s2 = block3_zeros(m, m);
    for j in 0..m {
        let jet = chart.base[j].eval2(&z.x)?;
        y[j] = jet.value;
        for i in 0..m {
            jac[(j, i)] = jet.grad[i];
            for i2 in 0..m {
                s2[j][i][i2] = jet.hess[(i, i2)];
            }
        }
    }
    let inv = jac.clone().try_inverse().ok_or(ChartError::SingularBase)?;
    // b[i][j] = ∂x^i/∂y^j.
    let b = |i: usize, j: usize| inv[(i, j)];

    // ∂²x^i/∂y^j∂y^{j'} = −(∂x^i/∂y^a)(∂²y^a/∂x^b∂x^c)(∂x^b/∂y^j)(∂x^c/∂y^{j'}).
    let mut x2 = block3_zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            for j2 in 0..m {
                let mut acc = 0.0;
                for a in 0..m {
                    for bb in 0..m {
                        for c in 0..m {
                            acc += b(i, a) * s2[a][bb][c] * b(bb, j) * b(c, j2);
                        }
                    }
                }
                x2[i][j][j2] = -acc;
            }
        }
    }

    // Fibre jets at (x, u).
    let mut xu = z.x.clone();
    xu.extend_from_slice(&z.u);
    let mut v = vec![0.0; n];
    let mut v_x = block2_zeros(n, m);
    let mut v_u = vec![vec![0.0; n]; n];
    let mut v_xx = block3_zeros(n, m);
    let mut v_xu = vec![vec![vec![0.0; n]; m]; n];
    let mut v_uu = vec![vec![vec![0.0; n]; n]; n];
    for be in 0..n {
        let jet = chart.fiber[be].eval2(&xu)?;
        v[be] = jet.value;
        for i in 0..m {
            v_x[be][i] = jet.grad[i];
            for i2 in 0..m {
                v_xx[be][i][i2] = jet.hess[(i, i2)];
            }
            for al in 0..n {
                v_xu[be][i][al] = jet.hess[(i, m + al)];
            }
        }
        for al in 0..n {
            v_u[be][al] = jet.grad[m + al];
            for al2 in 0..n {
                v_uu[be][al][al2] = jet.hess[(m + al, m + al2)];
            }
        }
    }

    // Totalized first derivatives D[β][i] = ∂v^β/∂x^i + u^α_i ∂v^β/∂u^α,
    // with the first or second jet block supplying u^α_i.
    let total_d = |jet_block: &Block2, be: usize, i: usize| -> f64 {
        v_x[be][i] + (0..n).map(|al| jet_block[al][i] * v_u[be][al]).sum::<f64>()
    };

    let mut vjet = block2_zeros(n, m);
    let mut vbar = block2_zeros(n, m);
    for be in 0..n {
        for j in 0..m {
            vjet[be][j] = (0..m).map(|i| total_d(&z.ujet, be, i) * b(i, j)).sum();
            vbar[be][j] = (0..m).map(|i| total_d(&z.ubar, be, i) * b(i, j)).sum();
        }
    }

    // Second block: the mixed-jet chain rule. K[β][i][i'] carries the
    // curvature of the fibre map along (ujet, ubar) and the point's
    // second jet; the trailing term carries the base chart's bending.
    let mut vsec = block3_zeros(n, m);
    for be in 0..n {
        for j in 0..m {
            for j2 in 0..m {
                let mut acc = 0.0;
                for i in 0..m {
                    for i2 in 0..m {
                        let mut k = v_xx[be][i][i2];
                        for al in 0..n {
                            k += z.ujet[al][i] * v_xu[be][i2][al];
                            k += z.ubar[al][i2] * v_xu[be][i][al];
                            for al2 in 0..n {
                                k += z.ujet[al][i] * z.ubar[al2][i2] * v_uu[be][al2][al];
                            }
                        }
                        for al in 0..n {
                            k += z.usec[al][i][i2] * v_u[be][al];
                        }
                        acc += k * b(i, j) * b(i2, j2);
                    }
                }
                for i in 0..m {
                    acc += total_d(&z.ujet, be, i) * x2[i][j][j2];
                }
                vsec[be][j][j2] = acc;
            }
        }
    }

    // Christoffel transport:
    // Γ_B^{j''}_{jj'} = (∂²x^{i''}/∂y^j∂y^{j'} + ∂x^i/∂y^j ∂x^{i'}/∂y^{j'} Γ^{i''}_{ii'}) ∂y^{j''}/∂x^{i''}.
    let g = conn.eval(&z.x)?;
    let mut gamma_b = block3_zeros(m, m);
    for j3 in 0..m {
        for j in 0..m {
            for j2 in 0..m {
                let mut acc = 0.0;
                for i3 in 0..m {
                    let mut inner = x2[i3][j][j2];
                    for i in 0..m {
                        for i2 in 0..m {
                            inner += b(i, j) * b(i2, j2) * g[i3][i][i2];
                        }
                    }
                    acc += inner * jac[(j3, i3)];
                }
                gamma_b[j3][j][j2] = acc;
            }
        }
    }

    Ok(ChartImage {
        point: PointJ1Pi1 { x: y, u: v, ujet: vjet, ubar: vbar, usec: vsec },
        gamma_b,
    })
}
