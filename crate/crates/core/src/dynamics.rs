//! Dynamics on the two legs of the triple: Lagrangian and Hamiltonian
//! densities, Poincaré-Cartan forms, the extended and reduced Legendre
//! maps with Newton inversion, the Euler-Lagrange and
//! Hamilton-De Donder-Weyl equations as residual operators, the
//! generating submanifolds S_L and S_H with their tangent generators,
//! and the affine/quadratic example families.
//!
//! All derivatives of user-supplied expressions come from one
//! second-order forward pass ([`ScalarField::eval2`]); total derivatives
//! along sections are expanded analytically by the chain rule, never by
//! finite differences.

use std::cell::RefCell;
use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::exterior::{KForm, RANK_TOL};
use crate::fields::{EvalError, Expr, FieldError, Jet2Scalar, ScalarField};
use crate::geometry::{
    block2_from, block3_zeros, dm1x, j1_names, m0_names, volume_form, Block2, Block3, BundleDims,
    Layout, PointJ1, PointJ1PiNu, PointM0, PointMpi, SectionE, SectionM0, Space,
};
use crate::triple::{flat_omega, omega_tilde_kernel_generators, tulczyjew_a, FormLambdaJ1, FormLambdaMpi};

/// Convergence tolerance for the Legendre Newton iteration, in the
/// ∞-norm of the momentum residual.
pub const TAU_NEWTON: f64 = 1e-12;

const MAX_NEWTON_STEPS: usize = 50;
const MAX_HALVINGS: usize = 20;

#[derive(Debug, Error)]
pub enum DynError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("Newton iteration stalled after {iterations} steps (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("jet-variable Hessian is singular (relative conditioning {ratio:.3e})")]
    SingularHessian { ratio: f64 },
    #[error("point is off the constraint set (residual {residual:.3e} > {tol:.3e})")]
    OffConstraint { residual: f64, tol: f64 },
}

fn amax(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, t| acc.max(t.abs()))
}

// ---------------------------------------------------------------------
// Densities
// ---------------------------------------------------------------------

/// A first-order Lagrangian function L(x, u, ujet); the associated
/// density is L dᵐx in a chart adapted to the volume form.
#[derive(Clone, Debug)]
pub struct LagrangianDensity {
    dims: BundleDims,
    f: ScalarField,
}

impl LagrangianDensity {
    pub fn parse(src: &str, dims: BundleDims) -> Result<LagrangianDensity, DynError> {
        let f = ScalarField::parse(src, j1_names(dims.m, dims.n))?;
        Ok(LagrangianDensity { dims, f })
    }

    pub fn from_expr(expr: Expr, dims: BundleDims) -> Result<LagrangianDensity, DynError> {
        let f = ScalarField::new(expr, j1_names(dims.m, dims.n))?;
        Ok(LagrangianDensity { dims, f })
    }

    pub fn dims(&self) -> BundleDims {
        self.dims
    }

    pub fn field(&self) -> &ScalarField {
        &self.f
    }

    fn coords(&self, z: &PointJ1) -> Vec<f64> {
        let (m, n) = (self.dims.m, self.dims.n);
        let mut c = Vec::with_capacity(m + n + n * m);
        c.extend_from_slice(&z.x);
        c.extend_from_slice(&z.u);
        for row in &z.ujet {
            c.extend_from_slice(row);
        }
        c
    }

    pub fn eval0(&self, z: &PointJ1) -> Result<f64, DynError> {
        Ok(self.f.eval0(&self.coords(z))?)
    }

    /// Value, gradient, and Hessian in the (x, u, ujet) coordinate order;
    /// gradient indices agree with the J¹π layout offsets.
    pub fn eval2(&self, z: &PointJ1) -> Result<Jet2Scalar, DynError> {
        Ok(self.f.eval2(&self.coords(z))?)
    }
}

/// A Hamiltonian function H(x, u, pmom). The extended density it
/// represents is (p + H) dᵐx, and the section it generates inserts
/// p = −H; neither depends on p itself, so p is excluded from the
/// variable set by construction.
#[derive(Clone, Debug)]
pub struct HamiltonianDensity {
    dims: BundleDims,
    kind: HamKind,
}

#[derive(Clone, Debug)]
enum HamKind {
    Explicit(ScalarField),
    /// Dual of a hyper-regular Lagrangian. Evaluation inverts the
    /// reduced Legendre map and differentiates through the inverse;
    /// inverse jets are memoised per rounded evaluation point. The
    /// memo is interior-mutable and not shared across threads.
    Induced {
        lag: LagrangianDensity,
        memo: RefCell<HashMap<Vec<i64>, Vec<f64>>>,
    },
}

/// 12 decimal digits: collisions only between points the Newton
/// iteration cannot tell apart anyway.
fn memo_key(coords: &[f64]) -> Vec<i64> {
    coords.iter().map(|c| (c * 1e12).round() as i64).collect()
}

impl HamiltonianDensity {
    pub fn parse(src: &str, dims: BundleDims) -> Result<HamiltonianDensity, DynError> {
        let f = ScalarField::parse(src, m0_names(dims.m, dims.n))?;
        Ok(HamiltonianDensity { dims, kind: HamKind::Explicit(f) })
    }

    pub fn from_expr(expr: Expr, dims: BundleDims) -> Result<HamiltonianDensity, DynError> {
        let f = ScalarField::new(expr, m0_names(dims.m, dims.n))?;
        Ok(HamiltonianDensity { dims, kind: HamKind::Explicit(f) })
    }

    pub fn dims(&self) -> BundleDims {
        self.dims
    }

    pub fn is_induced(&self) -> bool {
        matches!(self.kind, HamKind::Induced { .. })
    }

    /// The defining scalar field, when the Hamiltonian was given in
    /// closed form rather than induced through a Legendre inverse.
    pub fn explicit_field(&self) -> Option<&ScalarField> {
        match &self.kind {
            HamKind::Explicit(f) => Some(f),
            HamKind::Induced { .. } => None,
        }
    }

    fn coords(&self, w: &PointM0) -> Vec<f64> {
        let (m, n) = (self.dims.m, self.dims.n);
        let mut c = Vec::with_capacity(m + n + n * m);
        c.extend_from_slice(&w.x);
        c.extend_from_slice(&w.u);
        for row in &w.pmom {
            c.extend_from_slice(row);
        }
        c
    }

    fn inverse_ujet(
        lag: &LagrangianDensity,
        memo: &RefCell<HashMap<Vec<i64>, Vec<f64>>>,
        w: &PointM0,
        coords: &[f64],
    ) -> Result<Block2, DynError> {
        let (m, n) = (lag.dims.m, lag.dims.n);
        let key = memo_key(coords);
        if let Some(flat) = memo.borrow().get(&key) {
            return Ok(block2_from(n, m, |a, i| flat[a * m + i]));
        }
        let z = invert_leg(lag, w, None)?;
        let mut flat = Vec::with_capacity(n * m);
        for row in &z.ujet {
            flat.extend_from_slice(row);
        }
        memo.borrow_mut().insert(key, flat);
        Ok(z.ujet)
    }

    pub fn eval0(&self, w: &PointM0) -> Result<f64, DynError> {
        match &self.kind {
            HamKind::Explicit(f) => Ok(f.eval0(&self.coords(w))?),
            HamKind::Induced { lag, memo } => {
                let coords = self.coords(w);
                let ujet = Self::inverse_ujet(lag, memo, w, &coords)?;
                let z = PointJ1 { x: w.x.clone(), u: w.u.clone(), ujet };
                let mut pairing = 0.0;
                for a in 0..self.dims.n {
                    for i in 0..self.dims.m {
                        pairing += w.pmom[a][i] * z.ujet[a][i];
                    }
                }
                Ok(pairing - lag.eval0(&z)?)
            }
        }
    }

    /// Value, gradient, and Hessian in the (x, u, pmom) coordinate
    /// order. The induced variant differentiates through the inverse
    /// Legendre jet: with W the inverse jet-Hessian of L,
    /// H_p = ujet*, H_pp = W, H_pb = −W·L_jb, and
    /// H_bb = −L_bb + L_bj·W·L_jb over the base-and-fibre block b.
    pub fn eval2(&self, w: &PointM0) -> Result<Jet2Scalar, DynError> {
        match &self.kind {
            HamKind::Explicit(f) => Ok(f.eval2(&self.coords(w))?),
            HamKind::Induced { lag, memo } => {
                let (m, n) = (self.dims.m, self.dims.n);
                let (d, q) = (m + n, n * m);
                let coords = self.coords(w);
                let ujet = Self::inverse_ujet(lag, memo, w, &coords)?;
                let z = PointJ1 { x: w.x.clone(), u: w.u.clone(), ujet };
                let lj = lag.eval2(&z)?;

                let ljj = lj.hess.view((d, d), (q, q)).into_owned();
                let sv = ljj.singular_values();
                let (smin, smax) = (sv.min(), sv.max());
                if smax == 0.0 || smin <= RANK_TOL * smax {
                    return Err(DynError::SingularHessian {
                        ratio: if smax == 0.0 { 0.0 } else { smin / smax },
                    });
                }
                let w_inv = ljj
                    .clone()
                    .try_inverse()
                    .ok_or(DynError::SingularHessian { ratio: smin / smax })?;
                let l_jb = lj.hess.view((d, 0), (q, d)).into_owned();
                let l_bb = lj.hess.view((0, 0), (d, d)).into_owned();
                let h_pb = -(&w_inv * &l_jb);
                let h_bb = -&l_bb + l_jb.transpose() * &w_inv * &l_jb;

                let mut value = -lj.value;
                let mut grad = DVector::zeros(d + q);
                for b in 0..d {
                    grad[b] = -lj.grad[b];
                }
                for a in 0..n {
                    for i in 0..m {
                        value += w.pmom[a][i] * z.ujet[a][i];
                        grad[d + a * m + i] = z.ujet[a][i];
                    }
                }
                let mut hess = DMatrix::zeros(d + q, d + q);
                hess.view_mut((0, 0), (d, d)).copy_from(&h_bb);
                hess.view_mut((d, 0), (q, d)).copy_from(&h_pb);
                hess.view_mut((0, d), (d, q)).copy_from(&h_pb.transpose());
                hess.view_mut((d, d), (q, q)).copy_from(&w_inv);
                Ok(Jet2Scalar { value, grad, hess })
            }
        }
    }
}

// ---------------------------------------------------------------------
// Poincaré-Cartan forms
// ---------------------------------------------------------------------

/// Poincaré-Cartan m-form at z, over the J¹π coordinate tangent space:
/// (L − u^α_i ∂L/∂u^α_i) dᵐx + ∂L/∂u^α_i du^α ∧ d^{m−1}x_i.
pub fn pc_theta(lag: &LagrangianDensity, z: &PointJ1) -> Result<KForm, DynError> {
    let dims = lag.dims();
    let lay = Layout::new(dims, Space::J1);
    let jet = lag.eval2(z)?;
    let mut c0 = jet.value;
    for a in 0..dims.n {
        for i in 0..dims.m {
            c0 -= z.ujet[a][i] * jet.grad[lay.ujet(a, i)];
        }
    }
    let mut theta = volume_form(lay).scale(c0);
    for a in 0..dims.n {
        for i in 0..dims.m {
            let du = KForm::basis(lay.total(), &[lay.u(a)]);
            theta = theta.add(&du.wedge(&dm1x(lay, i)).scale(jet.grad[lay.ujet(a, i)]));
        }
    }
    Ok(theta)
}

/// Poincaré-Cartan (m+1)-form at z:
/// −(du^α − u^α_j dx^j) ∧ (∂L/∂u^α dᵐx − d(∂L/∂u^α_i) ∧ d^{m−1}x_i),
/// where d(∂L/∂u^α_i) carries the full Hessian row over all J¹π
/// coordinates.
pub fn pc_omega(lag: &LagrangianDensity, z: &PointJ1) -> Result<KForm, DynError> {
    let dims = lag.dims();
    let lay = Layout::new(dims, Space::J1);
    let tot = lay.total();
    let jet = lag.eval2(z)?;
    let mut omega = KForm::zero(tot, dims.m + 1);
    for a in 0..dims.n {
        let mut contact = KForm::basis(tot, &[lay.u(a)]);
        for j in 0..dims.m {
            contact = contact.add(&KForm::basis(tot, &[lay.x(j)]).scale(-z.ujet[a][j]));
        }
        let mut inner = volume_form(lay).scale(jet.grad[lay.u(a)]);
        for i in 0..dims.m {
            let mut dcoef = KForm::zero(tot, 1);
            for b in 0..tot {
                dcoef.add_term(&[b], jet.hess[(lay.ujet(a, i), b)]);
            }
            inner = inner.add(&dcoef.wedge(&dm1x(lay, i)).scale(-1.0));
        }
        omega = omega.add(&contact.wedge(&inner).scale(-1.0));
    }
    Ok(omega)
}

// ---------------------------------------------------------------------
// Legendre maps
// ---------------------------------------------------------------------

/// Extended Legendre map:
/// (x, u, ujet) ↦ (x, u, p = L − u^α_i ∂L/∂u^α_i, p^i_α = ∂L/∂u^α_i).
pub fn legendre_ext(lag: &LagrangianDensity, z: &PointJ1) -> Result<PointMpi, DynError> {
    let dims = lag.dims();
    let lay = Layout::new(dims, Space::J1);
    let jet = lag.eval2(z)?;
    let pmom = block2_from(dims.n, dims.m, |a, i| jet.grad[lay.ujet(a, i)]);
    let mut p = jet.value;
    for a in 0..dims.n {
        for i in 0..dims.m {
            p -= z.ujet[a][i] * pmom[a][i];
        }
    }
    Ok(PointMpi { x: z.x.clone(), u: z.u.clone(), p, pmom })
}

/// Reduced Legendre map: the extended map with the p coordinate dropped.
pub fn legendre_red(lag: &LagrangianDensity, z: &PointJ1) -> Result<PointM0, DynError> {
    let w = legendre_ext(lag, z)?;
    Ok(PointM0 { x: w.x, u: w.u, pmom: w.pmom })
}

/// Jacobian of the extended Legendre map at z; rows run over the Mπ
/// coordinates, columns over the J¹π coordinates.
pub fn legendre_ext_jacobian(
    lag: &LagrangianDensity,
    z: &PointJ1,
) -> Result<DMatrix<f64>, DynError> {
    let dims = lag.dims();
    let jl = Layout::new(dims, Space::J1);
    let ml = Layout::new(dims, Space::MPi);
    let jet = lag.eval2(z)?;
    let mut jac = DMatrix::zeros(ml.total(), jl.total());
    for i in 0..dims.m {
        jac[(ml.x(i), jl.x(i))] = 1.0;
    }
    for a in 0..dims.n {
        jac[(ml.u(a), jl.u(a))] = 1.0;
    }
    for b in 0..jl.total() {
        let mut d = jet.grad[b];
        for a in 0..dims.n {
            for i in 0..dims.m {
                d -= z.ujet[a][i] * jet.hess[(jl.ujet(a, i), b)];
            }
        }
        jac[(ml.p(), b)] = d;
    }
    // The explicit u^α_i factor in p = L − u^α_i ∂L/∂u^α_i.
    for a in 0..dims.n {
        for i in 0..dims.m {
            jac[(ml.p(), jl.ujet(a, i))] -= jet.grad[jl.ujet(a, i)];
            for b in 0..jl.total() {
                jac[(ml.pmom(a, i), b)] = jet.hess[(jl.ujet(a, i), b)];
            }
        }
    }
    Ok(jac)
}

#[derive(Clone, Copy, Debug)]
pub struct HessianRegularity {
    pub regular: bool,
    pub min_singular_value: f64,
    pub max_singular_value: f64,
}

fn jet_hessian_block(dims: BundleDims, jet: &Jet2Scalar) -> DMatrix<f64> {
    let (d, q) = (dims.m + dims.n, dims.n * dims.m);
    jet.hess.view((d, d), (q, q)).into_owned()
}

/// Regularity of the (nm)×(nm) Hessian of L in the jet variables:
/// regular when the smallest singular value exceeds [`RANK_TOL`] times
/// the largest.
pub fn hessian_regularity(
    lag: &LagrangianDensity,
    z: &PointJ1,
) -> Result<HessianRegularity, DynError> {
    let hjj = jet_hessian_block(lag.dims(), &lag.eval2(z)?);
    let sv = hjj.singular_values();
    let (smin, smax) = (sv.min(), sv.max());
    Ok(HessianRegularity {
        regular: smax > 0.0 && smin > RANK_TOL * smax,
        min_singular_value: smin,
        max_singular_value: smax,
    })
}

/// Invert the reduced Legendre map over the base point of `target` by
/// damped Newton iteration on F(ujet) = ∂L/∂ujet − pmom, with the jet
/// Hessian of L as Jacobian. `guess` seeds the jet block; the default
/// seed ujet = pmom is exact for the unit quadratic Lagrangian. Full
/// steps are tried first, halving up to 20 times when the residual
/// fails to decrease.
pub fn invert_leg(
    lag: &LagrangianDensity,
    target: &PointM0,
    guess: Option<&Block2>,
) -> Result<PointJ1, DynError> {
    let dims = lag.dims();
    let (m, n) = (dims.m, dims.n);
    let q = n * m;
    let d = m + n;
    let pflat = DVector::from_iterator(q, target.pmom.iter().flatten().copied());
    let seed = guess.unwrap_or(&target.pmom);
    let mut v = DVector::from_iterator(q, seed.iter().flatten().copied());
    let point = |v: &DVector<f64>| PointJ1 {
        x: target.x.clone(),
        u: target.u.clone(),
        ujet: block2_from(n, m, |a, i| v[a * m + i]),
    };
    let residual = |jet: &Jet2Scalar| -> DVector<f64> {
        DVector::from_iterator(q, (0..q).map(|k| jet.grad[d + k] - pflat[k]))
    };

    let mut jet = lag.eval2(&point(&v))?;
    let mut rnorm = residual(&jet).amax();
    for it in 1..=MAX_NEWTON_STEPS {
        // Invertibility gates convergence: an already-satisfied seed on
        // a degenerate fibre is still not an inverse image.
        let hjj = jet_hessian_block(dims, &jet);
        let sv = hjj.singular_values();
        let (smin, smax) = (sv.min(), sv.max());
        if smax == 0.0 || smin <= RANK_TOL * smax {
            return Err(DynError::SingularHessian {
                ratio: if smax == 0.0 { 0.0 } else { smin / smax },
            });
        }
        if rnorm <= TAU_NEWTON {
            return Ok(point(&v));
        }
        let fres = residual(&jet);
        let delta = hjj
            .lu()
            .solve(&fres)
            .ok_or(DynError::SingularHessian { ratio: smin / smax })?;
        let mut accepted = false;
        let mut t = 1.0;
        for _ in 0..=MAX_HALVINGS {
            let cand = &v - &delta * t;
            let cjet = lag.eval2(&point(&cand))?;
            let cnorm = residual(&cjet).amax();
            if cnorm < rnorm || cnorm <= TAU_NEWTON {
                v = cand;
                jet = cjet;
                rnorm = cnorm;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(DynError::NonConvergence { iterations: it, residual: rnorm });
        }
    }
    if rnorm <= TAU_NEWTON {
        return Ok(point(&v));
    }
    Err(DynError::NonConvergence { iterations: MAX_NEWTON_STEPS, residual: rnorm })
}

/// The Hamiltonian dual to a hyper-regular Lagrangian:
/// H(x, u, pmom) = p^i_α u^α_i − L evaluated at the inverse Legendre
/// jet. Derivatives are obtained through the implicit function theorem,
/// so H is exactly as differentiable as L allows.
pub fn induced_hamiltonian(lag: &LagrangianDensity) -> HamiltonianDensity {
    HamiltonianDensity {
        dims: lag.dims(),
        kind: HamKind::Induced { lag: lag.clone(), memo: RefCell::new(HashMap::new()) },
    }
}

// ---------------------------------------------------------------------
// Fibre differentials
// ---------------------------------------------------------------------

/// Fibre differential of L at z as a form over Λ^{m+1}₂J¹π: the
/// coefficient of du^α∧dᵐx is ∂L/∂u^α and of du^α_i∧dᵐx is ∂L/∂u^α_i
/// (dx-components die against dᵐx).
pub fn dl_map(lag: &LagrangianDensity, z: &PointJ1) -> Result<FormLambdaJ1, DynError> {
    let dims = lag.dims();
    let lay = Layout::new(dims, Space::J1);
    let jet = lag.eval2(z)?;
    Ok(FormLambdaJ1 {
        base: z.clone(),
        coef_u: (0..dims.n).map(|a| jet.grad[lay.u(a)]).collect(),
        coef_ujet: block2_from(dims.n, dims.m, |a, i| jet.grad[lay.ujet(a, i)]),
    })
}

/// Minus the differential of the extended density (p + H) dᵐx at ω, as
/// a form over Λ^{m+1}₂Mπ:
/// −∂H/∂u^α du^α∧dᵐx − dp∧dᵐx − ∂H/∂p^i_α dp^i_α∧dᵐx.
pub fn dh_map(ham: &HamiltonianDensity, omega: &PointMpi) -> Result<FormLambdaMpi, DynError> {
    let dims = ham.dims();
    let lay = Layout::new(dims, Space::M0);
    let w = PointM0 { x: omega.x.clone(), u: omega.u.clone(), pmom: omega.pmom.clone() };
    let jet = ham.eval2(&w)?;
    Ok(FormLambdaMpi {
        base: omega.clone(),
        coef_u: (0..dims.n).map(|a| -jet.grad[lay.u(a)]).collect(),
        coef_p: -1.0,
        coef_pmom: block2_from(dims.n, dims.m, |a, i| -jet.grad[lay.pmom(a, i)]),
    })
}

// ---------------------------------------------------------------------
// Field equations as residuals
// ---------------------------------------------------------------------

/// Euler-Lagrange residual along j¹φ at x:
/// R_α = ∂L/∂u^α − d/dx^i (∂L/∂u^α_i), total derivatives expanded by
/// the chain rule through the second derivatives of φ.
pub fn el_residual(
    lag: &LagrangianDensity,
    phi: &SectionE,
    x: &[f64],
) -> Result<Vec<f64>, DynError> {
    let dims = lag.dims();
    let (m, n) = (dims.m, dims.n);
    assert_eq!(phi.m(), m, "section base dimension mismatch");
    assert_eq!(phi.n(), n, "section fibre dimension mismatch");
    let mut u = Vec::with_capacity(n);
    let mut dudx = block2_from(n, m, |_, _| 0.0);
    let mut d2u = block3_zeros(n, m);
    for (a, comp) in phi.comps().iter().enumerate() {
        let jet = comp.eval2(x)?;
        u.push(jet.value);
        for i in 0..m {
            dudx[a][i] = jet.grad[i];
            for j in 0..m {
                d2u[a][i][j] = jet.hess[(i, j)];
            }
        }
    }
    let z = PointJ1 { x: x.to_vec(), u, ujet: dudx.clone() };
    let jet = lag.eval2(&z)?;
    let lay = Layout::new(dims, Space::J1);
    let mut r = Vec::with_capacity(n);
    for a in 0..n {
        let mut total = jet.grad[lay.u(a)];
        for i in 0..m {
            let row = lay.ujet(a, i);
            let mut dd = jet.hess[(row, lay.x(i))];
            for b in 0..n {
                dd += jet.hess[(row, lay.u(b))] * dudx[b][i];
                for j in 0..m {
                    dd += jet.hess[(row, lay.ujet(b, j))] * d2u[b][j][i];
                }
            }
            total -= dd;
        }
        r.push(total);
    }
    Ok(r)
}

fn hdw_blocks(
    ham: &HamiltonianDensity,
    w: &PointM0,
    dudx: &Block2,
    div_pmom: &[f64],
) -> Result<Vec<f64>, DynError> {
    let dims = ham.dims();
    let lay = Layout::new(dims, Space::M0);
    let jet = ham.eval2(w)?;
    let mut r = Vec::with_capacity(dims.n * dims.m + dims.n);
    for a in 0..dims.n {
        for i in 0..dims.m {
            r.push(dudx[a][i] - jet.grad[lay.pmom(a, i)]);
        }
    }
    for a in 0..dims.n {
        r.push(div_pmom[a] + jet.grad[lay.u(a)]);
    }
    Ok(r)
}

/// Hamilton-De Donder-Weyl residual of a section τ of M°π → M at x:
/// first the mn entries ∂(u^α∘τ)/∂x^i − ∂H/∂p^i_α in row-major (α, i)
/// order, then the n entries Σ_i ∂(p^i_α∘τ)/∂x^i + ∂H/∂u^α.
pub fn hdw_residual(
    ham: &HamiltonianDensity,
    tau: &SectionM0,
    x: &[f64],
) -> Result<Vec<f64>, DynError> {
    let dims = ham.dims();
    let (m, n) = (dims.m, dims.n);
    let mut u = Vec::with_capacity(n);
    let mut dudx = block2_from(n, m, |_, _| 0.0);
    for (a, comp) in tau.u.iter().enumerate() {
        let jet = comp.eval2(x)?;
        u.push(jet.value);
        for i in 0..m {
            dudx[a][i] = jet.grad[i];
        }
    }
    let mut pmom = block2_from(n, m, |_, _| 0.0);
    let mut div = vec![0.0; n];
    for a in 0..n {
        for i in 0..m {
            let jet = tau.pmom[a][i].eval2(x)?;
            pmom[a][i] = jet.value;
            div[a] += jet.grad[i];
        }
    }
    let w = PointM0 { x: x.to_vec(), u, pmom };
    hdw_blocks(ham, &w, &dudx, &div)
}

// ---------------------------------------------------------------------
// Generating submanifolds
// ---------------------------------------------------------------------

/// Defining residual of S_L at z̄: the mn entries p^i_α − ∂L/∂u^α_i in
/// row-major (α, i) order, then the n trace entries
/// p^i_{αi} − ∂L/∂u^α.
pub fn sl_defining(lag: &LagrangianDensity, zbar: &PointJ1PiNu) -> Result<Vec<f64>, DynError> {
    let dims = lag.dims();
    let lay = Layout::new(dims, Space::J1);
    let jet = lag.eval2(&zbar.to_j1())?;
    let mut r = Vec::with_capacity(dims.n * dims.m + dims.n);
    for a in 0..dims.n {
        for i in 0..dims.m {
            r.push(zbar.pmom[a][i] - jet.grad[lay.ujet(a, i)]);
        }
    }
    for a in 0..dims.n {
        let trace: f64 = (0..dims.m).map(|i| zbar.pmomjet[a][i][i]).sum();
        r.push(trace - jet.grad[lay.u(a)]);
    }
    Ok(r)
}

/// Defining residual of S_H at z̄: the mn entries u^α_j − ∂H/∂p^j_α,
/// then the n trace entries p^j_{αj} + ∂H/∂u^α.
pub fn sh_defining(ham: &HamiltonianDensity, zbar: &PointJ1PiNu) -> Result<Vec<f64>, DynError> {
    let dims = ham.dims();
    let lay = Layout::new(dims, Space::M0);
    let w = PointM0 { x: zbar.x.clone(), u: zbar.u.clone(), pmom: zbar.pmom.clone() };
    let jet = ham.eval2(&w)?;
    let mut r = Vec::with_capacity(dims.n * dims.m + dims.n);
    for a in 0..dims.n {
        for j in 0..dims.m {
            r.push(zbar.ujet[a][j] - jet.grad[lay.pmom(a, j)]);
        }
    }
    for a in 0..dims.n {
        let trace: f64 = (0..dims.m).map(|j| zbar.pmomjet[a][j][j]).sum();
        r.push(trace + jet.grad[lay.u(a)]);
    }
    Ok(r)
}

/// Tangent generators of S_L at a point satisfying its defining
/// equations to `tol` (∞-norm): the lifted coordinate directions along
/// x^i, u^α, and u^α_i, each corrected in the momentum block by the
/// matching second partials of L (the trace correction rides on the
/// leading diagonal slot p^1_{α1}), followed by the kernel generators
/// of the premultisymplectic form. The union spans the full tangent
/// space of S_L.
pub fn sl_tangent_basis(
    lag: &LagrangianDensity,
    zbar: &PointJ1PiNu,
    tol: f64,
) -> Result<Vec<DVector<f64>>, DynError> {
    let res = sl_defining(lag, zbar)?;
    let worst = amax(&res);
    if worst > tol {
        return Err(DynError::OffConstraint { residual: worst, tol });
    }
    let dims = lag.dims();
    let jl = Layout::new(dims, Space::J1);
    let nl = Layout::new(dims, Space::J1PiNu);
    let jet = lag.eval2(&zbar.to_j1())?;
    let mut seeds = Vec::with_capacity(dims.m + dims.n + dims.n * dims.m);
    for i in 0..dims.m {
        seeds.push((jl.x(i), nl.x(i)));
    }
    for a in 0..dims.n {
        seeds.push((jl.u(a), nl.u(a)));
    }
    for a in 0..dims.n {
        for i in 0..dims.m {
            seeds.push((jl.ujet(a, i), nl.ujet(a, i)));
        }
    }
    let mut out = Vec::with_capacity(seeds.len());
    for (row, slot) in seeds {
        let mut v = DVector::zeros(nl.total());
        v[slot] = 1.0;
        for b in 0..dims.n {
            for j in 0..dims.m {
                v[nl.pmom(b, j)] += jet.hess[(row, jl.ujet(b, j))];
            }
            v[nl.pmomjet(b, 0, 0)] += jet.hess[(row, jl.u(b))];
        }
        out.push(v);
    }
    out.extend(omega_tilde_kernel_generators(dims));
    Ok(out)
}

/// Tangent generators of S_H at a point satisfying its defining
/// equations to `tol`: lifted directions along x^i, u^α, and p^i_α,
/// with jet corrections +∂²H/∂·∂p^j_β into u^β_j and −∂²H/∂·∂u^β into
/// the leading trace slot, followed by the kernel generators.
pub fn sh_tangent_basis(
    ham: &HamiltonianDensity,
    zbar: &PointJ1PiNu,
    tol: f64,
) -> Result<Vec<DVector<f64>>, DynError> {
    let res = sh_defining(ham, zbar)?;
    let worst = amax(&res);
    if worst > tol {
        return Err(DynError::OffConstraint { residual: worst, tol });
    }
    let dims = ham.dims();
    let hl = Layout::new(dims, Space::M0);
    let nl = Layout::new(dims, Space::J1PiNu);
    let w = PointM0 { x: zbar.x.clone(), u: zbar.u.clone(), pmom: zbar.pmom.clone() };
    let jet = ham.eval2(&w)?;
    let mut seeds = Vec::with_capacity(dims.m + dims.n + dims.n * dims.m);
    for i in 0..dims.m {
        seeds.push((hl.x(i), nl.x(i)));
    }
    for a in 0..dims.n {
        seeds.push((hl.u(a), nl.u(a)));
    }
    for a in 0..dims.n {
        for i in 0..dims.m {
            seeds.push((hl.pmom(a, i), nl.pmom(a, i)));
        }
    }
    let mut out = Vec::with_capacity(seeds.len());
    for (row, slot) in seeds {
        let mut v = DVector::zeros(nl.total());
        v[slot] = 1.0;
        for b in 0..dims.n {
            for j in 0..dims.m {
                v[nl.ujet(b, j)] += jet.hess[(row, hl.pmom(b, j))];
            }
            v[nl.pmomjet(b, 0, 0)] -= jet.hess[(row, hl.u(b))];
        }
        out.push(v);
    }
    out.extend(omega_tilde_kernel_generators(dims));
    Ok(out)
}

// ---------------------------------------------------------------------
// Jet-level equivalence residuals
// ---------------------------------------------------------------------

/// First jet at x of the section x' ↦ Leg_L(j¹φ(x')) of Mπ → M:
/// momenta and their x-derivatives expanded by the chain rule through
/// the second derivatives of φ and the second partials of L.
pub fn legendre_prolongation(
    lag: &LagrangianDensity,
    phi: &SectionE,
    x: &[f64],
) -> Result<PointJ1PiNu, DynError> {
    let dims = lag.dims();
    let (m, n) = (dims.m, dims.n);
    assert_eq!(phi.m(), m, "section base dimension mismatch");
    assert_eq!(phi.n(), n, "section fibre dimension mismatch");
    let mut u = Vec::with_capacity(n);
    let mut dudx = block2_from(n, m, |_, _| 0.0);
    let mut d2u = block3_zeros(n, m);
    for (a, comp) in phi.comps().iter().enumerate() {
        let jet = comp.eval2(x)?;
        u.push(jet.value);
        for i in 0..m {
            dudx[a][i] = jet.grad[i];
            for j in 0..m {
                d2u[a][i][j] = jet.hess[(i, j)];
            }
        }
    }
    let z = PointJ1 { x: x.to_vec(), u: u.clone(), ujet: dudx.clone() };
    let jet = lag.eval2(&z)?;
    let lay = Layout::new(dims, Space::J1);

    let pmom = block2_from(n, m, |a, i| jet.grad[lay.ujet(a, i)]);
    let mut pmomjet = block3_zeros(n, m);
    for a in 0..n {
        for i in 0..m {
            let row = lay.ujet(a, i);
            for k in 0..m {
                let mut d = jet.hess[(row, lay.x(k))];
                for b in 0..n {
                    d += jet.hess[(row, lay.u(b))] * dudx[b][k];
                    for j in 0..m {
                        d += jet.hess[(row, lay.ujet(b, j))] * d2u[b][j][k];
                    }
                }
                pmomjet[a][i][k] = d;
            }
        }
    }
    let mut p = jet.value;
    for a in 0..n {
        for i in 0..m {
            p -= pmom[a][i] * dudx[a][i];
        }
    }
    let mut pjet = vec![0.0; m];
    for k in 0..m {
        // Total x^k-derivative of L along j¹φ, then of the pairing term.
        let mut dl = jet.grad[lay.x(k)];
        for b in 0..n {
            dl += jet.grad[lay.u(b)] * dudx[b][k];
            for j in 0..m {
                dl += jet.grad[lay.ujet(b, j)] * d2u[b][j][k];
            }
        }
        let mut dpair = 0.0;
        for a in 0..n {
            for i in 0..m {
                dpair += pmomjet[a][i][k] * dudx[a][i] + pmom[a][i] * d2u[a][i][k];
            }
        }
        pjet[k] = dl - dpair;
    }
    Ok(PointJ1PiNu { x: x.to_vec(), u, p, pmom, ujet: dudx, pjet, pmomjet })
}

/// Difference, over j¹φ(x), between the fibre differential of L and the
/// image of the prolonged Legendre section under the Lagrangian-side
/// morphism. The jet block cancels identically; the du-block equals the
/// Euler-Lagrange residual, so the form vanishes exactly when φ solves
/// the field equations at x.
pub fn jet_equivalence_residual(
    lag: &LagrangianDensity,
    phi: &SectionE,
    x: &[f64],
) -> Result<FormLambdaJ1, DynError> {
    let dims = lag.dims();
    let zbar = legendre_prolongation(lag, phi, x)?;
    let am = tulczyjew_a(&zbar);
    let dl = dl_map(lag, &am.base)?;
    Ok(FormLambdaJ1 {
        base: am.base.clone(),
        coef_u: (0..dims.n).map(|a| dl.coef_u[a] - am.coef_u[a]).collect(),
        coef_ujet: block2_from(dims.n, dims.m, |a, i| {
            dl.coef_ujet[a][i] - am.coef_ujet[a][i]
        }),
    })
}

/// Shared tail of the jet-level Hamiltonian residuals: prolong the
/// p = −H insertion of the given M°π data, push it through the
/// Hamiltonian-side morphism, and subtract the fibre differential.
fn flat_minus_dh(
    ham: &HamiltonianDensity,
    w: &PointM0,
    dudx: &Block2,
    dpmom: &Block3,
) -> Result<FormLambdaMpi, DynError> {
    let dims = ham.dims();
    let (m, n) = (dims.m, dims.n);
    let lay = Layout::new(dims, Space::M0);
    let jet = ham.eval2(w)?;
    let mut pjet = vec![0.0; m];
    for (k, slot) in pjet.iter_mut().enumerate() {
        let mut d = jet.grad[lay.x(k)];
        for b in 0..n {
            d += jet.grad[lay.u(b)] * dudx[b][k];
            for j in 0..m {
                d += jet.grad[lay.pmom(b, j)] * dpmom[b][j][k];
            }
        }
        *slot = -d;
    }
    let zbar = PointJ1PiNu {
        x: w.x.clone(),
        u: w.u.clone(),
        p: -jet.value,
        pmom: w.pmom.clone(),
        ujet: dudx.clone(),
        pjet,
        pmomjet: dpmom.clone(),
    };
    let f = flat_omega(&zbar);
    let dh = dh_map(ham, &f.base)?;
    Ok(FormLambdaMpi {
        base: f.base.clone(),
        coef_u: (0..n).map(|a| f.coef_u[a] - dh.coef_u[a]).collect(),
        coef_p: f.coef_p - dh.coef_p,
        coef_pmom: block2_from(n, m, |a, i| f.coef_pmom[a][i] - dh.coef_pmom[a][i]),
    })
}

/// Difference, over the p = −H insertion of τ(x), between the image of
/// the prolonged section under the Hamiltonian-side morphism and minus
/// the differential of the extended density. The dp-block cancels
/// identically; the remaining blocks carry the field-equation residual
/// (du-block the divergence part, dp^i_α-block minus the gradient
/// part), so the form vanishes exactly when τ solves the equations at x.
pub fn hdw_jet_residual(
    ham: &HamiltonianDensity,
    tau: &SectionM0,
    x: &[f64],
) -> Result<FormLambdaMpi, DynError> {
    let dims = ham.dims();
    let (m, n) = (dims.m, dims.n);
    let mut u = Vec::with_capacity(n);
    let mut dudx = block2_from(n, m, |_, _| 0.0);
    for (a, comp) in tau.u.iter().enumerate() {
        let jet = comp.eval2(x)?;
        u.push(jet.value);
        for i in 0..m {
            dudx[a][i] = jet.grad[i];
        }
    }
    let mut pmom = block2_from(n, m, |_, _| 0.0);
    let mut dpmom = block3_zeros(n, m);
    for a in 0..n {
        for i in 0..m {
            let jet = tau.pmom[a][i].eval2(x)?;
            pmom[a][i] = jet.value;
            for k in 0..m {
                dpmom[a][i][k] = jet.grad[k];
            }
        }
    }
    let w = PointM0 { x: x.to_vec(), u, pmom };
    flat_minus_dh(ham, &w, &dudx, &dpmom)
}

/// Hamilton-De Donder-Weyl residual of the Legendre transport of j¹φ,
/// with the transported jets computed by the chain rule rather than by
/// composing expressions.
pub fn hdw_residual_transported(
    lag: &LagrangianDensity,
    ham: &HamiltonianDensity,
    phi: &SectionE,
    x: &[f64],
) -> Result<Vec<f64>, DynError> {
    let dims = lag.dims();
    let zbar = legendre_prolongation(lag, phi, x)?;
    let w = PointM0 { x: zbar.x.clone(), u: zbar.u.clone(), pmom: zbar.pmom.clone() };
    let div: Vec<f64> = (0..dims.n)
        .map(|a| (0..dims.m).map(|i| zbar.pmomjet[a][i][i]).sum())
        .collect();
    hdw_blocks(ham, &w, &zbar.ujet, &div)
}

/// Jet-level Hamiltonian residual of the Legendre transport of j¹φ.
pub fn hdw_jet_residual_transported(
    lag: &LagrangianDensity,
    ham: &HamiltonianDensity,
    phi: &SectionE,
    x: &[f64],
) -> Result<FormLambdaMpi, DynError> {
    let zbar = legendre_prolongation(lag, phi, x)?;
    let w = PointM0 { x: zbar.x.clone(), u: zbar.u.clone(), pmom: zbar.pmom.clone() };
    flat_minus_dh(ham, &w, &zbar.ujet, &zbar.pmomjet)
}

// ---------------------------------------------------------------------
// Example families
// ---------------------------------------------------------------------

/// Data of an affine Lagrangian L = γ₀(x, u) + γ^i_α(x, u) u^α_i;
/// `gamma[α][i]` multiplies u^α_i.
#[derive(Clone, Debug)]
pub struct AffineLagrangianSpec {
    pub gamma0: ScalarField,
    pub gamma: Vec<Vec<ScalarField>>,
}

/// Data of a quadratic Lagrangian
/// L = ½(♭₀ + (♭^i_α + ♭̃^i_α) u^α_i + ♭^{ij}_{αβ} u^α_i u^β_j);
/// `flat_quad[α][β][i][j]` multiplies u^α_i u^β_j.
#[derive(Clone, Debug)]
pub struct QuadraticLagrangianSpec {
    pub flat0: ScalarField,
    pub flat_lin: Vec<Vec<ScalarField>>,
    pub flat_lin2: Vec<Vec<ScalarField>>,
    pub flat_quad: Vec<Vec<Vec<Vec<ScalarField>>>>,
}

/// Data of a quadratic Hamiltonian
/// H = ♯^α_i p^i_α + ♯^{αβ}_{ij} p^i_α p^j_β;
/// `sharp_quad[α][β][i][j]` multiplies p^i_α p^j_β.
#[derive(Clone, Debug)]
pub struct QuadraticHamiltonianSpec {
    pub sharp_lin: Vec<Vec<ScalarField>>,
    pub sharp_quad: Vec<Vec<Vec<Vec<ScalarField>>>>,
}

pub fn make_affine_l(
    spec: &AffineLagrangianSpec,
    dims: BundleDims,
) -> Result<LagrangianDensity, DynError> {
    let names = j1_names(dims.m, dims.n);
    let lay = Layout::new(dims, Space::J1);
    let mut expr = spec.gamma0.expr().clone();
    for a in 0..dims.n {
        for i in 0..dims.m {
            expr = expr
                + spec.gamma[a][i].expr().clone() * Expr::var(names[lay.ujet(a, i)].clone());
        }
    }
    LagrangianDensity::from_expr(expr, dims)
}

pub fn make_quadratic_l(
    spec: &QuadraticLagrangianSpec,
    dims: BundleDims,
) -> Result<LagrangianDensity, DynError> {
    let names = j1_names(dims.m, dims.n);
    let lay = Layout::new(dims, Space::J1);
    let jet_var = |a: usize, i: usize| Expr::var(names[lay.ujet(a, i)].clone());
    let mut expr = spec.flat0.expr().clone();
    for a in 0..dims.n {
        for i in 0..dims.m {
            let lin = spec.flat_lin[a][i].expr().clone() + spec.flat_lin2[a][i].expr().clone();
            expr = expr + lin * jet_var(a, i);
        }
    }
    for a in 0..dims.n {
        for b in 0..dims.n {
            for i in 0..dims.m {
                for j in 0..dims.m {
                    expr = expr
                        + spec.flat_quad[a][b][i][j].expr().clone() * jet_var(a, i) * jet_var(b, j);
                }
            }
        }
    }
    LagrangianDensity::from_expr(Expr::num(0.5) * expr, dims)
}

pub fn make_quadratic_h(
    spec: &QuadraticHamiltonianSpec,
    dims: BundleDims,
) -> Result<HamiltonianDensity, DynError> {
    let names = m0_names(dims.m, dims.n);
    let lay = Layout::new(dims, Space::M0);
    let mom_var = |a: usize, i: usize| Expr::var(names[lay.pmom(a, i)].clone());
    let mut expr = Expr::num(0.0);
    for a in 0..dims.n {
        for i in 0..dims.m {
            expr = expr + spec.sharp_lin[a][i].expr().clone() * mom_var(a, i);
        }
    }
    for a in 0..dims.n {
        for b in 0..dims.n {
            for i in 0..dims.m {
                for j in 0..dims.m {
                    expr = expr
                        + spec.sharp_quad[a][b][i][j].expr().clone() * mom_var(a, i) * mom_var(b, j);
                }
            }
        }
    }
    HamiltonianDensity::from_expr(expr, dims)
}
