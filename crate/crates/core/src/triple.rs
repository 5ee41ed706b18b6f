//! Structural maps of the triple over a fibration π: E → M.
//!
//! The pieces assembled here: the exchange isomorphism of the iterated
//! jet bundle J¹π₁ induced by a linear connection on M, the fibrewise
//! pairing between Mπ and J¹π, the core map of covector type, the left
//! morphism A (a closed formula and, separately, the full pipeline
//! through the core map and a wedge embedding), the flat morphism ♭_Ω
//! (a closed formula and, separately, the insertion-derivation route
//! through the horizontal projector), and the premultisymplectic form
//! Ω̃ on J¹(π∘ν) together with its kernel.
//!
//! The two members of each dual pair deliberately share no fibre
//! arithmetic: their agreement is the numerical content of the
//! structural identities this crate certifies.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::exterior::{flat_kernel, KForm};
use crate::fields::EvalError;
use crate::geometry::{
    block2_zeros, block3_zeros, canonical_omega, dm1x, volume_form, Block2, Block3, BundleDims,
    Connection, Layout, PointJ1, PointJ1Pi1, PointJ1PiNu, PointMpi, Space,
};

/// Two points are "over the same element" when their shared blocks
/// agree within this bound.
pub const BASE_MATCH_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TripleError {
    #[error("points do not lie over the same base element (deviation {max_dev:.3e})")]
    BaseMismatch { max_dev: f64 },
    #[error("this construction requires a symmetric connection")]
    NonSymmetricConnection,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

// ---------------------------------------------------------------------
// Exchange map
// ---------------------------------------------------------------------

/// Exchange map with explicitly supplied Christoffel values at the
/// base point: swaps the two jet blocks and corrects the second block,
/// new usec[α][i][j] = old usec[α][j][i] + (ubar − ujet)[α][k]·Γ^k[j][i].
pub fn exchange_with_gamma(gamma: &Block3, z: &PointJ1Pi1) -> PointJ1Pi1 {
    let dims = z.dims();
    let (m, n) = (dims.m, dims.n);
    let mut usec = block3_zeros(n, m);
    for a in 0..n {
        for i in 0..m {
            for j in 0..m {
                let mut corr = 0.0;
                for k in 0..m {
                    corr += (z.ubar[a][k] - z.ujet[a][k]) * gamma[k][j][i];
                }
                usec[a][i][j] = z.usec[a][j][i] + corr;
            }
        }
    }
    PointJ1Pi1 {
        x: z.x.clone(),
        u: z.u.clone(),
        ujet: z.ubar.clone(),
        ubar: z.ujet.clone(),
        usec,
    }
}

/// Exchange map ex_∇ of J¹π₁. It is an involution exactly when ∇ is
/// symmetric; in general its inverse is the exchange map of ∇ + T.
pub fn exchange(conn: &Connection, z: &PointJ1Pi1) -> Result<PointJ1Pi1, TripleError> {
    let gamma = conn.eval(&z.x)?;
    Ok(exchange_with_gamma(&gamma, z))
}

// ---------------------------------------------------------------------
// Pairing and core map
// ---------------------------------------------------------------------

fn max_dev(pairs: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    pairs.into_iter().fold(0.0f64, |w, (a, b)| w.max((a - b).abs()))
}

/// Fibrewise pairing ⟨ω, j¹φ⟩ = p + p^i_α u^α_i; both points must lie
/// over the same point of E.
pub fn pairing(omega: &PointMpi, z: &PointJ1) -> Result<f64, TripleError> {
    let dims = omega.dims();
    let dev = max_dev(
        omega.x.iter().copied().zip(z.x.iter().copied()).chain(
            omega.u.iter().copied().zip(z.u.iter().copied()),
        ),
    );
    if dev > BASE_MATCH_TOL {
        return Err(TripleError::BaseMismatch { max_dev: dev });
    }
    let mut acc = omega.p;
    for a in 0..dims.n {
        for i in 0..dims.m {
            acc += omega.pmom[a][i] * z.ujet[a][i];
        }
    }
    Ok(acc)
}

/// Core covector map: the base differential of the lifted pairing,
/// composed with the exchange map and the volume splitting,
///
///   a_k = p_k + p^i_{αk} ū^α_i + p^i_α (u^α_{ki} + (ū^α_j − u^α_j)Γ^j_{ki})
///         − (p + p^i_α ū^α_i) Γ^j_{kj}.
///
/// Both jets must lie over the same J¹π point.
pub fn core_map(
    conn: &Connection,
    j1omega: &PointJ1PiNu,
    j1sigma: &PointJ1Pi1,
) -> Result<Vec<f64>, TripleError> {
    let dims = j1omega.dims();
    let (m, n) = (dims.m, dims.n);
    let dev = max_dev(
        j1omega
            .x
            .iter()
            .copied()
            .zip(j1sigma.x.iter().copied())
            .chain(j1omega.u.iter().copied().zip(j1sigma.u.iter().copied()))
            .chain(
                j1omega
                    .ujet
                    .iter()
                    .flatten()
                    .copied()
                    .zip(j1sigma.ujet.iter().flatten().copied()),
            ),
    );
    if dev > BASE_MATCH_TOL {
        return Err(TripleError::BaseMismatch { max_dev: dev });
    }
    let g = conn.eval(&j1omega.x)?;
    let tr: Vec<f64> = (0..m).map(|k| (0..m).map(|j| g[j][k][j]).sum()).collect();
    let mut a = Vec::with_capacity(m);
    for k in 0..m {
        let mut acc = j1omega.pjet[k];
        let mut paired = j1omega.p;
        for al in 0..n {
            for i in 0..m {
                acc += j1omega.pmomjet[al][i][k] * j1sigma.ubar[al][i];
                let mut jet_corr = j1sigma.usec[al][k][i];
                for j in 0..m {
                    jet_corr += (j1sigma.ubar[al][j] - j1sigma.ujet[al][j]) * g[j][k][i];
                }
                acc += j1omega.pmom[al][i] * jet_corr;
                paired += j1omega.pmom[al][i] * j1sigma.ubar[al][i];
            }
        }
        a.push(acc - paired * tr[k]);
    }
    Ok(a)
}

// ---------------------------------------------------------------------
// The affine-map stage
// ---------------------------------------------------------------------

/// Value of the affine bundle map J¹π₁ → T*M attached to a jet of a
/// multimomentum section: constant part `pbar[k]`, linear part
/// `pbar_mom[α][i][k]` on ū^α_i, and `pbar_jet[α][i][j][k]` on u^α_{ij}.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMapValue {
    pub pbar: Vec<f64>,
    pub pbar_mom: Vec<Vec<Vec<f64>>>,
    pub pbar_jet: Vec<Vec<Vec<Vec<f64>>>>,
}

impl AffineMapValue {
    /// Evaluates the encoded affine map on a compatible iterated jet.
    pub fn apply(&self, j1sigma: &PointJ1Pi1) -> Vec<f64> {
        let dims = j1sigma.dims();
        let (m, n) = (dims.m, dims.n);
        let mut out = self.pbar.clone();
        for k in 0..m {
            for a in 0..n {
                for i in 0..m {
                    out[k] += self.pbar_mom[a][i][k] * j1sigma.ubar[a][i];
                    for j in 0..m {
                        out[k] += self.pbar_jet[a][i][j][k] * j1sigma.usec[a][i][j];
                    }
                }
            }
        }
        out
    }
}

/// Closed form of the affine-map stage:
///
///   p̄_k = p_k − p^i_α u^α_l Γ^l_{ki} − p Γ^j_{kj},
///   p̄^i_{αk} = p^i_{αk} + p^l_α Γ^i_{kl} − p^i_α Γ^j_{kj},
///   p̄^{ij}_{αk} = p^j_α δ^i_k.
///
/// Applying the result to any compatible jet reproduces [`core_map`].
pub fn a_tilde(conn: &Connection, j1omega: &PointJ1PiNu) -> Result<AffineMapValue, TripleError> {
    let dims = j1omega.dims();
    let (m, n) = (dims.m, dims.n);
    let g = conn.eval(&j1omega.x)?;
    let tr: Vec<f64> = (0..m).map(|k| (0..m).map(|j| g[j][k][j]).sum()).collect();
    let mut pbar = Vec::with_capacity(m);
    for k in 0..m {
        let mut acc = j1omega.pjet[k] - j1omega.p * tr[k];
        for a in 0..n {
            for i in 0..m {
                for l in 0..m {
                    acc -= j1omega.pmom[a][i] * j1omega.ujet[a][l] * g[l][k][i];
                }
            }
        }
        pbar.push(acc);
    }
    let mut pbar_mom = vec![vec![vec![0.0; m]; m]; n];
    for a in 0..n {
        for i in 0..m {
            for k in 0..m {
                let mut acc = j1omega.pmomjet[a][i][k] - j1omega.pmom[a][i] * tr[k];
                for l in 0..m {
                    acc += j1omega.pmom[a][l] * g[i][k][l];
                }
                pbar_mom[a][i][k] = acc;
            }
        }
    }
    let mut pbar_jet = vec![vec![vec![vec![0.0; m]; m]; m]; n];
    for a in 0..n {
        for i in 0..m {
            for j in 0..m {
                pbar_jet[a][i][j][i] = j1omega.pmom[a][j];
            }
        }
    }
    Ok(AffineMapValue { pbar, pbar_mom, pbar_jet })
}

// ---------------------------------------------------------------------
// Left morphism
// ---------------------------------------------------------------------

/// An (m+1)-form of contact type over a J¹π point:
/// (coef_u[α] du^α + coef_ujet[α][i] du^α_i) ∧ dᵐx.
#[derive(Clone, Debug, PartialEq)]
pub struct FormLambdaJ1 {
    pub base: PointJ1,
    pub coef_u: Vec<f64>,
    pub coef_ujet: Block2,
}

impl FormLambdaJ1 {
    /// The form as a KForm over the J¹π coordinate tangent space.
    pub fn to_j1_form(&self) -> KForm {
        let dims = self.base.dims();
        let layout = Layout::new(dims, Space::J1);
        let total = layout.total();
        let vol = volume_form(layout);
        let mut out = KForm::zero(total, dims.m + 1);
        for a in 0..dims.n {
            let du = KForm::basis(total, &[layout.u(a)]);
            out = out.add(&du.wedge(&vol).scale(self.coef_u[a]));
            for i in 0..dims.m {
                let duj = KForm::basis(total, &[layout.ujet(a, i)]);
                out = out.add(&duj.wedge(&vol).scale(self.coef_ujet[a][i]));
            }
        }
        out
    }

    /// Worst coefficient deviation from `other`.
    pub fn max_diff(&self, other: &FormLambdaJ1) -> f64 {
        let mut w = max_dev(self.coef_u.iter().copied().zip(other.coef_u.iter().copied()));
        w = w.max(max_dev(
            self.coef_ujet.iter().flatten().copied().zip(other.coef_ujet.iter().flatten().copied()),
        ));
        w
    }
}

/// Left morphism A of the triple, closed form: the trace of the
/// momentum jets lands on du^α and the momenta land on du^α_i,
///
///   A(z̄) = (p^i_{αi} du^α + p^i_α du^α_i) ∧ dᵐx.
pub fn tulczyjew_a(j1omega: &PointJ1PiNu) -> FormLambdaJ1 {
    let dims = j1omega.dims();
    let coef_u = (0..dims.n)
        .map(|a| (0..dims.m).map(|i| j1omega.pmomjet[a][i][i]).sum())
        .collect();
    FormLambdaJ1 {
        base: j1omega.to_j1(),
        coef_u,
        coef_ujet: j1omega.pmom.clone(),
    }
}

/// Left morphism computed through the full pipeline: probe the core
/// map to recover the affine-map value, encode each covector component
/// as an m-form through the jet-evaluation dictionary, and embed by
/// the wedge ι(ω_k ⊗ dx^k) = −dx^k ∧ ω_k (the sign forced by the
/// coordinate ordering contract). No code is shared with
/// [`tulczyjew_a`]'s trace formula; the Γ-dependence cancels in the
/// wedge, which is the statement being certified.
pub fn tulczyjew_a_pipeline(
    conn: &Connection,
    j1omega: &PointJ1PiNu,
) -> Result<FormLambdaJ1, TripleError> {
    if !conn.is_symmetric() {
        return Err(TripleError::NonSymmetricConnection);
    }
    let dims = j1omega.dims();
    let (m, n) = (dims.m, dims.n);
    let sigma0 = PointJ1Pi1 {
        x: j1omega.x.clone(),
        u: j1omega.u.clone(),
        ujet: j1omega.ujet.clone(),
        ubar: block2_zeros(n, m),
        usec: block3_zeros(n, m),
    };
    let a0 = core_map(conn, j1omega, &sigma0)?;
    // Affine structure: one probe per fibre direction recovers the
    // linear parts exactly.
    let mut lin_ubar = vec![vec![vec![0.0; m]; m]; n];
    for a in 0..n {
        for i in 0..m {
            let mut s = sigma0.clone();
            s.ubar[a][i] = 1.0;
            let ak = core_map(conn, j1omega, &s)?;
            for k in 0..m {
                lin_ubar[a][i][k] = ak[k] - a0[k];
            }
        }
    }
    let mut lin_usec = vec![vec![vec![vec![0.0; m]; m]; m]; n];
    for a in 0..n {
        for i in 0..m {
            for j in 0..m {
                let mut s = sigma0.clone();
                s.usec[a][i][j] = 1.0;
                let ak = core_map(conn, j1omega, &s)?;
                for k in 0..m {
                    lin_usec[a][i][j][k] = ak[k] - a0[k];
                }
            }
        }
    }

    let layout = Layout::new(dims, Space::J1);
    let total = layout.total();
    let vol = volume_form(layout);
    let mut result = KForm::zero(total, m + 1);
    for k in 0..m {
        let mut wk = vol.scale(a0[k]);
        for a in 0..n {
            for i in 0..m {
                let du = KForm::basis(total, &[layout.u(a)]);
                wk = wk.add(&du.wedge(&dm1x(layout, i)).scale(lin_ubar[a][i][k]));
                for j in 0..m {
                    let duj = KForm::basis(total, &[layout.ujet(a, i)]);
                    wk = wk.add(&duj.wedge(&dm1x(layout, j)).scale(lin_usec[a][i][j][k]));
                }
            }
        }
        result = result.add(&KForm::basis(total, &[layout.x(k)]).wedge(&wk).scale(-1.0));
    }

    // Read the contact coefficients back off; anything else is a
    // structural fault of the embedding.
    let xs: Vec<usize> = (0..m).map(|i| layout.x(i)).collect();
    let mut coef_u = vec![0.0; n];
    let mut coef_ujet = block2_zeros(n, m);
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let mut claimed = 0usize;
    for a in 0..n {
        let mut idx = xs.clone();
        idx.push(layout.u(a));
        coef_u[a] = sign * result.coeff(&idx);
        if result.coeff(&idx) != 0.0 {
            claimed += 1;
        }
        for i in 0..m {
            let mut idx = xs.clone();
            idx.push(layout.ujet(a, i));
            coef_ujet[a][i] = sign * result.coeff(&idx);
            if result.coeff(&idx) != 0.0 {
                claimed += 1;
            }
        }
    }
    let stored = result.terms().filter(|(_, c)| *c != 0.0).count();
    assert!(
        stored == claimed,
        "wedge embedding produced terms outside the contact image"
    );
    Ok(FormLambdaJ1 { base: j1omega.to_j1(), coef_u, coef_ujet })
}

// ---------------------------------------------------------------------
// Flat morphism
// ---------------------------------------------------------------------

/// An (m+1)-form of momentum type over an Mπ point:
/// coef_u[α] du^α∧dᵐx + coef_p dp∧dᵐx + coef_pmom[α][i] dp^i_α∧dᵐx.
#[derive(Clone, Debug, PartialEq)]
pub struct FormLambdaMpi {
    pub base: PointMpi,
    pub coef_u: Vec<f64>,
    pub coef_p: f64,
    pub coef_pmom: Block2,
}

impl FormLambdaMpi {
    /// The form as a KForm over the Mπ coordinate tangent space.
    pub fn to_mpi_form(&self) -> KForm {
        let dims = self.base.dims();
        let layout = Layout::new(dims, Space::MPi);
        let total = layout.total();
        let vol = volume_form(layout);
        let mut out = KForm::basis(total, &[layout.p()]).wedge(&vol).scale(self.coef_p);
        for a in 0..dims.n {
            let du = KForm::basis(total, &[layout.u(a)]);
            out = out.add(&du.wedge(&vol).scale(self.coef_u[a]));
            for i in 0..dims.m {
                let dpm = KForm::basis(total, &[layout.pmom(a, i)]);
                out = out.add(&dpm.wedge(&vol).scale(self.coef_pmom[a][i]));
            }
        }
        out
    }

    pub fn max_diff(&self, other: &FormLambdaMpi) -> f64 {
        let mut w = (self.coef_p - other.coef_p).abs();
        w = w.max(max_dev(self.coef_u.iter().copied().zip(other.coef_u.iter().copied())));
        w.max(max_dev(
            self.coef_pmom.iter().flatten().copied().zip(other.coef_pmom.iter().flatten().copied()),
        ))
    }
}

/// Horizontal projector of a multimomentum jet on the Mπ tangent
/// space: dx^j ⊗ (∂_{x^j} + u^α_j ∂_{u^α} + p_j ∂_p + p^i_{αj} ∂_{p^i_α}).
pub fn horizontal_projector(zbar: &PointJ1PiNu) -> DMatrix<f64> {
    let dims = zbar.dims();
    let layout = Layout::new(dims, Space::MPi);
    let total = layout.total();
    let mut h = DMatrix::zeros(total, total);
    for j in 0..dims.m {
        let col = layout.x(j);
        h[(layout.x(j), col)] = 1.0;
        for a in 0..dims.n {
            h[(layout.u(a), col)] = zbar.ujet[a][j];
        }
        h[(layout.p(), col)] = zbar.pjet[j];
        for a in 0..dims.n {
            for i in 0..dims.m {
                h[(layout.pmom(a, i), col)] = zbar.pmomjet[a][i][j];
            }
        }
    }
    h
}

/// Degree-preserving insertion derivation: Σ_t ω(X₁,…,h(X_t),…,X_k),
/// realised by replacing each covector slot with its composition
/// along h.
pub fn insertion_derivation(omega: &KForm, h: &DMatrix<f64>) -> KForm {
    let dim = omega.dim();
    assert_eq!(h.nrows(), dim, "endomorphism must act on the form's space");
    assert_eq!(h.ncols(), dim, "endomorphism must be square");
    let mut out = KForm::zero(dim, omega.degree());
    for (t, c) in omega.terms() {
        if c == 0.0 {
            continue;
        }
        for pos in 0..t.len() {
            let mut row = KForm::zero(dim, 1);
            for s in 0..dim {
                let v = h[(t[pos], s)];
                if v != 0.0 {
                    row.add_term(&[s], v);
                }
            }
            let mut acc = KForm::basis(dim, &t[..pos]).wedge(&row);
            if pos + 1 < t.len() {
                acc = acc.wedge(&KForm::basis(dim, &t[pos + 1..]));
            }
            out = out.add(&acc.scale(c));
        }
    }
    out
}

/// Flat morphism ♭_Ω, closed coordinate form:
/// coef_u[α] = Σ_j p^j_{αj}, coef_p = −1, coef_pmom[α][i] = −u^α_i.
pub fn flat_omega(zbar: &PointJ1PiNu) -> FormLambdaMpi {
    let dims = zbar.dims();
    let coef_u = (0..dims.n)
        .map(|a| (0..dims.m).map(|j| zbar.pmomjet[a][j][j]).sum())
        .collect();
    let coef_pmom = (0..dims.n)
        .map(|a| (0..dims.m).map(|i| -zbar.ujet[a][i]).collect())
        .collect();
    FormLambdaMpi { base: zbar.to_mpi(), coef_u, coef_p: -1.0, coef_pmom }
}

/// Flat morphism through its defining expression
/// i_h Ω − (m−1) Ω, evaluated with the insertion derivation over the
/// horizontal projector. Returns the raw (m+1)-form on the Mπ tangent
/// space; comparing against [`FormLambdaMpi::to_mpi_form`] of the
/// closed formula checks both the coefficients and the absence of
/// stray terms.
pub fn flat_omega_intrinsic(zbar: &PointJ1PiNu) -> KForm {
    let dims = zbar.dims();
    let omega = canonical_omega(dims);
    let h = horizontal_projector(zbar);
    let ih = insertion_derivation(&omega, &h);
    ih.add(&omega.scale(-((dims.m as f64) - 1.0)))
}

// ---------------------------------------------------------------------
// The premultisymplectic form and its kernel
// ---------------------------------------------------------------------

/// Jacobian (constant) of the left morphism J¹(π∘ν) → Λ^{m+1}₂J¹π.
pub fn tulczyjew_a_jacobian(dims: BundleDims) -> DMatrix<f64> {
    let src = Layout::new(dims, Space::J1PiNu);
    let dst = Layout::new(dims, Space::LambdaJ1);
    let mut j = DMatrix::zeros(dst.total(), src.total());
    for i in 0..dims.m {
        j[(dst.x(i), src.x(i))] = 1.0;
    }
    for a in 0..dims.n {
        j[(dst.u(a), src.u(a))] = 1.0;
        for i in 0..dims.m {
            j[(dst.ujet(a, i), src.ujet(a, i))] = 1.0;
            j[(dst.pbar_u(a), src.pmomjet(a, i, i))] = 1.0;
            j[(dst.pbar_ujet(a, i), src.pmom(a, i))] = 1.0;
        }
    }
    j
}

/// Jacobian (constant) of the flat morphism J¹(π∘ν) → Λ^{m+1}₂Mπ.
pub fn flat_omega_jacobian(dims: BundleDims) -> DMatrix<f64> {
    let src = Layout::new(dims, Space::J1PiNu);
    let dst = Layout::new(dims, Space::LambdaMPi);
    let mut j = DMatrix::zeros(dst.total(), src.total());
    for i in 0..dims.m {
        j[(dst.x(i), src.x(i))] = 1.0;
    }
    j[(dst.p(), src.p())] = 1.0;
    for a in 0..dims.n {
        j[(dst.u(a), src.u(a))] = 1.0;
        for i in 0..dims.m {
            j[(dst.pmom(a, i), src.pmom(a, i))] = 1.0;
            j[(dst.pbar_u(a), src.pmomjet(a, i, i))] = 1.0;
            j[(dst.pbar_pmom(a, i), src.ujet(a, i))] = -1.0;
        }
    }
    // The p̄ component is the constant −1; its row stays zero.
    j
}

fn build_omega_tilde(dims: BundleDims) -> KForm {
    let layout = Layout::new(dims, Space::J1PiNu);
    let total = layout.total();
    let vol = volume_form(layout);
    let mut om = KForm::zero(total, dims.m + 2);
    for a in 0..dims.n {
        for i in 0..dims.m {
            let dtr = KForm::basis(total, &[layout.pmomjet(a, i, i)]);
            let du = KForm::basis(total, &[layout.u(a)]);
            om = om.add(&dtr.wedge(&du).wedge(&vol).scale(-1.0));
            let dpm = KForm::basis(total, &[layout.pmom(a, i)]);
            let duj = KForm::basis(total, &[layout.ujet(a, i)]);
            om = om.add(&dpm.wedge(&duj).wedge(&vol).scale(-1.0));
        }
    }
    om
}

static OMEGA_TILDE_CACHE: OnceLock<Mutex<HashMap<BundleDims, KForm>>> = OnceLock::new();

/// Premultisymplectic (m+2)-form on J¹(π∘ν),
/// Ω̃ = −dp^i_{αi}∧du^α∧dᵐx − dp^i_α∧du^α_i∧dᵐx. Constant in these
/// coordinates, so it is cached per dimension pair.
pub fn omega_tilde(dims: BundleDims) -> KForm {
    let cache = OMEGA_TILDE_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("omega-tilde cache poisoned");
    map.entry(dims).or_insert_with(|| build_omega_tilde(dims)).clone()
}

/// Kernel of ♭_{Ω̃} as an orthonormal basis.
pub fn omega_tilde_kernel(dims: BundleDims) -> Vec<DVector<f64>> {
    flat_kernel(&omega_tilde(dims))
}

/// Closed-form kernel dimension 1 + m + n(m² − 1).
pub fn omega_tilde_kernel_dim(dims: BundleDims) -> usize {
    1 + dims.m + dims.n * (dims.m * dims.m - 1)
}

/// The generator list of ker ♭_{Ω̃}: ∂_p, the ∂_{p_j}, and the traceless
/// combinations ∂_{p^i_{αj}} − δ^i_j ∂_{p^1_{α1}} for (i, j) ≠ (1, 1).
pub fn omega_tilde_kernel_generators(dims: BundleDims) -> Vec<DVector<f64>> {
    let layout = Layout::new(dims, Space::J1PiNu);
    let total = layout.total();
    let unit = |idx: usize| {
        let mut v = DVector::zeros(total);
        v[idx] = 1.0;
        v
    };
    let mut gens = vec![unit(layout.p())];
    for j in 0..dims.m {
        gens.push(unit(layout.pjet(j)));
    }
    for a in 0..dims.n {
        for i in 0..dims.m {
            for j in 0..dims.m {
                if i == 0 && j == 0 {
                    continue;
                }
                let mut v = unit(layout.pmomjet(a, i, j));
                if i == j {
                    v[layout.pmomjet(a, 0, 0)] = -1.0;
                }
                gens.push(v);
            }
        }
    }
    gens
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::{span_contained, span_rank};
    use crate::fields::Expr;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn const_conn(m: usize, vals: Block3, symmetric: bool) -> Connection {
        Connection::from_exprs(m, symmetric, |k, i, j| Expr::num(vals[k][i][j]))
    }

    fn rng_conn(rng: &mut StdRng, m: usize, symmetric: bool) -> Connection {
        let mut vals = block3_zeros(m, m);
        for k in 0..m {
            for i in 0..m {
                for j in 0..m {
                    vals[k][i][j] = rng.gen_range(-1.0..1.0);
                }
            }
        }
        if symmetric {
            for k in 0..m {
                for i in 0..m {
                    for j in 0..i {
                        vals[k][i][j] = vals[k][j][i];
                    }
                }
            }
        }
        const_conn(m, vals, symmetric)
    }

    fn rng_point_j1pi1(rng: &mut StdRng, m: usize, n: usize) -> PointJ1Pi1 {
        PointJ1Pi1 {
            x: (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            u: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            ujet: (0..n).map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
            ubar: (0..n).map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
            usec: (0..n)
                .map(|_| {
                    (0..m)
                        .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
                        .collect()
                })
                .collect(),
        }
    }

    fn rng_point_j1pinu(rng: &mut StdRng, m: usize, n: usize) -> PointJ1PiNu {
        PointJ1PiNu {
            x: (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            u: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            p: rng.gen_range(-1.0..1.0),
            pmom: (0..n).map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
            ujet: (0..n).map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
            pjet: (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            pmomjet: (0..n)
                .map(|_| {
                    (0..m)
                        .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
                        .collect()
                })
                .collect(),
        }
    }

    fn point_diff(a: &PointJ1Pi1, b: &PointJ1Pi1) -> f64 {
        let mut w = max_dev(a.x.iter().copied().zip(b.x.iter().copied()));
        w = w.max(max_dev(a.u.iter().copied().zip(b.u.iter().copied())));
        w = w.max(max_dev(a.ujet.iter().flatten().copied().zip(b.ujet.iter().flatten().copied())));
        w = w.max(max_dev(a.ubar.iter().flatten().copied().zip(b.ubar.iter().flatten().copied())));
        w.max(max_dev(
            a.usec
                .iter()
                .flatten()
                .flatten()
                .copied()
                .zip(b.usec.iter().flatten().flatten().copied()),
        ))
    }

    #[test]
    fn exchange_transposes_second_jets_when_flat() {
        let z = PointJ1Pi1 {
            x: vec![0.0, 0.0],
            u: vec![0.0],
            ujet: vec![vec![1.0, 2.0]],
            ubar: vec![vec![3.0, 4.0]],
            usec: vec![vec![vec![5.0, 6.0], vec![7.0, 8.0]]],
        };
        let out = exchange(&Connection::zero(2), &z).unwrap();
        assert_eq!(out.ujet, vec![vec![3.0, 4.0]]);
        assert_eq!(out.ubar, vec![vec![1.0, 2.0]]);
        assert_eq!(out.usec, vec![vec![vec![5.0, 7.0], vec![6.0, 8.0]]]);
    }

    #[test]
    fn exchange_adds_christoffel_correction() {
        // m = n = 1, Γ¹₁₁ = 1: usec' = 5 + (3 − 1)·1 = 7.
        let conn = const_conn(1, vec![vec![vec![1.0]]], true);
        let z = PointJ1Pi1 {
            x: vec![0.0],
            u: vec![0.0],
            ujet: vec![vec![1.0]],
            ubar: vec![vec![3.0]],
            usec: vec![vec![vec![5.0]]],
        };
        let out = exchange(&conn, &z).unwrap();
        assert_eq!(out.usec[0][0][0], 7.0);
        // Symmetric, so twice is the identity.
        assert_eq!(point_diff(&exchange(&conn, &out).unwrap(), &z), 0.0);
    }

    #[test]
    fn torsionful_exchange_inverts_through_add_torsion() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let conn = rng_conn(&mut rng, 2, false);
            let z = rng_point_j1pi1(&mut rng, 2, 2);
            let once = exchange(&conn, &z).unwrap();
            let back = exchange(&conn.add_torsion(), &once).unwrap();
            assert!(point_diff(&back, &z) <= 1e-12);
            // The involution itself must fail for torsionful Γ.
            let twice = exchange(&conn, &once).unwrap();
            assert!(point_diff(&twice, &z) > 1e-3);
        }
    }

    proptest! {
        #[test]
        fn exchange_involutive_for_symmetric_connections(seed in 0u64..1000) {
            let mut rng = StdRng::seed_from_u64(seed);
            let conn = rng_conn(&mut rng, 2, true);
            let z = rng_point_j1pi1(&mut rng, 2, 2);
            let twice = exchange(&conn, &exchange(&conn, &z).unwrap()).unwrap();
            prop_assert!(point_diff(&twice, &z) <= 1e-12);
        }

        #[test]
        fn exchange_swaps_the_two_fibrations(seed in 0u64..1000) {
            let mut rng = StdRng::seed_from_u64(seed);
            let conn = rng_conn(&mut rng, 2, false);
            let z = rng_point_j1pi1(&mut rng, 2, 1);
            let out = exchange(&conn, &z).unwrap();
            prop_assert_eq!(out.to_j1().ujet, z.ubar.clone());
            prop_assert_eq!(out.ubar, z.ujet.clone());
        }
    }

    #[test]
    fn pairing_contracts_momenta_with_jets() {
        let omega = PointMpi {
            x: vec![0.1, 0.2],
            u: vec![0.5],
            p: 1.0,
            pmom: vec![vec![2.0, 3.0]],
        };
        let z = PointJ1 { x: vec![0.1, 0.2], u: vec![0.5], ujet: vec![vec![4.0, 5.0]] };
        assert_eq!(pairing(&omega, &z).unwrap(), 24.0);
        let rest = PointJ1 { ujet: vec![vec![0.0, 0.0]], ..z.clone() };
        assert_eq!(pairing(&omega, &rest).unwrap(), 1.0);
        let off = PointJ1 { x: vec![0.1, 0.3], ..z };
        assert!(matches!(pairing(&omega, &off), Err(TripleError::BaseMismatch { .. })));
    }

    fn fixture_omega_sigma(
        p1: f64,
        pmomjet: f64,
        ubar: f64,
        pmom: f64,
        usec: f64,
        ujet: f64,
        p: f64,
    ) -> (PointJ1PiNu, PointJ1Pi1) {
        let omega = PointJ1PiNu {
            x: vec![0.0],
            u: vec![0.0],
            p,
            pmom: vec![vec![pmom]],
            ujet: vec![vec![ujet]],
            pjet: vec![p1],
            pmomjet: vec![vec![vec![pmomjet]]],
        };
        let sigma = PointJ1Pi1 {
            x: vec![0.0],
            u: vec![0.0],
            ujet: vec![vec![ujet]],
            ubar: vec![vec![ubar]],
            usec: vec![vec![vec![usec]]],
        };
        (omega, sigma)
    }

    #[test]
    fn core_map_covector_components() {
        // Flat connection: a₁ = p₁ + p¹₁·ū + p¹·u₁₁ = 1 + 6 + 20 = 27.
        let (omega, sigma) = fixture_omega_sigma(1.0, 2.0, 3.0, 4.0, 5.0, 3.0, 2.0);
        let a = core_map(&Connection::zero(1), &omega, &sigma).unwrap();
        assert_eq!(a, vec![27.0]);
        // Γ¹₁₁ = c and ū = ujet: subtract (p + p¹ū)·c.
        let c = 0.3;
        let conn = const_conn(1, vec![vec![vec![c]]], true);
        let a = core_map(&conn, &omega, &sigma).unwrap();
        assert_abs_diff_eq!(a[0], 27.0 - (2.0 + 12.0) * c, epsilon = 1e-14);
        // Zero second-level jets: only p_k survives with Γ = 0.
        let (omega, sigma) = fixture_omega_sigma(1.5, 0.0, 0.0, 0.0, 0.0, 0.7, 2.0);
        let a = core_map(&Connection::zero(1), &omega, &sigma).unwrap();
        assert_eq!(a, vec![1.5]);
    }

    #[test]
    fn core_map_requires_matching_jets() {
        let (omega, mut sigma) = fixture_omega_sigma(1.0, 2.0, 3.0, 4.0, 5.0, 3.0, 2.0);
        sigma.ujet[0][0] += 1.0;
        assert!(matches!(
            core_map(&Connection::zero(1), &omega, &sigma),
            Err(TripleError::BaseMismatch { .. })
        ));
    }

    #[test]
    fn a_tilde_fixture_and_delta_structure() {
        // m=2, n=1, Γ¹₁₁ = 1, p=2, pmom=[[3,4]], ujet=[[5,6]]:
        // p̄₁ = p₁ − 3·5 − 2 = p₁ − 17.
        let mut vals = block3_zeros(2, 2);
        vals[0][0][0] = 1.0;
        let conn = const_conn(2, vals, true);
        let omega = PointJ1PiNu {
            x: vec![0.0, 0.0],
            u: vec![0.0],
            p: 2.0,
            pmom: vec![vec![3.0, 4.0]],
            ujet: vec![vec![5.0, 6.0]],
            pjet: vec![10.0, 20.0],
            pmomjet: vec![vec![vec![0.5, 0.6], vec![0.7, 0.8]]],
        };
        let at = a_tilde(&conn, &omega).unwrap();
        assert_abs_diff_eq!(at.pbar[0], 10.0 - 17.0, epsilon = 1e-14);
        for a in 0..1 {
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        if i != k {
                            assert_eq!(at.pbar_jet[a][i][j][k], 0.0);
                        } else {
                            assert_eq!(at.pbar_jet[a][i][j][k], omega.pmom[a][j]);
                        }
                    }
                }
            }
        }
        // Flat connection passes everything through.
        let at0 = a_tilde(&Connection::zero(2), &omega).unwrap();
        assert_eq!(at0.pbar, omega.pjet);
        for i in 0..2 {
            for k in 0..2 {
                assert_eq!(at0.pbar_mom[0][i][k], omega.pmomjet[0][i][k]);
            }
        }
    }

    #[test]
    fn a_tilde_agrees_with_core_map_on_any_jet() {
        let mut rng = StdRng::seed_from_u64(11);
        for sym in [true, false] {
            for _ in 0..10 {
                let conn = rng_conn(&mut rng, 2, sym);
                let omega = rng_point_j1pinu(&mut rng, 2, 2);
                let at = a_tilde(&conn, &omega).unwrap();
                for _ in 0..2 {
                    let mut sigma = rng_point_j1pi1(&mut rng, 2, 2);
                    sigma.x = omega.x.clone();
                    sigma.u = omega.u.clone();
                    sigma.ujet = omega.ujet.clone();
                    let direct = core_map(&conn, &omega, &sigma).unwrap();
                    let through = at.apply(&sigma);
                    for k in 0..2 {
                        assert_abs_diff_eq!(direct[k], through[k], epsilon = 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn left_morphism_traces_momentum_jets() {
        let omega = PointJ1PiNu {
            x: vec![0.0, 0.0],
            u: vec![0.0],
            p: 0.0,
            pmom: vec![vec![2.0, 3.0]],
            ujet: vec![vec![0.0, 0.0]],
            pjet: vec![0.0, 0.0],
            pmomjet: vec![vec![vec![1.0, 9.0], vec![9.0, 4.0]]],
        };
        let a = tulczyjew_a(&omega);
        assert_eq!(a.coef_u, vec![5.0]);
        assert_eq!(a.coef_ujet, vec![vec![2.0, 3.0]]);
        let zero = PointJ1PiNu {
            pmom: vec![vec![0.0, 0.0]],
            pmomjet: vec![vec![vec![0.0, 0.0], vec![0.0, 0.0]]],
            ..omega
        };
        let a0 = tulczyjew_a(&zero);
        assert!(a0.coef_u.iter().all(|c| *c == 0.0));
        assert!(a0.coef_ujet.iter().flatten().all(|c| *c == 0.0));
    }

    #[test]
    fn pipeline_matches_closed_formula_for_any_symmetric_connection() {
        let mut rng = StdRng::seed_from_u64(23);
        for (m, n) in [(1, 1), (2, 1), (2, 2), (3, 2)] {
            for _ in 0..6 {
                let omega = rng_point_j1pinu(&mut rng, m, n);
                let direct = tulczyjew_a(&omega);
                for _ in 0..2 {
                    let conn = rng_conn(&mut rng, m, true);
                    let piped = tulczyjew_a_pipeline(&conn, &omega).unwrap();
                    assert!(piped.max_diff(&direct) <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn pipeline_rejects_torsionful_connections() {
        let mut rng = StdRng::seed_from_u64(29);
        let conn = rng_conn(&mut rng, 2, false);
        let omega = rng_point_j1pinu(&mut rng, 2, 1);
        assert!(matches!(
            tulczyjew_a_pipeline(&conn, &omega),
            Err(TripleError::NonSymmetricConnection)
        ));
    }

    #[test]
    fn horizontal_projector_is_a_rank_m_projector() {
        let mut rng = StdRng::seed_from_u64(31);
        let zbar = rng_point_j1pinu(&mut rng, 2, 2);
        let h = horizontal_projector(&zbar);
        let diff = (&h * &h) - &h;
        assert!(diff.amax() <= 1e-14);
        assert_eq!(h.rank(1e-10), 2);
        // Column for ∂/∂x¹ carries the jet entries.
        let layout = Layout::new(zbar.dims(), Space::MPi);
        assert_eq!(h[(layout.u(0), layout.x(0))], zbar.ujet[0][0]);
        assert_eq!(h[(layout.p(), layout.x(0))], zbar.pjet[0]);
        assert_eq!(h[(layout.pmom(1, 1), layout.x(0))], zbar.pmomjet[1][1][0]);
        // Zero jets: the projector restricts to the x-coordinate plane.
        let flat = PointJ1PiNu {
            ujet: block2_zeros(2, 2),
            pjet: vec![0.0, 0.0],
            pmomjet: block3_zeros(2, 2),
            ..zbar
        };
        let h0 = horizontal_projector(&flat);
        for j in 0..2 {
            for r in 0..layout.total() {
                let expect = if r == layout.x(j) { 1.0 } else { 0.0 };
                assert_eq!(h0[(r, layout.x(j))], expect);
            }
        }
    }

    #[test]
    fn flat_morphism_coordinate_fixture() {
        let zbar = PointJ1PiNu {
            x: vec![0.0, 0.0],
            u: vec![0.0],
            p: 0.4,
            pmom: vec![vec![0.1, 0.2]],
            ujet: vec![vec![7.0, 8.0]],
            pjet: vec![0.0, 0.0],
            pmomjet: vec![vec![vec![1.0, 9.0], vec![9.0, 4.0]]],
        };
        let f = flat_omega(&zbar);
        assert_eq!(f.coef_u, vec![5.0]);
        assert_eq!(f.coef_p, -1.0);
        assert_eq!(f.coef_pmom, vec![vec![-7.0, -8.0]]);
        let still = PointJ1PiNu {
            ujet: vec![vec![0.0, 0.0]],
            pmomjet: vec![vec![vec![0.0, 0.0], vec![0.0, 0.0]]],
            ..zbar
        };
        let f0 = flat_omega(&still);
        assert_eq!(f0.coef_u, vec![0.0]);
        assert_eq!(f0.coef_p, -1.0);
        assert_eq!(f0.coef_pmom, vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn flat_morphism_intrinsic_route_agrees() {
        let mut rng = StdRng::seed_from_u64(37);
        for (m, n) in [(1, 1), (2, 1), (2, 2)] {
            for _ in 0..10 {
                let zbar = rng_point_j1pinu(&mut rng, m, n);
                let coord = flat_omega(&zbar).to_mpi_form();
                let intrinsic = flat_omega_intrinsic(&zbar);
                assert!(coord.max_coeff_diff(&intrinsic) <= 1e-10);
            }
        }
    }

    #[test]
    fn omega_tilde_coefficients_and_degeneracies() {
        let dims = BundleDims::new(2, 1);
        let om = omega_tilde(dims);
        let layout = Layout::new(dims, Space::J1PiNu);
        let total = layout.total();
        let unit = |idx: usize| {
            let mut v = vec![0.0; total];
            v[idx] = 1.0;
            v
        };
        // Ω̃(∂p¹₁_{,1}, ∂u¹, ∂x¹, ∂x²) = −1 per the ordering contract.
        let args = [
            unit(layout.pmomjet(0, 0, 0)),
            unit(layout.u(0)),
            unit(layout.x(0)),
            unit(layout.x(1)),
        ];
        let slices: Vec<&[f64]> = args.iter().map(|v| v.as_slice()).collect();
        assert_eq!(om.eval(&slices), -1.0);
        // p does not appear.
        assert!(om.interior(&unit(layout.p())).norm_inf() == 0.0);
        // ∂/∂x¹ is not in the kernel.
        assert!(om.interior(&unit(layout.x(0))).norm_inf() > 0.0);
    }

    #[test]
    fn omega_tilde_is_both_pullbacks() {
        use crate::geometry::{canonical_omega_lambda_j1, canonical_omega_lambda_mpi};
        for (m, n) in [(1, 1), (2, 1), (2, 2)] {
            let dims = BundleDims::new(m, n);
            let om = omega_tilde(dims);
            let via_a = canonical_omega_lambda_j1(dims).pullback(&tulczyjew_a_jacobian(dims));
            assert!(om.max_coeff_diff(&via_a) <= 1e-12);
            let via_flat = canonical_omega_lambda_mpi(dims).pullback(&flat_omega_jacobian(dims));
            assert!(om.max_coeff_diff(&via_flat) <= 1e-12);
        }
    }

    #[test]
    fn kernel_dimension_and_generators() {
        for (m, n) in [(1, 1), (2, 1), (2, 2), (3, 1), (3, 2)] {
            let dims = BundleDims::new(m, n);
            let kernel = omega_tilde_kernel(dims);
            let expected = omega_tilde_kernel_dim(dims);
            assert_eq!(kernel.len(), expected, "kernel dim at m={m}, n={n}");
            let gens = omega_tilde_kernel_generators(dims);
            assert_eq!(gens.len(), expected);
            let total = Layout::new(dims, Space::J1PiNu).total();
            assert_eq!(span_rank(&gens, total), expected);
            assert!(span_contained(&gens, &kernel, total));
            assert!(span_contained(&kernel, &gens, total));
        }
    }

    #[test]
    fn morphisms_are_fibrewise_surjective() {
        // The fibre-block rows of both Jacobians have full row rank.
        for (m, n) in [(1, 1), (2, 1), (2, 2)] {
            let dims = BundleDims::new(m, n);
            let ja = tulczyjew_a_jacobian(dims);
            let dst = Layout::new(dims, Space::LambdaJ1);
            let fiber_rows = dst.total() - (m + n + n * m);
            let block = ja.rows(m + n + n * m, fiber_rows);
            assert_eq!(block.rank(1e-10), fiber_rows);
            let jf = flat_omega_jacobian(dims);
            let dstf = Layout::new(dims, Space::LambdaMPi);
            // Skip the constant p̄ row: its image coordinate is pinned
            // to −1, not spanned linearly.
            let base = m + n + 1 + n * m;
            let mut rows: Vec<usize> = vec![];
            for a in 0..n {
                rows.push(dstf.pbar_u(a));
            }
            for a in 0..n {
                for i in 0..m {
                    rows.push(dstf.pbar_pmom(a, i));
                }
            }
            let sel = jf.select_rows(rows.iter());
            assert_eq!(sel.rank(1e-10), rows.len());
            let _ = base;
        }
    }
}
