//! Sparse exterior algebra on a coordinate tangent space ℝᴺ.
//!
//! A [`KForm`] stores coefficients over strictly increasing index
//! tuples. Degree 0 forms (scalars) are admitted so contractions like
//! d⁰x_i in base dimension one stay inside the type. Linear-algebra
//! questions (kernels, orthogonals, subspace comparisons) go through
//! SVD with a relative rank threshold.
//!
//! Shape violations (mismatched ambient dimensions, an interior
//! product of a 0-form, out-of-range indices) are programmer errors
//! and panic; they are not recoverable data conditions.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

/// Relative singular-value threshold for every rank decision.
pub const RANK_TOL: f64 = 1e-8;

/// An alternating k-linear form on ℝᴺ in sparse coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct KForm {
    dim: usize,
    degree: usize,
    terms: BTreeMap<Vec<usize>, f64>,
}

/// Sorts `indices` ascending, returning the permutation sign, or `None`
/// when an index repeats (the wedge vanishes).
fn sort_with_sign(indices: &[usize]) -> Option<(Vec<usize>, f64)> {
    let mut v = indices.to_vec();
    let mut sign = 1.0;
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    Some((v, sign))
}

impl KForm {
    /// The zero k-form on ℝᴺ.
    pub fn zero(dim: usize, degree: usize) -> KForm {
        KForm { dim, degree, terms: BTreeMap::new() }
    }

    /// The scalar 1 as a 0-form.
    pub fn one(dim: usize) -> KForm {
        let mut terms = BTreeMap::new();
        terms.insert(Vec::new(), 1.0);
        KForm { dim, degree: 0, terms }
    }

    /// dx^{i₁}∧…∧dx^{i_k} for the given (not necessarily sorted)
    /// distinct indices; a repeated index yields the zero form.
    pub fn basis(dim: usize, indices: &[usize]) -> KForm {
        assert!(indices.iter().all(|&i| i < dim), "basis index out of range for dim {dim}");
        let mut form = KForm::zero(dim, indices.len());
        if let Some((sorted, sign)) = sort_with_sign(indices) {
            form.terms.insert(sorted, sign);
        }
        form
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|c| *c == 0.0)
    }

    /// Coefficient on an arbitrary distinct index tuple, adjusted by
    /// the sorting sign; zero for tuples not stored.
    pub fn coeff(&self, indices: &[usize]) -> f64 {
        assert_eq!(indices.len(), self.degree, "coeff tuple has wrong length");
        match sort_with_sign(indices) {
            None => 0.0,
            Some((sorted, sign)) => sign * self.terms.get(&sorted).copied().unwrap_or(0.0),
        }
    }

    /// Adds `c` to the coefficient of the (distinct-index) tuple.
    pub fn add_term(&mut self, indices: &[usize], c: f64) {
        assert_eq!(indices.len(), self.degree, "term tuple has wrong length");
        assert!(indices.iter().all(|&i| i < self.dim), "term index out of range");
        if let Some((sorted, sign)) = sort_with_sign(indices) {
            *self.terms.entry(sorted).or_insert(0.0) += sign * c;
        }
    }

    /// Sorted iteration over stored (tuple, coefficient) pairs.
    pub fn terms(&self) -> impl Iterator<Item = (&[usize], f64)> {
        self.terms.iter().map(|(t, c)| (t.as_slice(), *c))
    }

    pub fn scale(&self, s: f64) -> KForm {
        KForm {
            dim: self.dim,
            degree: self.degree,
            terms: self.terms.iter().map(|(t, c)| (t.clone(), c * s)).collect(),
        }
    }

    pub fn add(&self, rhs: &KForm) -> KForm {
        assert_eq!(self.dim, rhs.dim, "ambient dimension mismatch");
        assert_eq!(self.degree, rhs.degree, "degree mismatch in addition");
        let mut terms = self.terms.clone();
        for (t, c) in &rhs.terms {
            *terms.entry(t.clone()).or_insert(0.0) += c;
        }
        KForm { dim: self.dim, degree: self.degree, terms }
    }

    pub fn sub(&self, rhs: &KForm) -> KForm {
        self.add(&rhs.scale(-1.0))
    }

    /// Wedge product; degrees add.
    pub fn wedge(&self, rhs: &KForm) -> KForm {
        assert_eq!(self.dim, rhs.dim, "ambient dimension mismatch");
        let mut out = KForm::zero(self.dim, self.degree + rhs.degree);
        let mut scratch = Vec::with_capacity(out.degree);
        for (ta, ca) in &self.terms {
            if *ca == 0.0 {
                continue;
            }
            for (tb, cb) in &rhs.terms {
                if *cb == 0.0 {
                    continue;
                }
                scratch.clear();
                scratch.extend_from_slice(ta);
                scratch.extend_from_slice(tb);
                if let Some((sorted, sign)) = sort_with_sign(&scratch) {
                    *out.terms.entry(sorted).or_insert(0.0) += sign * ca * cb;
                }
            }
        }
        out
    }

    /// Interior product i_v ω.
    ///
    /// Panics on a 0-form: there is no slot to contract.
    pub fn interior(&self, v: &[f64]) -> KForm {
        assert!(self.degree > 0, "interior product of a 0-form");
        assert_eq!(v.len(), self.dim, "vector length mismatch");
        let mut out = KForm::zero(self.dim, self.degree - 1);
        for (t, c) in &self.terms {
            if *c == 0.0 {
                continue;
            }
            for (pos, &idx) in t.iter().enumerate() {
                let vi = v[idx];
                if vi == 0.0 {
                    continue;
                }
                let mut rest = t.clone();
                rest.remove(pos);
                let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
                *out.terms.entry(rest).or_insert(0.0) += sign * c * vi;
            }
        }
        out
    }

    /// Evaluates the form on `degree` vectors.
    pub fn eval(&self, vectors: &[&[f64]]) -> f64 {
        assert_eq!(vectors.len(), self.degree, "wrong number of vectors");
        for v in vectors {
            assert_eq!(v.len(), self.dim, "vector length mismatch");
        }
        if self.degree == 0 {
            return self.terms.get(&Vec::new()).copied().unwrap_or(0.0);
        }
        let k = self.degree;
        let mut acc = 0.0;
        let mut minor = DMatrix::zeros(k, k);
        for (t, c) in &self.terms {
            if *c == 0.0 {
                continue;
            }
            for (a, &ti) in t.iter().enumerate() {
                for (b, v) in vectors.iter().enumerate() {
                    minor[(a, b)] = v[ti];
                }
            }
            acc += c * minor.clone().determinant();
        }
        acc
    }

    /// Pullback along a linear map with matrix `jac` (rows indexed by
    /// this form's ambient space, columns by the source space):
    /// (f*ω)(v₁,…,v_k) = ω(J v₁,…,J v_k).
    pub fn pullback(&self, jac: &DMatrix<f64>) -> KForm {
        assert_eq!(jac.nrows(), self.dim, "jacobian rows must match ambient dimension");
        let source_dim = jac.ncols();
        let mut out = KForm::zero(source_dim, self.degree);
        for (t, c) in &self.terms {
            if *c == 0.0 {
                continue;
            }
            // dx^{t₁}∧…∧dx^{t_k} pulls back to the wedge of the rows.
            let mut acc = KForm::one(source_dim);
            for &ti in t {
                let mut row = KForm::zero(source_dim, 1);
                for s in 0..source_dim {
                    let v = jac[(ti, s)];
                    if v != 0.0 {
                        row.terms.insert(vec![s], v);
                    }
                }
                acc = acc.wedge(&row);
                if acc.is_zero() {
                    break;
                }
            }
            out = out.add(&acc.scale(*c));
        }
        out
    }

    /// Largest absolute coefficient.
    pub fn norm_inf(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Largest absolute coefficient difference against `rhs`.
    pub fn max_coeff_diff(&self, rhs: &KForm) -> f64 {
        assert_eq!(self.dim, rhs.dim, "ambient dimension mismatch");
        assert_eq!(self.degree, rhs.degree, "degree mismatch");
        let mut worst = 0.0f64;
        for (t, c) in &self.terms {
            worst = worst.max((c - rhs.terms.get(t).copied().unwrap_or(0.0)).abs());
        }
        for (t, c) in &rhs.terms {
            if !self.terms.contains_key(t) {
                worst = worst.max(c.abs());
            }
        }
        worst
    }
}

/// Orthonormal basis of {v : i_v ω = 0}, the kernel of the flat map.
pub fn flat_kernel(omega: &KForm) -> Vec<DVector<f64>> {
    let n = omega.dim();
    assert!(omega.degree() > 0, "flat map needs degree at least 1");
    // Row space: (degree−1)-tuples reachable by dropping one index from
    // a stored tuple. A[row, s] collects the signed coefficients of
    // i_{e_s} ω.
    let mut row_of: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for (t, c) in omega.terms() {
        if c == 0.0 {
            continue;
        }
        for pos in 0..t.len() {
            let mut rest = t.to_vec();
            let s = rest.remove(pos);
            let next = row_of.len();
            let row = *row_of.entry(rest).or_insert(next);
            let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
            entries.push((row, s, sign * c));
        }
    }
    let rows = row_of.len().max(n);
    let mut a = DMatrix::zeros(rows, n);
    for (r, s, v) in entries {
        a[(r, s)] += v;
    }
    nullspace(&a)
}

/// Orthonormal basis of the nullspace of `a`, using singular values
/// below [`RANK_TOL`] relative to the largest.
pub fn nullspace(a: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let n = a.ncols();
    // Pad to at least square so the full right factor is computed.
    let worked = if a.nrows() < n {
        let mut padded = DMatrix::zeros(n, n);
        padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        padded
    } else {
        a.clone()
    };
    let svd = worked.svd(false, true);
    let v_t = svd.v_t.expect("svd requested v_t");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = RANK_TOL * sigma_max;
    let mut kernel = Vec::new();
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s <= tol {
            kernel.push(v_t.row(i).transpose());
        }
    }
    kernel
}

/// Rank of the span of `vectors` under the shared threshold.
pub fn span_rank(vectors: &[DVector<f64>], dim: usize) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    let a = DMatrix::from_columns(vectors);
    debug_assert_eq!(a.nrows(), dim);
    let svd = a.svd(false, false);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    svd.singular_values.iter().filter(|s| **s > RANK_TOL * sigma_max && **s > 0.0).count()
}

/// Whether span(`a`) ⊆ span(`b`), decided by rank stability.
pub fn span_contained(a: &[DVector<f64>], b: &[DVector<f64>], dim: usize) -> bool {
    if a.is_empty() {
        return true;
    }
    let rb = span_rank(b, dim);
    let mut joint = b.to_vec();
    joint.extend(a.iter().cloned());
    span_rank(&joint, dim) == rb
}

/// dim(span a ∩ span b) via dim A + dim B − dim(A+B).
pub fn span_intersection_dim(a: &[DVector<f64>], b: &[DVector<f64>], dim: usize) -> usize {
    let ra = span_rank(a, dim);
    let rb = span_rank(b, dim);
    let mut joint = a.to_vec();
    joint.extend(b.iter().cloned());
    ra + rb - span_rank(&joint, dim)
}

/// The l-orthogonal complement W^{⊥,l} = {v : i_{v∧w₁∧…∧w_l} ω = 0 for
/// all wᵢ ∈ W}. `l` must satisfy 1 ≤ l ≤ degree − 1.
pub fn l_orthogonal(omega: &KForm, w: &[DVector<f64>], l: usize) -> Vec<DVector<f64>> {
    let n = omega.dim();
    let deg = omega.degree();
    assert!(l >= 1 && l < deg, "l = {l} out of range for a degree-{deg} form");
    let free = deg - l - 1;
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let basis: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            e
        })
        .collect();
    for combo in (0..w.len()).combinations(l) {
        for tail in (0..n).combinations(free) {
            let mut row = DVector::zeros(n);
            for s in 0..n {
                let mut vectors: Vec<&[f64]> = Vec::with_capacity(deg);
                vectors.push(basis[s].as_slice());
                for &c in &combo {
                    vectors.push(w[c].as_slice());
                }
                for &t in &tail {
                    vectors.push(basis[t].as_slice());
                }
                row[s] = omega.eval(&vectors);
            }
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return basis;
    }
    let a = DMatrix::from_rows(&rows.iter().map(|r| r.transpose()).collect::<Vec<_>>());
    nullspace(&a)
}

/// A premultisymplectic quotient: the kernel of ♭_ω, a deterministic
/// completion to a full basis, and ω pushed to the quotient.
pub struct Quotient {
    pub kernel: Vec<DVector<f64>>,
    /// Completion vectors; their classes form the quotient basis.
    pub completion: Vec<DVector<f64>>,
    /// ω expressed on the quotient basis.
    pub reduced: KForm,
    basis_inv: DMatrix<f64>,
}

impl Quotient {
    /// Builds the quotient of ℝᴺ by ker ♭_ω. The kernel basis is
    /// completed with coordinate directions, lowest index first.
    pub fn new(omega: &KForm) -> Quotient {
        let n = omega.dim();
        let kernel = flat_kernel(omega);
        let mut cols: Vec<DVector<f64>> = kernel.clone();
        let mut completion = Vec::new();
        // Gram-Schmidt acceptance test against the growing basis.
        let mut ortho: Vec<DVector<f64>> = kernel.to_vec();
        for i in 0..n {
            if cols.len() == n {
                break;
            }
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            let mut r = e.clone();
            for q in &ortho {
                let c = q.dot(&r);
                r -= q * c;
            }
            if r.norm() > 1e-10 {
                ortho.push(r.normalize());
                completion.push(e.clone());
                cols.push(e);
            }
        }
        assert_eq!(cols.len(), n, "kernel completion failed to reach full dimension");
        let basis = DMatrix::from_columns(&cols);
        let basis_inv = basis.clone().try_inverse().expect("completed basis is invertible");
        let jac = DMatrix::from_columns(&completion);
        let reduced = omega.pullback(&jac);
        Quotient { kernel, completion, reduced, basis_inv }
    }

    /// Quotient coordinates of an ambient vector (the completion-block
    /// coefficients of its basis expansion).
    pub fn push(&self, v: &DVector<f64>) -> DVector<f64> {
        let coords = &self.basis_inv * v;
        let k = self.kernel.len();
        coords.rows(k, coords.len() - k).into_owned()
    }
}

/// Isotropy classification of a subspace against a form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Classification {
    pub l: usize,
    pub isotropic: bool,
    pub coisotropic: bool,
    pub lagrangian: bool,
    /// Whether the (possibly quotiented) form has trivial ♭-kernel.
    pub multisymplectic: bool,
    pub w_dim: usize,
    pub orthogonal_dim: usize,
    /// Kernel dimension removed by the quotient (0 when not quotienting).
    pub kernel_dim: usize,
}

/// Classifies span(`w`) as l-isotropic / l-coisotropic / l-Lagrangian
/// for ω. With `premultisymplectic` set, ω is first pushed to the
/// quotient by ker ♭_ω and `w` is pushed along.
pub fn classify(omega: &KForm, w: &[DVector<f64>], l: usize, premultisymplectic: bool) -> Classification {
    let (form, vectors, kernel_dim, dim) = if premultisymplectic {
        let q = Quotient::new(omega);
        let pushed: Vec<DVector<f64>> = w.iter().map(|v| q.push(v)).collect();
        let kdim = q.kernel.len();
        let d = q.reduced.dim();
        (q.reduced, pushed, kdim, d)
    } else {
        (omega.clone(), w.to_vec(), 0, omega.dim())
    };
    let perp = l_orthogonal(&form, &vectors, l);
    let isotropic = span_contained(&vectors, &perp, dim);
    let coisotropic = span_contained(&perp, &vectors, dim);
    Classification {
        l,
        isotropic,
        coisotropic,
        lagrangian: isotropic && coisotropic,
        multisymplectic: flat_kernel(&form).is_empty(),
        w_dim: span_rank(&vectors, dim),
        orthogonal_dim: span_rank(&perp, dim),
        kernel_dim,
    }
}
