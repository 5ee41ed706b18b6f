//! Sampled verification: every structural identity of the library is
//! exercised as a named pass/fail check over deterministically sampled
//! points, with worst-case violations and locations collected into
//! machine-readable reports.
//!
//! Sampling is splittable: each (check, point) pair owns a dedicated
//! ChaCha stream, so per-point results do not depend on evaluation
//! order and the suite is safe to parallelise point-wise.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{
    el_residual, hdw_residual_transported, hdw_jet_residual_transported, hessian_regularity,
    induced_hamiltonian, jet_equivalence_residual, legendre_ext, legendre_ext_jacobian, pc_theta,
    sh_defining, sl_defining, sl_tangent_basis, sh_tangent_basis, DynError, HamiltonianDensity,
    LagrangianDensity,
};
use crate::exterior::{classify, span_contained, span_rank};
use crate::fields::{EvalError, FieldError, ScalarField};
use crate::geometry::{
    block2_from, block3_zeros, canonical_omega_lambda_j1, canonical_omega_lambda_mpi,
    canonical_theta, change_chart_j1pi1, j1_names, m0_names, x_names, Block2, BundleDims,
    ChartError, Connection, FiberedChart, Layout, PointJ1, PointJ1Pi1, PointJ1PiNu, PointM0,
    SectionE, Space,
};
use crate::triple::{
    exchange, exchange_with_gamma, flat_omega, flat_omega_intrinsic, flat_omega_jacobian,
    omega_tilde, omega_tilde_kernel, omega_tilde_kernel_dim, omega_tilde_kernel_generators,
    tulczyjew_a, tulczyjew_a_jacobian, tulczyjew_a_pipeline, TripleError,
};

/// Tolerance for exact structural identities.
pub const TAU_EQ: f64 = 1e-10;
/// Tolerance for residuals of the field equations along sections.
pub const TAU_PDE: f64 = 1e-9;
/// Relative rank tolerance for span and kernel comparisons.
pub const TAU_RANK: f64 = 1e-8;

/// Involution defects below this floor do not count as a torsion
/// witness.
const OBSTRUCTION_FLOOR: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("sample count must be at least 1")]
    EmptySample,
    #[error("box bounds for {var} must be finite with lo < hi (got [{lo}, {hi}])")]
    BadBox { var: String, lo: f64, hi: f64 },
    #[error("{0}")]
    DimensionMismatch(String),
    #[error("connection is declared symmetric but its Christoffels have torsion")]
    DeclaredSymmetryViolated,
    #[error("supplied generators are rank-deficient: rank {rank}, expected {expected}")]
    DegenerateGenerators { rank: usize, expected: usize },
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error(transparent)]
    Triple(#[from] TripleError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

// ---------------------------------------------------------------------
// Problem setup
// ---------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub tau_eq: f64,
    pub tau_pde: f64,
    pub tau_rank: f64,
}

impl Default for Tolerances {
    fn default() -> Tolerances {
        Tolerances { tau_eq: TAU_EQ, tau_pde: TAU_PDE, tau_rank: TAU_RANK }
    }
}

/// Per-coordinate sampling intervals: a default interval plus optional
/// per-variable overrides keyed by coordinate name.
#[derive(Clone, Debug)]
pub struct SampleBox {
    default: (f64, f64),
    per_var: BTreeMap<String, (f64, f64)>,
}

impl SampleBox {
    pub fn uniform(lo: f64, hi: f64) -> SampleBox {
        SampleBox { default: (lo, hi), per_var: BTreeMap::new() }
    }

    pub fn with_overrides(lo: f64, hi: f64, per_var: BTreeMap<String, (f64, f64)>) -> SampleBox {
        SampleBox { default: (lo, hi), per_var }
    }

    pub fn interval(&self, name: Option<&str>) -> (f64, f64) {
        name.and_then(|n| self.per_var.get(n).copied()).unwrap_or(self.default)
    }

    fn validate(&self) -> Result<(), VerifyError> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo < hi;
        if !ok(self.default) {
            return Err(VerifyError::BadBox {
                var: "default".into(),
                lo: self.default.0,
                hi: self.default.1,
            });
        }
        for (name, iv) in &self.per_var {
            if !ok(*iv) {
                return Err(VerifyError::BadBox { var: name.clone(), lo: iv.0, hi: iv.1 });
            }
        }
        Ok(())
    }
}

impl Default for SampleBox {
    fn default() -> SampleBox {
        SampleBox::uniform(-1.0, 1.0)
    }
}

/// Everything the suite needs: bundle dimensions, the densities under
/// test, the connection, named sections, and sampling policy.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub dims: BundleDims,
    pub lagrangian: Option<LagrangianDensity>,
    pub hamiltonian: Option<HamiltonianDensity>,
    pub connection: Connection,
    pub sections: Vec<(String, SectionE)>,
    pub sample_box: SampleBox,
    pub sample_count: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<(), VerifyError> {
        self.sample_box.validate()?;
        if self.sample_count == 0 {
            return Err(VerifyError::EmptySample);
        }
        let dims = self.dims;
        if let Some(lag) = &self.lagrangian {
            if lag.dims() != dims {
                return Err(VerifyError::DimensionMismatch("lagrangian dimensions".into()));
            }
        }
        if let Some(ham) = &self.hamiltonian {
            if ham.dims() != dims {
                return Err(VerifyError::DimensionMismatch("hamiltonian dimensions".into()));
            }
        }
        if self.connection.m() != dims.m {
            return Err(VerifyError::DimensionMismatch("connection base dimension".into()));
        }
        for (name, phi) in &self.sections {
            if phi.m() != dims.m || phi.n() != dims.n {
                return Err(VerifyError::DimensionMismatch(format!(
                    "section \"{name}\" dimensions"
                )));
            }
        }
        if self.connection.is_symmetric() {
            let pts = sample_base(self, 5, self.seed)?;
            if !self.connection.validate_symmetry(&pts, 1e-12)? {
                return Err(VerifyError::DeclaredSymmetryViolated);
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

/// One check's outcome. For pass/fail entries the invariant
/// `violation <= tolerance` holds exactly when the status is pass;
/// skipped entries carry the reason in `location`.
#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub status: CheckStatus,
    pub violation: f64,
    pub tolerance: f64,
    pub location: String,
    pub seconds: f64,
}

impl CheckReport {
    fn finish(name: &str, worst: Worst, tolerance: f64, start: Instant) -> CheckReport {
        let violation = worst.violation.max(0.0);
        CheckReport {
            name: name.into(),
            status: if violation <= tolerance { CheckStatus::Pass } else { CheckStatus::Fail },
            violation,
            tolerance,
            location: worst.location,
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    fn skipped(name: &str, reason: &str, start: Instant) -> CheckReport {
        CheckReport {
            name: name.into(),
            status: CheckStatus::Skipped,
            violation: 0.0,
            tolerance: 0.0,
            location: reason.into(),
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    fn errored(name: &str, err: &VerifyError, start: Instant) -> CheckReport {
        CheckReport {
            name: name.into(),
            status: CheckStatus::Fail,
            violation: f64::INFINITY,
            tolerance: 0.0,
            location: format!("error: {err}"),
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

/// Serialize a report list; wall times are included, everything else is
/// deterministic for a fixed spec and seed.
pub fn reports_to_json(reports: &[CheckReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

/// Worst-case tracker. The merge rule (larger violation wins, ties
/// resolved toward the smaller point index) is associative and
/// commutative, so serial and concurrent folds agree.
struct Worst {
    violation: f64,
    index: u64,
    location: String,
}

impl Worst {
    fn new() -> Worst {
        Worst { violation: -1.0, index: u64::MAX, location: "-".into() }
    }

    fn update(&mut self, violation: f64, index: u64, location: impl FnOnce() -> String) {
        if violation > self.violation || (violation == self.violation && index < self.index) {
            self.violation = violation;
            self.index = index;
            self.location = location();
        }
    }
}

fn fmt_point(label: &str, coords: &[f64]) -> String {
    let body: Vec<String> = coords.iter().map(|c| format!("{c:.4e}")).collect();
    format!("{label} = [{}]", body.join(", "))
}

fn amax(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, t| acc.max(t.abs()))
}

fn block2_amax(b: &Block2) -> f64 {
    b.iter().flatten().fold(0.0_f64, |acc, t| acc.max(t.abs()))
}

fn j1pi1_max_diff(a: &PointJ1Pi1, b: &PointJ1Pi1) -> f64 {
    let mut worst = 0.0_f64;
    let mut upd = |x: f64, y: f64| worst = worst.max((x - y).abs());
    for (x, y) in a.x.iter().zip(&b.x) {
        upd(*x, *y);
    }
    for (x, y) in a.u.iter().zip(&b.u) {
        upd(*x, *y);
    }
    for (r, s) in a.ujet.iter().zip(&b.ujet) {
        for (x, y) in r.iter().zip(s) {
            upd(*x, *y);
        }
    }
    for (r, s) in a.ubar.iter().zip(&b.ubar) {
        for (x, y) in r.iter().zip(s) {
            upd(*x, *y);
        }
    }
    for (r, s) in a.usec.iter().zip(&b.usec) {
        for (p, q) in r.iter().zip(s) {
            for (x, y) in p.iter().zip(q) {
                upd(*x, *y);
            }
        }
    }
    worst
}

// ---------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------

fn rng_for(seed: u64, check: u64, point: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((check << 32) | point);
    rng
}

fn draw(rng: &mut ChaCha8Rng, interval: (f64, f64)) -> f64 {
    rng.gen_range(interval.0..interval.1)
}

fn draw_named(rng: &mut ChaCha8Rng, spec: &ProblemSpec, name: Option<&str>) -> f64 {
    draw(rng, spec.sample_box.interval(name))
}

/// Deterministic base-point sample: point i draws its m coordinates
/// from stream i, so the list is independent of evaluation order.
pub fn sample(spec: &ProblemSpec, count: usize, seed: u64) -> Result<Vec<Vec<f64>>, VerifyError> {
    sample_base(spec, count, seed)
}

fn sample_base(spec: &ProblemSpec, count: usize, seed: u64) -> Result<Vec<Vec<f64>>, VerifyError> {
    if count == 0 {
        return Err(VerifyError::EmptySample);
    }
    spec.sample_box.validate()?;
    let names = x_names(spec.dims.m);
    Ok((0..count)
        .map(|i| {
            let mut rng = rng_for(seed, 0, i as u64);
            names.iter().map(|nm| draw_named(&mut rng, spec, Some(nm.as_str()))).collect()
        })
        .collect())
}

fn sample_j1(spec: &ProblemSpec, check: u64, point: u64) -> PointJ1 {
    let (m, n) = (spec.dims.m, spec.dims.n);
    let names = j1_names(m, n);
    let lay = Layout::new(spec.dims, Space::J1);
    let mut rng = rng_for(spec.seed, check, point);
    let x = (0..m).map(|i| draw_named(&mut rng, spec, Some(names[lay.x(i)].as_str()))).collect();
    let u = (0..n).map(|a| draw_named(&mut rng, spec, Some(names[lay.u(a)].as_str()))).collect();
    let mut ujet = vec![vec![0.0; m]; n];
    for a in 0..n {
        for i in 0..m {
            ujet[a][i] = draw_named(&mut rng, spec, Some(names[lay.ujet(a, i)].as_str()));
        }
    }
    PointJ1 { x, u, ujet }
}

fn sample_j1pi1(spec: &ProblemSpec, check: u64, point: u64) -> PointJ1Pi1 {
    let (m, n) = (spec.dims.m, spec.dims.n);
    let names = j1_names(m, n);
    let lay = Layout::new(spec.dims, Space::J1);
    let mut rng = rng_for(spec.seed, check, point);
    let x: Vec<f64> = (0..m).map(|i| draw_named(&mut rng, spec, Some(names[lay.x(i)].as_str()))).collect();
    let u = (0..n).map(|a| draw_named(&mut rng, spec, Some(names[lay.u(a)].as_str()))).collect();
    let mut ujet = vec![vec![0.0; m]; n];
    let mut ubar = vec![vec![0.0; m]; n];
    for a in 0..n {
        for i in 0..m {
            ujet[a][i] = draw_named(&mut rng, spec, Some(names[lay.ujet(a, i)].as_str()));
        }
    }
    for row in ubar.iter_mut() {
        for slot in row.iter_mut() {
            *slot = draw_named(&mut rng, spec, None);
        }
    }
    let mut usec = block3_zeros(n, m);
    for plane in usec.iter_mut() {
        for row in plane.iter_mut() {
            for slot in row.iter_mut() {
                *slot = draw_named(&mut rng, spec, None);
            }
        }
    }
    PointJ1Pi1 { x, u, ujet, ubar, usec }
}

fn sample_j1pinu(spec: &ProblemSpec, check: u64, point: u64) -> PointJ1PiNu {
    let (m, n) = (spec.dims.m, spec.dims.n);
    let names = m0_names(m, n);
    let lay = Layout::new(spec.dims, Space::M0);
    let jnames = j1_names(m, n);
    let jlay = Layout::new(spec.dims, Space::J1);
    let mut rng = rng_for(spec.seed, check, point);
    let x: Vec<f64> = (0..m).map(|i| draw_named(&mut rng, spec, Some(names[lay.x(i)].as_str()))).collect();
    let u = (0..n).map(|a| draw_named(&mut rng, spec, Some(names[lay.u(a)].as_str()))).collect();
    let p = draw_named(&mut rng, spec, Some("p"));
    let mut pmom = vec![vec![0.0; m]; n];
    for a in 0..n {
        for i in 0..m {
            pmom[a][i] = draw_named(&mut rng, spec, Some(names[lay.pmom(a, i)].as_str()));
        }
    }
    let mut ujet = vec![vec![0.0; m]; n];
    for a in 0..n {
        for i in 0..m {
            ujet[a][i] = draw_named(&mut rng, spec, Some(jnames[jlay.ujet(a, i)].as_str()));
        }
    }
    let pjet = (0..m).map(|_| draw_named(&mut rng, spec, None)).collect();
    let mut pmomjet = block3_zeros(n, m);
    for plane in pmomjet.iter_mut() {
        for row in plane.iter_mut() {
            for slot in row.iter_mut() {
                *slot = draw_named(&mut rng, spec, None);
            }
        }
    }
    PointJ1PiNu { x, u, p, pmom, ujet, pjet, pmomjet }
}

/// A sampled point adjusted to satisfy the defining equations of S_L.
fn sample_on_sl(
    spec: &ProblemSpec,
    lag: &LagrangianDensity,
    check: u64,
    point: u64,
) -> Result<PointJ1PiNu, VerifyError> {
    let dims = lag.dims();
    let (m, n) = (dims.m, dims.n);
    let mut zbar = sample_j1pinu(spec, check, point);
    let lay = Layout::new(dims, Space::J1);
    let jet = lag.eval2(&zbar.to_j1())?;
    zbar.pmom = block2_from(n, m, |a, i| jet.grad[lay.ujet(a, i)]);
    for a in 0..n {
        let off: f64 = (1..m).map(|i| zbar.pmomjet[a][i][i]).sum();
        zbar.pmomjet[a][0][0] = jet.grad[lay.u(a)] - off;
    }
    Ok(zbar)
}

/// A sampled point adjusted to satisfy the defining equations of S_H.
fn sample_on_sh(
    spec: &ProblemSpec,
    ham: &HamiltonianDensity,
    check: u64,
    point: u64,
) -> Result<PointJ1PiNu, VerifyError> {
    let dims = ham.dims();
    let (m, n) = (dims.m, dims.n);
    let mut zbar = sample_j1pinu(spec, check, point);
    let lay = Layout::new(dims, Space::M0);
    let w = PointM0 { x: zbar.x.clone(), u: zbar.u.clone(), pmom: zbar.pmom.clone() };
    let jet = ham.eval2(&w)?;
    zbar.ujet = block2_from(n, m, |a, j| jet.grad[lay.pmom(a, j)]);
    for a in 0..n {
        let off: f64 = (1..m).map(|j| zbar.pmomjet[a][j][j]).sum();
        zbar.pmomjet[a][0][0] = -jet.grad[lay.u(a)] - off;
    }
    Ok(zbar)
}

// ---------------------------------------------------------------------
// Submanifold check
// ---------------------------------------------------------------------

/// Classifies the span of `generators` as an (m+1)-Lagrangian subspace
/// of the premultisymplectic structure: the kernel must lie inside the
/// span, and the quotient classes must be (m+1)-Lagrangian. `point`
/// only labels the report.
pub fn check_lagrangian_submanifold(
    generators: &[DVector<f64>],
    point: &PointJ1PiNu,
    dims: BundleDims,
) -> CheckReport {
    let start = Instant::now();
    let name = "lagrangian_submanifold";
    let total = Layout::new(dims, Space::J1PiNu).total();
    let expected = total - (dims.n * dims.m + dims.n);
    let rank = span_rank(generators, total);
    if rank < expected {
        return CheckReport::errored(
            name,
            &VerifyError::DegenerateGenerators { rank, expected },
            start,
        );
    }
    let omega = omega_tilde(dims);
    let kernel = omega_tilde_kernel(dims);
    let mut defects = 0.0;
    if !span_contained(&kernel, generators, total) {
        defects += 1.0;
    }
    let cls = classify(&omega, generators, dims.m + 1, true);
    if !cls.lagrangian {
        defects += 1.0;
    }
    let mut worst = Worst::new();
    worst.update(defects, 0, || fmt_point("x", &point.x));
    CheckReport::finish(name, worst, 0.0, start)
}

// ---------------------------------------------------------------------
// The suite
// ---------------------------------------------------------------------

// Stable stream namespaces, one per check.
const CK_EXCHANGE: u64 = 1;
const CK_OBSTRUCTION: u64 = 2;
const CK_TORSION_INV: u64 = 3;
const CK_CHART: u64 = 4;
const CK_CONN_INDEP: u64 = 5;
const CK_PIPELINE: u64 = 6;
const CK_FLAT: u64 = 7;
const CK_LEG_PULLBACK: u64 = 10;
const CK_SUB_SL: u64 = 11;
const CK_SUB_SH: u64 = 12;
const CK_SL_SH: u64 = 13;
const CK_EL: u64 = 14;
const CK_HDW: u64 = 15;
const CK_JET_L: u64 = 16;
const CK_JET_H: u64 = 17;
const CK_MECHANICS: u64 = 18;
const CK_REGULARITY_PROBE: u64 = 19;

/// Upper bound on points for the submanifold classifications, which
/// cost a rank decomposition each.
const SUBMANIFOLD_POINTS: usize = 20;

fn guard(name: &str, body: impl FnOnce() -> Result<CheckReport, VerifyError>) -> CheckReport {
    let start = Instant::now();
    match body() {
        Ok(report) => report,
        Err(err) => CheckReport::errored(name, &err, start),
    }
}

/// Runs every check against the given problem and returns the reports
/// ordered by check name. Configuration problems surface as a single
/// failing `configuration` entry rather than an error.
pub fn full_suite(spec: &ProblemSpec) -> Vec<CheckReport> {
    let start = Instant::now();
    if let Err(err) = spec.validate() {
        return vec![CheckReport::errored("configuration", &err, start)];
    }
    let mut reports = vec![
        guard("exchange_involution", || check_exchange_involution(spec)),
        guard("torsion_obstruction", || check_torsion_obstruction(spec)),
        guard("torsion_inverse", || check_torsion_inverse(spec)),
        guard("chart_equivariance", || check_chart_equivariance(spec)),
        guard("connection_independence", || check_connection_independence(spec)),
        guard("pipeline_equality", || check_pipeline_equality(spec)),
        guard("flat_dual_path", || check_flat_dual_path(spec)),
        guard("pullback_identities", || check_pullback_identities(spec)),
        guard("kernel_dimension", || check_kernel_dimension(spec)),
        guard("legendre_pullback", || check_legendre_pullback(spec)),
        guard("submanifold_sl", || check_submanifold_sl(spec)),
        guard("submanifold_sh", || check_submanifold_sh(spec)),
        guard("sl_equals_sh", || check_sl_equals_sh(spec)),
        guard("el_residual", || check_el_residual(spec)),
        guard("hdw_residual", || check_hdw_residual(spec)),
        guard("jet_equivalence_lagrangian", || check_jet_equivalence_lagrangian(spec)),
        guard("jet_equivalence_hamiltonian", || check_jet_equivalence_hamiltonian(spec)),
        guard("mechanics_degeneration", || check_mechanics_degeneration(spec)),
    ];
    reports.sort_by(|a, b| a.name.cmp(&b.name));
    reports
}

fn check_exchange_involution(spec: &ProblemSpec) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let name = "exchange_involution";
    if !spec.connection.is_symmetric() {
        return Ok(CheckReport::skipped(
            name,
            "connection has torsion; involutivity requires a symmetric connection",
            start,
        ));
    }
    let mut worst = Worst::new();
    for i in 0..spec.sample_count {
        let z = sample_j1pi1(spec, CK_EXCHANGE, i as u64);
        let once = exchange(&spec.connection, &z)?;
        let twice = exchange(&spec.connection, &once)?;
        worst.update(j1pi1_max_diff(&z, &twice), i as u64, || fmt_point("x", &z.x));
    }
    Ok(CheckReport::finish(name, worst, spec.tolerances.tau_eq, start))
}

fn check_torsion_obstruction(spec: &ProblemSpec) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let name = "torsion_obstruction";
    if spec.connection.is_symmetric() {
        return Ok(CheckReport::skipped(
            name,
            "connection is symmetric; there is no torsion obstruction to witness",
            start,
        ));
    }
    // A single witness point with a visible involution defect confirms
    // the "only if" direction; the violation is the shortfall of the
    // best witness against the floor.
    let mut best_defect = 0.0_f64;
    let mut best_loc = "-".to_string();
    for i in 0..spec.sample_count {
        let z = sample_j1pi1(spec, CK_OBSTRUCTION, i as u64);
        let once = exchange(&spec.connection, &z)?;
        let twice = exchange(&spec.connection, &once)?;
        let defect = j1pi1_max_diff(&z, &twice);
        if defect > best_defect {
            best_defect = defect;
            best_loc = fmt_point("x", &z.x);
        }
    }
    let mut worst = Worst::new();
    worst.update((OBSTRUCTION_FLOOR - best_defect).max(0.0), 0, || best_loc.clone());
    Ok(CheckReport::finish(name, worst, 0.0, start))
}

fn check_torsion_inverse(spec: &ProblemSpec) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let inverse = spec.connection.add_torsion();
    let mut worst = Worst::new();
    for i in 0..spec.sample_count {
        let z = sample_j1pi1(spec, CK_TORSION_INV, i as u64);
        let once = exchange(&spec.connection, &z)?;
        let back = exchange(&inverse, &once)?;
        worst.update(j1pi1_max_diff(&z, &back), i as u64, || fmt_point("x", &z.x));
    }
    Ok(CheckReport::finish("torsion_inverse", worst, spec.tolerances.tau_eq, start))
}

/// A fixed nonlinear fibred chart: the first base coordinate is bent by
/// the square of the last, fibre coordinates are rescaled by the first.
fn equivariance_chart(dims: BundleDims) -> Result<FiberedChart, VerifyError> {
    let (m, n) = (dims.m, dims.n);
    let mut base = Vec::with_capacity(m);
    for i in 0..m {
        let src = if i == 0 {
            format!("x1 + 0.1*x{m}^2")
        } else {
            format!("x{}", i + 1)
        };
        base.push(ScalarField::parse(&src, x_names(m))?);
    }
    let mut fiber = Vec::with_capacity(n);
    for a in 0..n {
        fiber.push(ScalarField::parse(
            &format!("u{}*(1 + 0.1*x1)", a + 1),
            crate::geometry::eu_names(m, n),
        )?);
    }
    Ok(FiberedChart::new(base, fiber))
}

fn check_chart_equivariance(spec: &ProblemSpec) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let chart = equivariance_chart(spec.dims)?;
    let conn = &spec.connection;
    let mut worst = Worst::new();
    for i in 0..spec.sample_count {
        let z = sample_j1pi1(spec, CK_CHART, i as u64);
        let direct = change_chart_j1pi1(&chart, conn, &exchange(conn, &z)?)?;
        let img = change_chart_j1pi1(&chart, conn, &z)?;
        let routed = exchange_with_gamma(&img.gamma_b, &img.point);
        worst.update(j1pi1_max_diff(&direct.point, &routed), i as u64, || {
            fmt_point("x", &z.x)
        });
    }
    Ok(CheckReport::finish("chart_equivariance", worst, spec.tolerances.tau_pde, start))
}

/// A deterministic symmetric connection with degree-2 polynomial
/// Christoffels drawn from the given stream.
fn random_symmetric_connection(spec: &ProblemSpec, which: u64) -> Connection {
    let m = spec.dims.m;
    let mut rng = rng_for(spec.seed, CK_CONN_INDEP, 1_000_000 + which);
    let mut store = vec![vec![vec![crate::fields::Expr::num(0.0); m]; m]; m];
    for k in 0..m {
        for i in 0..m {
            for j in i..m {
                let mut e = crate::fields::Expr::num(rng.gen_range(-0.4..0.4));
                for l in 0..m {
                    e = e + crate::fields::Expr::num(rng.gen_range(-0.4..0.4))
                        * crate::fields::Expr::var(format!("x{}", l + 1));
                }
                for l in 0..m {
                    for l2 in l..m {
                        e = e + crate::fields::Expr::num(rng.gen_range(-0.3..0.3))
                            * crate::fields::Expr::var(format!("x{}", l + 1))
                            * crate::fields::Expr::var(format!("x{}", l2 + 1));
                    }
                }
                store[k][i][j] = e.clone();
                store[k][j][i] = e;
            }
        }
    }
    Connection::from_exprs(m, true, |k, i, j| store[k][i][j].clone())
}

fn check_connection_independence(spec: &ProblemSpec) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let conn_a = random_symmetric_connection(spec, 1);
    let conn_b = random_symmetric_connection(spec, 2);
    let mut worst = Worst::new();
    for i in 0..spec.sample_count {
        let zbar = sample_j1pinu(spec, CK_CONN_INDEP, i as u64);
        let closed = tulczyjew_a(&zbar);
        let via_a = tulczyjew_a_pipeline(&conn_a, &zbar)?;
        let via_b = tulczyjew_a_pipeline(&conn_b, &zbar)?;
        let defect = via_a
            .max_diff(&closed)
            .max(via_b.max_diff(&closed))
            .max(via_a.max_diff(&via_b));
        worst.update(defect, i as u64, || fmt_point("x", &zbar.x));
    }
    Ok(CheckReport::finish("connection_independence", worst, spec.tolerances.tau_eq, start))
}

fn check_pipeline_equality(spec: &ProblemSpec) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let name = "pipeline_equality";
    if !spec.connection.is_symmetric() {
        return Ok(CheckReport::skipped(
            name,
            "connection has torsion; the fact2 pipeline needs a symmetric connection",
            start,
        ));
    }
    let mut worst = Worst::new();
    for i in 0..spec.sample_count {
        let zbar = sample_j1pinu(spec, CK_PIPELINE, i as u64);
        let closed = tulczyjew_a(&zbar);
        let piped = tulczyjew_a_pipeline(&spec.connection, &zbar)?;
        worst.update(piped.max_diff(&closed), i as u64, || fmt_point("x", &zbar.x));
    }
    Ok(CheckReport::finish(name, worst, spec.tolerances.tau_eq, start))
}

fn check_flat_dual_path(spec: &ProblemSpec) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let mut worst = Worst::new();
    for i in 0..spec.sample_count {
        let zbar = sample_j1pinu(spec, CK_FLAT, i as u64);
        let coord = flat_omega(&zbar).to_mpi_form();
        let intrinsic = flat_omega_intrinsic(&zbar);
        worst.update(coord.max_coeff_diff(&intrinsic), i as u64, || fmt_point("x", &zbar.x));
    }
    Ok(CheckReport::finish("flat_dual_path", worst, spec.tolerances.tau_eq, start))
}

fn check_pullback_identities(spec: &ProblemSpec) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let dims = spec.dims;
    let target = omega_tilde(dims);
    let left = canonical_omega_lambda_j1(dims).pullback(&tulczyjew_a_jacobian(dims));
    let right = canonical_omega_lambda_mpi(dims).pullback(&flat_omega_jacobian(dims));
    let mut worst = Worst::new();
    worst.update(
        left.max_coeff_diff(&target).max(right.max_coeff_diff(&target)),
        0,
        || "constant coefficients".into(),
    );
    Ok(CheckReport::finish("pullback_identities", worst, spec.tolerances.tau_eq, start))
}

fn check_kernel_dimension(spec: &ProblemSpec) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let dims = spec.dims;
    let total = Layout::new(dims, Space::J1PiNu).total();
    let expected = omega_tilde_kernel_dim(dims);
    let kernel = omega_tilde_kernel(dims);
    let generators = omega_tilde_kernel_generators(dims);
    let mut defects = 0.0;
    if kernel.len() != expected {
        defects += 1.0;
    }
    if span_rank(&generators, total) != expected {
        defects += 1.0;
    }
    if !span_contained(&kernel, &generators, total) || !span_contained(&generators, &kernel, total)
    {
        defects += 1.0;
    }
    let mut worst = Worst::new();
    worst.update(defects, 0, || {
        format!("kernel dim {} vs closed form {expected}", kernel.len())
    });
    Ok(CheckReport::finish("kernel_dimension", worst, 0.0, start))
}

fn check_legendre_pullback(spec: &ProblemSpec) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let name = "legendre_pullback";
    let Some(lag) = &spec.lagrangian else {
        return Ok(CheckReport::skipped(name, "no lagrangian supplied", start));
    };
    let mut worst = Worst::new();
    for i in 0..spec.sample_count {
        let z = sample_j1(spec, CK_LEG_PULLBACK, i as u64);
        let omega = legendre_ext(lag, &z)?;
        let jac = legendre_ext_jacobian(lag, &z)?;
        let pulled = canonical_theta(&omega).pullback(&jac);
        let theta = pc_theta(lag, &z)?;
        worst.update(pulled.max_coeff_diff(&theta), i as u64, || fmt_point("x", &z.x));
    }
    Ok(CheckReport::finish(name, worst, spec.tolerances.tau_eq, start))
}

/// Probes hyper-regularity of the Lagrangian on a few sampled jets.
fn probe_regularity(spec: &ProblemSpec, lag: &LagrangianDensity) -> Result<bool, VerifyError> {
    for i in 0..spec.sample_count.min(5) {
        let z = sample_j1(spec, CK_REGULARITY_PROBE, i as u64);
        if !hessian_regularity(lag, &z)?.regular {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The Hamiltonian the suite runs against: the explicit one when
/// supplied, otherwise the one induced from a hyper-regular Lagrangian.
fn effective_hamiltonian(
    spec: &ProblemSpec,
) -> Result<Option<HamiltonianDensity>, VerifyError> {
    if let Some(ham) = &spec.hamiltonian {
        return Ok(Some(ham.clone()));
    }
    if let Some(lag) = &spec.lagrangian {
        if probe_regularity(spec, lag)? {
            return Ok(Some(induced_hamiltonian(lag)));
        }
    }
    Ok(None)
}

fn check_submanifold_sl(spec: &ProblemSpec) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let name = "submanifold_sl";
    let Some(lag) = &spec.lagrangian else {
        return Ok(CheckReport::skipped(name, "no lagrangian supplied", start));
    };
    let mut worst = Worst::new();
    for i in 0..spec.sample_count.min(SUBMANIFOLD_POINTS) {
        let zbar = sample_on_sl(spec, lag, CK_SUB_SL, i as u64)?;
        let basis = sl_tangent_basis(lag, &zbar, spec.tolerances.tau_pde)?;
        let sub = check_lagrangian_submanifold(&basis, &zbar, spec.dims);
        worst.update(sub.violation, i as u64, || sub.location.clone());
    }
    Ok(CheckReport::finish(name, worst, 0.0, start))
}

fn check_submanifold_sh(spec: &ProblemSpec) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let name = "submanifold_sh";
    let Some(ham) = effective_hamiltonian(spec)? else {
        return Ok(CheckReport::skipped(
            name,
            "no hamiltonian supplied and the lagrangian is not hyper-regular",
            start,
        ));
    };
    let mut worst = Worst::new();
    for i in 0..spec.sample_count.min(SUBMANIFOLD_POINTS) {
        let zbar = sample_on_sh(spec, &ham, CK_SUB_SH, i as u64)?;
        let basis = sh_tangent_basis(&ham, &zbar, spec.tolerances.tau_pde)?;
        let sub = check_lagrangian_submanifold(&basis, &zbar, spec.dims);
        worst.update(sub.violation, i as u64, || sub.location.clone());
    }
    Ok(CheckReport::finish(name, worst, 0.0, start))
}

fn check_sl_equals_sh(spec: &ProblemSpec) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let name = "sl_equals_sh";
    let Some(lag) = &spec.lagrangian else {
        return Ok(CheckReport::skipped(name, "no lagrangian supplied", start));
    };
    if !probe_regularity(spec, lag)? {
        return Ok(CheckReport::skipped(
            name,
            "lagrangian is not hyper-regular; the two dynamics need not match",
            start,
        ));
    }
    let ham = match &spec.hamiltonian {
        Some(h) => h.clone(),
        None => induced_hamiltonian(lag),
    };
    let mut worst = Worst::new();
    for i in 0..spec.sample_count {
        let zl = sample_on_sl(spec, lag, CK_SL_SH, i as u64)?;
        let r = sh_defining(&ham, &zl)?;
        worst.update(amax(&r), i as u64, || fmt_point("x", &zl.x));
        let zh = sample_on_sh(spec, &ham, CK_SL_SH, (i + spec.sample_count) as u64)?;
        let r = sl_defining(lag, &zh)?;
        worst.update(amax(&r), (i + spec.sample_count) as u64, || fmt_point("x", &zh.x));
    }
    Ok(CheckReport::finish(name, worst, spec.tolerances.tau_pde, start))
}

fn check_el_residual(spec: &ProblemSpec) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let name = "el_residual";
    let Some(lag) = &spec.lagrangian else {
        return Ok(CheckReport::skipped(name, "no lagrangian supplied", start));
    };
    if spec.sections.is_empty() {
        return Ok(CheckReport::skipped(name, "no sections supplied", start));
    }
    let points = sample_base(spec, spec.sample_count, spec.seed.wrapping_add(CK_EL))?;
    let mut worst = Worst::new();
    for (s, (label, phi)) in spec.sections.iter().enumerate() {
        for (i, x) in points.iter().enumerate() {
            let r = el_residual(lag, phi, x)?;
            let idx = (s * points.len() + i) as u64;
            worst.update(amax(&r), idx, || format!("section \"{label}\", {}", fmt_point("x", x)));
        }
    }
    Ok(CheckReport::finish(name, worst, spec.tolerances.tau_pde, start))
}

fn check_hdw_residual(spec: &ProblemSpec) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let name = "hdw_residual";
    let Some(lag) = &spec.lagrangian else {
        return Ok(CheckReport::skipped(name, "no lagrangian to transport sections through", start));
    };
    if spec.sections.is_empty() {
        return Ok(CheckReport::skipped(name, "no sections supplied", start));
    }
    let Some(ham) = effective_hamiltonian(spec)? else {
        return Ok(CheckReport::skipped(
            name,
            "no hamiltonian supplied and the lagrangian is not hyper-regular",
            start,
        ));
    };
    let points = sample_base(spec, spec.sample_count, spec.seed.wrapping_add(CK_HDW))?;
    let mut worst = Worst::new();
    for (s, (label, phi)) in spec.sections.iter().enumerate() {
        for (i, x) in points.iter().enumerate() {
            let r = hdw_residual_transported(lag, &ham, phi, x)?;
            let idx = (s * points.len() + i) as u64;
            worst.update(amax(&r), idx, || format!("section \"{label}\", {}", fmt_point("x", x)));
        }
    }
    Ok(CheckReport::finish(name, worst, spec.tolerances.tau_pde, start))
}

fn check_jet_equivalence_lagrangian(spec: &ProblemSpec) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let name = "jet_equivalence_lagrangian";
    let Some(lag) = &spec.lagrangian else {
        return Ok(CheckReport::skipped(name, "no lagrangian supplied", start));
    };
    if spec.sections.is_empty() {
        return Ok(CheckReport::skipped(name, "no sections supplied", start));
    }
    let points = sample_base(spec, spec.sample_count, spec.seed.wrapping_add(CK_JET_L))?;
    let mut worst = Worst::new();
    for (s, (label, phi)) in spec.sections.iter().enumerate() {
        for (i, x) in points.iter().enumerate() {
            let form = jet_equivalence_residual(lag, phi, x)?;
            let el = el_residual(lag, phi, x)?;
            let agreement = form
                .coef_u
                .iter()
                .zip(&el)
                .fold(0.0_f64, |acc, (c, e)| acc.max((c - e).abs()));
            let defect = amax(&form.coef_u).max(block2_amax(&form.coef_ujet)).max(agreement);
            let idx = (s * points.len() + i) as u64;
            worst.update(defect, idx, || format!("section \"{label}\", {}", fmt_point("x", x)));
        }
    }
    Ok(CheckReport::finish(name, worst, spec.tolerances.tau_eq, start))
}

fn check_jet_equivalence_hamiltonian(spec: &ProblemSpec) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let name = "jet_equivalence_hamiltonian";
    let Some(lag) = &spec.lagrangian else {
        return Ok(CheckReport::skipped(name, "no lagrangian to transport sections through", start));
    };
    if spec.sections.is_empty() {
        return Ok(CheckReport::skipped(name, "no sections supplied", start));
    }
    let Some(ham) = effective_hamiltonian(spec)? else {
        return Ok(CheckReport::skipped(
            name,
            "no hamiltonian supplied and the lagrangian is not hyper-regular",
            start,
        ));
    };
    let dims = spec.dims;
    let points = sample_base(spec, spec.sample_count, spec.seed.wrapping_add(CK_JET_H))?;
    let mut worst = Worst::new();
    for (s, (label, phi)) in spec.sections.iter().enumerate() {
        for (i, x) in points.iter().enumerate() {
            let form = hdw_jet_residual_transported(lag, &ham, phi, x)?;
            let blocks = hdw_residual_transported(lag, &ham, phi, x)?;
            // du-block carries the divergence part, dp-block minus the
            // gradient part, dp itself cancels.
            let mut agreement = form.coef_p.abs();
            for a in 0..dims.n {
                agreement = agreement.max((form.coef_u[a] - blocks[dims.n * dims.m + a]).abs());
                for j in 0..dims.m {
                    agreement = agreement
                        .max((form.coef_pmom[a][j] + blocks[a * dims.m + j]).abs());
                }
            }
            let defect = amax(&form.coef_u)
                .max(block2_amax(&form.coef_pmom))
                .max(form.coef_p.abs())
                .max(agreement);
            let idx = (s * points.len() + i) as u64;
            worst.update(defect, idx, || format!("section \"{label}\", {}", fmt_point("x", x)));
        }
    }
    Ok(CheckReport::finish(name, worst, spec.tolerances.tau_eq, start))
}

/// The one-dimensional degeneration runs the oscillator fixture
/// unconditionally: its Euler-Lagrange solution, its induced
/// Hamiltonian, and the transported first-order system.
fn check_mechanics_degeneration(spec: &ProblemSpec) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let dims = BundleDims::new(1, 1);
    let lag = LagrangianDensity::parse("0.5*u1_1^2 - 0.5*u1^2", dims)?;
    let phi = SectionE::parse(&["sin(x1)".to_string()], 1)?;
    let ham = induced_hamiltonian(&lag);
    let explicit = HamiltonianDensity::parse("0.5*p1_1^2 + 0.5*u1^2", dims)?;
    let mut worst = Worst::new();
    for i in 0..spec.sample_count.max(10) {
        let mut rng = rng_for(spec.seed, CK_MECHANICS, i as u64);
        let x = [draw(&mut rng, (-1.0, 1.0))];
        let el = el_residual(&lag, &phi, &x)?;
        let hdw = hdw_residual_transported(&lag, &ham, &phi, &x)?;
        let w = PointM0 {
            x: x.to_vec(),
            u: vec![draw(&mut rng, (-1.0, 1.0))],
            pmom: vec![vec![draw(&mut rng, (-1.0, 1.0))]],
        };
        let dual_gap = (ham.eval0(&w)? - explicit.eval0(&w)?).abs();
        let defect = amax(&el).max(amax(&hdw)).max(dual_gap);
        worst.update(defect, i as u64, || fmt_point("x", &x));
    }
    Ok(CheckReport::finish("mechanics_degeneration", worst, spec.tolerances.tau_eq, start))
}
