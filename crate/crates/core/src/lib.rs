//! Tulczyjew triple for first-order classical field theories, in local
//! coordinates over a fibred manifold π: E → M with dim M = m, fibre
//! dimension n.
//!
//! The crate builds the three legs of the triple numerically: the
//! exchange map on iterated jets, the morphism A underlying the
//! Lagrangian side, and the flat morphism ♭ underlying the Hamiltonian
//! side, together with the premultisymplectic structure they share. It
//! certifies the structural identities connecting them: involutivity of
//! the exchange, connection independence, the dual-route agreement of
//! both morphisms, the Lagrangian-submanifold description of the
//! Euler-Lagrange and Hamilton-De Donder-Weyl equations, and the
//! equivalence of the two dynamics under the Legendre map.
//!
//! Module layout:
//! - [`fields`]: expression parsing and second-order forward-mode
//!   differentiation (value, gradient, Hessian in one pass).
//! - [`exterior`]: sparse exterior algebra on a coordinate tangent space
//!   (wedge, interior product, pullback, kernels, l-orthogonals,
//!   isotropic/coisotropic classification with premultisymplectic
//!   quotients).
//! - [`geometry`]: coordinate layouts for the bundle spaces, point and
//!   section types, connections on the base, canonical multimomentum
//!   forms, vertical endomorphism, fibred chart changes.
//! - [`triple`]: the exchange map, the affine dual pairing, and both
//!   morphism legs of the triple, each with an independent second route.
//! - [`dynamics`]: Poincaré-Cartan forms, Legendre maps, Euler-Lagrange
//!   and Hamilton-De Donder-Weyl residuals, the dynamics submanifolds
//!   and their tangent generators, example Lagrangian/Hamiltonian
//!   families.
//! - [`verify`]: seeded sampling, the check suite, report types.
//! - [`problem`]: the JSON problem-file schema shared by the CLI and the
//!   C API.
//!
//! Conventions fixed across the crate: coordinates on every space are
//! ordered base block first (x¹..xᵐ), then fibre block (u¹..uⁿ), then
//! p, then the momenta p^i_α in row-major (α, i) order, then jet blocks
//! in declaration order; the volume form is η = dx¹∧…∧dxᵐ and
//! d^{m-1}x_i denotes the contraction of η with ∂/∂x^i in the first
//! slot.

// Indexed loops follow the index notation of the quantities they build.
#![allow(clippy::needless_range_loop)]

pub mod dynamics;
pub mod exterior;
pub mod fields;
pub mod geometry;
pub mod problem;
pub mod triple;
pub mod verify;
