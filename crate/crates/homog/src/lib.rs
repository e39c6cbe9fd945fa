//! Periodic homogenization toolkit for non-divergence-form elliptic operators.
//!
//! The library computes, for a periodic symmetric positive-definite
//! coefficient field A(y) on the torus:
//!
//! * the invariant measure r (kernel of the adjoint operator, normalized),
//! * correctors v^{kl} solving the cell problems,
//! * the effective matrix Ā = ∫ A r dy,
//! * the obstruction tensor c^{kl}_j = ∫ a_ij ∂ᵢ v^{kl} r dy that decides
//!   whether the two-scale expansion admits a centered O(ε²) correction,
//!
//! together with a gallery of analytically understood coefficient families,
//! Dirichlet solvers on the unit box for the oscillatory and effective
//! problems, and convergence-rate studies that demonstrate the O(ε) vs O(ε²)
//! dichotomy empirically.

pub mod dirichlet;
pub mod error;
pub mod expr;
pub mod gallery;
pub mod homogenize;
pub mod krylov;
pub mod matrix;
pub mod periodic;
pub mod poly;
pub mod rates;
pub mod report;
pub mod spectral;
pub mod torus;

pub use error::{HomogError, Result};
