//! Space-time isogeometric discretization of the mixed form of
//!
//! ```text
//! ∂ₜu + Δ²u − Δu = f   in Ω × (0, T)
//! u(·, 0) = 0,   u = Δu = 0 on ∂Ω × (0, T)
//! ```
//!
//! written as the first-order-in-time system `∂ₜu − Δv + v = f`, `−Δu = v`.
//! Both unknowns live in the same tensor-product spline space over the
//! space-time cylinder, so the Galerkin system has the block form
//!
//! ```text
//! [ W   K + M ] [u]   [f]
//! [ K    −M   ] [v] = [0]
//! ```
//!
//! with `W = W_t ⊗ M_s`, `K = M_t ⊗ K_s` and `M = M_t ⊗ M_s`.

pub mod assembly;
pub mod bspline;
pub mod error;
pub mod errors;
pub mod geometry;
pub mod linsolve;
pub mod par;
pub mod problems;
pub mod quadrature;
pub mod study;

pub use error::{Error, Result};
