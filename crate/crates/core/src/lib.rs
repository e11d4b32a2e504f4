//! Numerical engine for a quasi-1D discrete magnetic scattering model.
//!
//! The model lives on `ℓ²(ℕ; ℂ^N)`: a Neumann half-line adjacency operator tensored with the
//! magnetic cycle matrix `A^θ`, perturbed by a potential `diag(v)` on the first layer.
//! The crate computes the scattering matrix, its threshold limits, the point spectrum and the
//! winding numbers entering Levinson's theorem, including the doubly degenerate threshold case.

pub mod bound_states;
pub mod error;
pub mod hexagon;
pub mod lattice;
pub mod linalg;
pub mod model;
pub mod resolvent;
pub mod scattering;
pub mod special;
pub mod winding;

pub use error::{QlevError, Result};
pub use model::{build_model, Model, ModelParams, Side, Theta};
