//! Radial numerics for the focusing inhomogeneous Schrödinger equations
//! `i∂_t u - K_{s,λ} u + F(x, u) = 0` with `K_{s,λ} = (-Δ)^s + (2-s)λ/|x|²`
//! and a Choquard or local power nonlinearity.
//!
//! All profiles are radial and sampled on a cell-centered grid.

pub mod criteria;
pub mod error;
pub mod evolution;
pub mod functionals;
pub mod ground_state;
pub mod io;
pub mod problem;
pub mod radial_grid;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use problem::{derive_exponents, validate_spec, DerivedExponents, Nonlinearity, ProblemSpec};
pub use radial_grid::{make_grid, Grid, KOperator, RadialField};
