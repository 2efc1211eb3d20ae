//! Mirror-free mirror prox for monotone variational inequalities.
//!
//! The mirror map of classical mirror prox is replaced by an operator `H`
//! that need not be a gradient. Distances are measured with the generalized
//! Bregman divergence built from line integrals of `H`, and each proximal
//! step solves `F(z_b) + L(H(z') - H(z_a)) + m(H(z') - H(z_b)) = 0`.
//!
//! Modules:
//! - [`operator`]: vector fields, Jacobians and directional derivatives.
//! - [`geometry`]: quadrature, divergences, loop integrals and certificates.
//! - [`prox`]: generic and third-order proximal solvers.
//! - [`mfmp`]: the two iteration loops, traces and inequality checks.
//! - [`problems`]: the worked instances and random instance generation.

pub mod error;
pub mod geometry;
pub mod mfmp;
pub mod operator;
pub mod problems;
pub mod prox;

pub use error::{Error, Result};
pub use operator::{MinMaxSplit, Point, VectorField};
