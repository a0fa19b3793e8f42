//! Generalized p-modulus of boundary-to-boundary curve families on metric
//! graphs.
//!
//! The crate solves the modulus problem by cutting planes with dual
//! coordinate ascent, returns the dual measure on curves as a checkable
//! certificate, relates the minimizer to the discrete p-Dirichlet problem,
//! and reproduces the anisotropic counterexample to the sheaf property of
//! p-harmonic functions in the plane with the l1 metric.

pub mod duality;
pub mod error;
pub mod io;
pub mod modulus;
pub mod pharmonic;
pub mod render;
pub mod sheaf;
pub mod space;

pub use error::{Error, Result};
