//! Homogenization of convex Hamilton-Jacobi equations in stationary ergodic
//! media on `R^n` with `Z^n` acting by unit translations.
//!
//! The pipeline: [`media`] builds Hamiltonians and their environments,
//! [`action`] computes minimal actions by a lattice Lax-Oleinik recursion,
//! [`effective`] extracts `L_bar` and `H_bar`, [`solver`] compares rescaled
//! and homogenized value functions, and [`stablenorm`] specializes to
//! Riemannian metrics.

pub mod action;
pub mod config;
pub mod effective;
pub mod error;
pub mod hash;
pub mod media;
pub mod runner;
pub mod solver;
pub mod stablenorm;

pub use error::{Error, Result};
