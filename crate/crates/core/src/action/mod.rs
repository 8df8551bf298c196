//! Discrete minimal actions on a space-time lattice.
//!
//! One Lax-Oleinik step maps a field `u` to
//! `min_y { u(y) + c(y -> x) }` over lattice neighbours `y` with
//! `|x - y| <= A dt`, where `c(y -> x)` is the action of the straight
//! segment from `y` to `x` traversed in time `dt`. Seeding the recursion with
//! a point mass at `x'` yields the minimal action `phi(x', ., t, omega)`.

mod cache;
mod engine;
mod lattice;
mod lipschitz;

pub use cache::{read_action_table, table_cache_key, write_action_table, ActionCacheHeader};
pub use engine::{ActionEngine, ActionTable, Field, FieldKind};
pub use lattice::{gauss_legendre, IndexBox, Lattice};
pub use lipschitz::{verify_cone_lipschitz, ConeSlices, LipschitzEntry, LipschitzReport};

use crate::error::{Error, Result};
use crate::media::{EnvironmentSample, Medium};

/// `phi(x', x, t, omega)` for lattice points `x'`, `x` (unit-cell coordinates).
pub fn minimal_action(
    medium: &Medium,
    omega: &EnvironmentSample,
    source: &[f64],
    target: &[f64],
    t: f64,
    lattice: &Lattice,
) -> Result<f64> {
    let engine = ActionEngine::new(medium, omega, lattice)?;
    engine.minimal_action(source, target, t)
}

/// `phi_eps(x', x, t, omega) = eps * phi(x', x, t / eps, omega)` on the
/// microscopic lattice.
pub fn rescaled_action(
    medium: &Medium,
    omega: &EnvironmentSample,
    epsilon: f64,
    source: &[f64],
    target: &[f64],
    t: f64,
    lattice: &Lattice,
) -> Result<f64> {
    if epsilon <= 0.0 {
        return Err(Error::Lattice(format!("epsilon must be positive, got {epsilon}")));
    }
    let engine = ActionEngine::new(medium, omega, lattice)?;
    engine.rescaled_action(epsilon, source, target, t)
}
