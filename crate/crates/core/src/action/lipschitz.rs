//! Empirical Lipschitz constants of rescaled actions on propagation cones.
//!
//! `phi_eps(x', x, t) = eps * phi(x'/eps, x/eps, t/eps)` so difference
//! quotients of `phi_eps` in macroscopic units equal those of `phi` in
//! microscopic units; everything here works on the microscopic tables.

use serde::{Deserialize, Serialize};

use super::engine::ActionTable;

/// Tables for one `(eps, omega)`: any number of sources and horizons.
#[derive(Debug, Clone)]
pub struct ConeSlices {
    pub epsilon: f64,
    pub seed: u64,
    pub tables: Vec<ActionTable>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LipschitzEntry {
    pub epsilon: f64,
    pub seed: u64,
    /// Largest difference quotient in the target.
    pub lip_x: f64,
    /// Largest difference quotient in the source (same horizon, adjacent sources).
    pub lip_source: f64,
    /// Largest difference quotient between consecutive horizons.
    pub lip_t: f64,
    pub lip: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub entries: Vec<LipschitzEntry>,
    pub max_constant: f64,
    /// `(max - min) / max` of the per-entry constants.
    pub spread: f64,
    pub tolerance: f64,
    pub uniform: bool,
}

fn in_cone(table: &ActionTable, p: [i64; 2], fraction: f64) -> bool {
    let dx = table.lattice.dx();
    let d0 = (p[0] - table.source[0]) as f64 * dx;
    let d1 = (p[1] - table.source[1]) as f64 * dx;
    let r = (d0 * d0 + d1 * d1).sqrt();
    r < fraction * table.lattice.speed_cap * table.horizon()
}

/// Difference quotients over points with `|x - x'| < fraction * A * t`.
pub fn verify_cone_lipschitz(sets: &[ConeSlices], fraction: f64, tolerance: f64) -> LipschitzReport {
    let mut entries = Vec::with_capacity(sets.len());
    for set in sets {
        let mut lip_x = 0.0f64;
        let mut lip_source = 0.0f64;
        let mut lip_t = 0.0f64;
        let mut samples = 0usize;
        for t in &set.tables {
            let dim = t.lattice.dim;
            let dx = t.lattice.dx();
            let b = t.field.support_box();
            for i in b.lo[0]..=b.hi[0] {
                for j in b.lo[1]..=b.hi[1] {
                    let p = [i, j];
                    if !in_cone(t, p, fraction) {
                        continue;
                    }
                    let v = t.value(p);
                    samples += 1;
                    for axis in 0..dim {
                        let mut q = p;
                        q[axis] += 1;
                        if in_cone(t, q, fraction) {
                            lip_x = lip_x.max((t.value(q) - v).abs() / dx);
                        }
                    }
                    for u in &set.tables {
                        if u.horizon_steps == t.horizon_steps + 1 && u.source == t.source && in_cone(u, p, fraction) {
                            lip_t = lip_t.max((u.value(p) - v).abs() / t.lattice.dt());
                        }
                        if u.horizon_steps == t.horizon_steps && in_cone(u, p, fraction) {
                            let ds: i64 = (0..2).map(|k| (u.source[k] - t.source[k]).abs()).sum();
                            if ds == 1 {
                                lip_source = lip_source.max((u.value(p) - v).abs() / dx);
                            }
                        }
                    }
                }
            }
        }
        entries.push(LipschitzEntry {
            epsilon: set.epsilon,
            seed: set.seed,
            lip_x,
            lip_source,
            lip_t,
            lip: lip_x.max(lip_source).max(lip_t),
            samples,
        });
    }
    let max = entries.iter().map(|e| e.lip).fold(0.0, f64::max);
    let min = entries.iter().map(|e| e.lip).fold(f64::INFINITY, f64::min);
    let spread = if max > 0.0 { (max - min) / max } else { 0.0 };
    let finite = entries.iter().all(|e| e.lip.is_finite() && e.samples > 0);
    LipschitzReport {
        entries,
        max_constant: max,
        spread,
        tolerance,
        uniform: finite && spread <= tolerance,
    }
}
