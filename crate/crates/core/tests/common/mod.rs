#![allow(dead_code)]

use std::f64::consts::TAU;
use std::path::PathBuf;

use hjhomog::config::ExperimentConfig;
use hjhomog::effective::{effective_hamiltonian, effective_lagrangian_table, EffectiveTable};

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn shipped(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&config_path(name)).unwrap()
}

/// `L_bar` on the config's direction grid with `H_bar` on its momentum grid.
pub fn effective(cfg: &ExperimentConfig) -> EffectiveTable {
    let m = cfg.medium.build().unwrap();
    let grids = cfg.grids().unwrap();
    let sched = cfg.schedule().unwrap();
    let t = effective_lagrangian_table(
        &m,
        &grids.directions(m.dim()).unwrap(),
        &sched.seeds,
        &sched.horizons,
        &cfg.lattice().unwrap(),
        &cfg.estimate_options().unwrap(),
    )
    .unwrap();
    effective_hamiltonian(&t, &grids.momenta(m.dim()).unwrap()).unwrap()
}

/// `int_0^1 sqrt(2 (e - cos 2 pi s)) ds` by the midpoint rule.
pub fn rotation_action(e: f64) -> f64 {
    let n = 200_000;
    let h = 1.0 / n as f64;
    (0..n)
        .map(|i| {
            let s = (i as f64 + 0.5) * h;
            (2.0 * (e - (TAU * s).cos())).max(0.0).sqrt()
        })
        .sum::<f64>()
        * h
}

/// `H_bar(P)` for `H = p^2/2 + cos(2 pi x)`: 1 below `4/pi`, else the root of
/// `rotation_action(e) = |P|` by bisection.
pub fn cosine_hbar(p: f64) -> f64 {
    let p = p.abs();
    if p <= rotation_action(1.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (1.0, 1.0 + p * p);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if rotation_action(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
