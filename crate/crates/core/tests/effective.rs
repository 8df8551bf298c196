mod common;

use hjhomog::action::Lattice;
use hjhomog::effective::{
    double_conjugate_check, effective_hamiltonian, effective_lagrangian_table, envelope_check, homogeneity_check,
    midpoint_defect, phi_map, subadditive_estimate, two_point_check, DirectionGrid, EstimateOptions,
};
use hjhomog::media::{make_periodic_medium, sample_environment, PeriodicSpec};
use hjhomog::stablenorm::{metric_medium, MetricFamily};
use hjhomog::Error;

#[test]
fn phi_map_remainder_bound() {
    assert_eq!(phi_map(0.5, &[1.3]), vec![2]);
    assert_eq!(phi_map(0.37, &[0.0, 0.0]), vec![0, 0]);
    let mut n = 0;
    for i in 1..=10 {
        let eps = i as f64 * 0.031;
        for a in 0..10 {
            for b in 0..10 {
                let h = [-2.0 + 0.41 * a as f64, 1.7 - 0.39 * b as f64];
                let z = phi_map(eps, &h);
                let r = ((eps * z[0] as f64 - h[0]).powi(2) + (eps * z[1] as f64 - h[1]).powi(2)).sqrt();
                assert!(r <= eps * 2.0, "eps {eps} h {h:?}");
                n += 1;
            }
        }
    }
    assert_eq!(n, 1000);
}

#[test]
fn free_series_at_unit_velocity_quantum() {
    let m = make_periodic_medium(PeriodicSpec::free(1)).unwrap();
    let w = sample_environment(&m, 0);
    let l = Lattice {
        dim: 1,
        cells_per_unit: 20,
        steps_per_unit: 20,
        speed_cap: 2.0,
        radius: 1.0,
        quadrature_nodes: 4,
    };
    let s = subadditive_estimate(&m, &w, &[1.0], &[2, 4, 8, 16], &l, &EstimateOptions::default()).unwrap();
    assert!((s.limit - 0.5).abs() <= 0.02, "{s:?}");
}

#[test]
fn rest_rate_is_minus_max_potential() {
    let m = make_periodic_medium(PeriodicSpec::cosine(1, 1.0)).unwrap();
    let w = sample_environment(&m, 0);
    let l = Lattice::default_1d(2.0, 1.0);
    let s = subadditive_estimate(&m, &w, &[0.0], &[4, 8, 16], &l, &EstimateOptions::default()).unwrap();
    assert!((s.limit + 1.0).abs() <= 0.05, "{s:?}");
}

#[test]
fn free_table_is_quadratic_and_self_dual() {
    let t = common::effective(&common::shipped("free_1d.toml"));
    for k in 0..t.grid.len() {
        let h = t.grid.point(k)[0];
        let exact = 0.5 * h * h;
        assert!((t.convexified[k] - exact).abs() <= 0.05 * exact + 1e-12, "h {h}");
    }
    let momentum = t.momentum.as_ref().unwrap();
    for k in 0..momentum.len() {
        let p = momentum.point(k)[0];
        let exact = 0.5 * p * p;
        assert!((t.hbar[k] - exact).abs() <= 0.05 * exact + 1e-12, "p {p}");
    }
}

#[test]
fn narrow_direction_grid_is_refused() {
    let m = make_periodic_medium(PeriodicSpec::free(1)).unwrap();
    let grid = DirectionGrid::square(1, 1.0, 0.25).unwrap();
    let l = Lattice::default_1d(2.0, 1.0);
    let t = effective_lagrangian_table(&m, &grid, &[0], &[4, 8], &l, &EstimateOptions::default()).unwrap();
    let wide = DirectionGrid::square(1, 1.5, 0.25).unwrap();
    assert!(matches!(effective_hamiltonian(&t, &wide), Err(Error::WidenDirectionGrid { .. })));
}

#[test]
fn cosine_table_against_cell_problem_oracle() {
    let t = common::effective(&common::shipped("cosine_1d.toml"));
    let momentum = t.momentum.as_ref().unwrap();
    let c0 = 4.0 / std::f64::consts::PI;
    assert!((common::rotation_action(1.0) - c0).abs() < 1e-6);
    for k in 0..momentum.len() {
        let p = momentum.point(k)[0];
        if p.abs() <= c0 {
            assert!((t.hbar[k] - 1.0).abs() <= 0.05, "p {p}: {}", t.hbar[k]);
        }
    }
    for p in [1.5, 2.0, -2.0] {
        let oracle = common::cosine_hbar(p);
        let v = t.hbar_at(&[p]).unwrap();
        assert!((v - oracle).abs() <= 0.05 * oracle, "p {p}: {v} vs {oracle}");
    }

    // Structural audits on the same table.
    assert!(envelope_check(&t, 0.05).passed);
    assert!(midpoint_defect(&t.grid, &t.convexified) <= 1e-12);
    let dc = double_conjugate_check(&t).unwrap();
    assert!(dc.passed, "{dc:?}");
    for (c, r) in t.convexified.iter().zip(&t.raw) {
        assert!(c <= r);
    }
}

#[test]
fn two_point_limit_for_free_medium() {
    let cfg = common::shipped("free_1d.toml");
    let t = common::effective(&cfg);
    let m = cfg.medium.build().unwrap();
    let w = sample_environment(&m, 0);
    let l = cfg.lattice().unwrap();
    let r = two_point_check(&m, &w, &t, &[1.0], &[0.0], 2.0, &[0.2, 0.1], &l, &[0.0]).unwrap();
    for e in &r.entries {
        assert!((e.limit - 0.25).abs() <= 1e-12);
        assert!((e.action - 0.25).abs() <= 0.05 * 0.25, "{e:?}");
    }
    let same = two_point_check(&m, &w, &t, &[0.5], &[0.5], 1.0, &[0.2], &l, &[0.0]).unwrap();
    assert!(same.entries[0].gap <= 1e-12);
}

#[test]
fn homogeneity_on_conformal_metric() {
    let m = metric_medium(MetricFamily::Conformal { dim: 2, amplitude: 0.5 }).unwrap();
    let grid = DirectionGrid::disk(2, 1.0, 0.25).unwrap();
    let l = Lattice::default_2d(2.75, 1.0);
    let opts = EstimateOptions {
        bases: vec![vec![0.0, 0.0], vec![0.5, 0.0]],
        ..Default::default()
    };
    let t = effective_lagrangian_table(&m, &grid, &[0], &[4, 8], &l, &opts).unwrap();
    let r = homogeneity_check(&t, &[1.0, -1.0]).unwrap();
    assert_eq!(r.defects[0], 0.0);
    assert!(r.defects[1] <= 0.05, "{r:?}");
    let free = make_periodic_medium(PeriodicSpec::free(2)).unwrap();
    let tf = effective_lagrangian_table(&free, &grid, &[0], &[4], &l, &EstimateOptions::default()).unwrap();
    assert!(homogeneity_check(&tf, &[2.0]).is_err());
}

/// At `dx = dt = 0.05` the velocity quantum is 1, so `L_bar` is the chord
/// interpolant of `h^2/2` between integers and misses 5% at half-integers.
/// The shipped lattice resolves it; kept as a record of the pinned resolution.
#[test]
#[ignore = "unattainable at a unit velocity quantum"]
fn free_closed_form_at_pinned_resolution() {
    let m = make_periodic_medium(PeriodicSpec::free(1)).unwrap();
    let l = Lattice {
        dim: 1,
        cells_per_unit: 20,
        steps_per_unit: 20,
        speed_cap: 4.5,
        radius: 80.0,
        quadrature_nodes: 4,
    };
    let grid = DirectionGrid::square(1, 2.0, 0.25).unwrap();
    let t = effective_lagrangian_table(&m, &grid, &[0], &[4, 8, 16], &l, &EstimateOptions::default()).unwrap();
    for k in 0..t.grid.len() {
        let h = t.grid.point(k)[0];
        let exact = 0.5 * h * h;
        assert!((t.convexified[k] - exact).abs() <= 0.05 * exact + 1e-12, "h {h}: {}", t.convexified[k]);
    }
}
