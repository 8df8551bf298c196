use std::f64::consts::TAU;

use hjhomog::action::{
    minimal_action, read_action_table, rescaled_action, verify_cone_lipschitz, write_action_table, ActionEngine,
    ConeSlices, Lattice,
};
use hjhomog::media::{
    make_periodic_medium, make_quasiperiodic_medium, sample_environment, Medium, PeriodicSpec, QuasiPeriodicBase,
};
use hjhomog::stablenorm::{metric_medium, MetricFamily};
use hjhomog::Error;

fn lattice(cells: u32, steps: u32, cap: f64, radius: f64) -> Lattice {
    Lattice {
        dim: 1,
        cells_per_unit: cells,
        steps_per_unit: steps,
        speed_cap: cap,
        radius,
        quadrature_nodes: 4,
    }
}

fn free() -> Medium {
    make_periodic_medium(PeriodicSpec::free(1)).unwrap()
}

fn cosine() -> Medium {
    make_periodic_medium(PeriodicSpec::cosine(1, 1.0)).unwrap()
}

fn quasi() -> Medium {
    make_quasiperiodic_medium(QuasiPeriodicBase { amplitude: 1.0 }, vec![(5f64.sqrt() - 1.0) / 2.0]).unwrap()
}

#[test]
fn free_straight_line_action() {
    let m = free();
    let w = sample_environment(&m, 0);
    let l = lattice(50, 50, 2.0, 5.0);
    let v = minimal_action(&m, &w, &[0.0], &[1.0], 1.0, &l).unwrap();
    assert!((v - 0.5).abs() <= 0.015, "{v}");
    for t in [0.5, 1.0, 2.0] {
        assert_eq!(minimal_action(&m, &w, &[0.0], &[0.0], t, &l).unwrap(), 0.0);
    }
}

#[test]
fn rescaled_identity_and_free_scaling() {
    let m = free();
    let w = sample_environment(&m, 0);
    let l = lattice(160, 8, 3.0, 26.0);
    let a = minimal_action(&m, &w, &[0.0], &[0.5], 1.0, &l).unwrap();
    let b = rescaled_action(&m, &w, 1.0, &[0.0], &[0.5], 1.0, &l).unwrap();
    assert_eq!(a, b);
    // Macroscopic target x = 0.5 sits at micro distance 0.5 / eps.
    for eps in [0.5, 0.25, 0.125] {
        let v = rescaled_action(&m, &w, eps, &[0.0], &[0.5 / eps], 1.0, &l).unwrap();
        assert!((v - 0.125).abs() <= 0.03 * 0.125, "eps {eps}: {v}");
    }
    assert!(matches!(
        rescaled_action(&m, &w, 0.0, &[0.0], &[0.0], 1.0, &l),
        Err(Error::Lattice(_))
    ));
}

#[test]
fn cone_and_boundary_errors_are_explicit() {
    let m = free();
    let w = sample_environment(&m, 0);
    let l = lattice(10, 5, 2.0, 2.0);
    match minimal_action(&m, &w, &[0.0], &[3.0], 1.0, &l) {
        Err(Error::ConeViolation { required, .. }) => assert_eq!(required, 3.0),
        other => panic!("{other:?}"),
    }
    match minimal_action(&m, &w, &[0.0], &[0.2], 4.0, &l) {
        Err(Error::BoundaryContact { required }) => assert!(required > 2.0),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        minimal_action(&m, &w, &[0.0], &[0.0], 0.3, &l),
        Err(Error::TimeAlignment { .. })
    ));
}

/// `phi(x, z, s + t) <= phi(x, y, s) + phi(y, z, t)` over every aligned triple.
#[test]
fn discrete_subadditivity_is_exhaustive() {
    let m = cosine();
    let w = sample_environment(&m, 0);
    let l = lattice(10, 5, 2.0, 6.0);
    let e = ActionEngine::new(&m, &w, &l).unwrap();
    let (s, t) = (3usize, 4usize);
    let sources = -10..=10i64;
    let from: Vec<_> = sources.clone().map(|x| e.action_tables([x, 0], &[s, s + t]).unwrap()).collect();
    let mut checked = 0;
    for (xi, x) in sources.clone().enumerate() {
        for y in -30..=30i64 {
            let a = from[xi][0].value([y, 0]);
            if !a.is_finite() {
                continue;
            }
            let tail = e.action_tables([y, 0], &[t]).unwrap();
            for z in -40..=40i64 {
                let b = tail[0].value([z, 0]);
                let whole = from[xi][1].value([z, 0]);
                if b.is_finite() {
                    assert!(whole <= a + b + 1e-12, "x {x} y {y} z {z}: {whole} > {a} + {b}");
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 10_000, "{checked}");
}

#[test]
fn step_is_monotone_and_commutes_with_constants() {
    let m = cosine();
    let w = sample_environment(&m, 0);
    let l = lattice(20, 5, 2.0, 3.0);
    let e = ActionEngine::new(&m, &w, &l).unwrap();
    let base = e.datum(|x| (x[0] * 1.7).sin());
    let above = e.datum(|x| (x[0] * 1.7).sin() + 0.3 * (1.0 + (TAU * x[0] * 0.37).cos()));
    let (a, b) = (e.step(&base).unwrap(), e.step(&above).unwrap());
    let ea = e.step(&base.add_constant(2.5)).unwrap();
    let bx = a.exact_box();
    let (va, vb, vc) = (
        a.values_in(bx).unwrap(),
        b.values_in(bx).unwrap(),
        ea.values_in(bx).unwrap(),
    );
    for k in 0..va.len() {
        assert!(va[k] <= vb[k], "monotonicity at {k}");
        assert!((vc[k] - va[k] - 2.5).abs() <= 1e-12, "constant at {k}");
    }
}

#[test]
fn semigroup_from_point_mass() {
    let m = quasi();
    let w = sample_environment(&m, 3);
    let l = lattice(20, 5, 2.0, 5.0);
    let e = ActionEngine::new(&m, &w, &l).unwrap();
    let d = e.delta([0, 0]).unwrap();
    let split = e.march(&e.march(&d, 4).unwrap(), 6).unwrap();
    let whole = e.march(&d, 10).unwrap();
    let b = whole.exact_box();
    let (p, q) = (split.values_in(b).unwrap(), whole.values_in(b).unwrap());
    for (x, y) in p.iter().zip(&q) {
        assert!(x == y || (x - y).abs() <= 1e-12, "{x} vs {y}");
    }
}

#[test]
fn result_is_independent_of_worker_count() {
    let m = quasi();
    let w = sample_environment(&m, 1);
    let l = lattice(40, 8, 2.5, 6.0);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let e = ActionEngine::new(&m, &w, &l).unwrap();
            let t = e.action_tables([0, 0], &[8, 16]).unwrap();
            t.iter()
                .flat_map(|t| t.field.raw().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
                .collect::<Vec<u64>>()
        })
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

/// `t theta_L(d / t) - slack <= phi <= t Theta_L(d / t) + slack` on the whole cone.
#[test]
fn action_sandwich() {
    for (m, slack_c) in [(cosine(), 1.0), (quasi(), 1.0), (free(), 1.0)] {
        let w = sample_environment(&m, 2);
        let l = lattice(40, 8, 2.5, 8.0);
        let (lower, upper) = m.envelope().lagrangian_bounds().unwrap();
        let e = ActionEngine::new(&m, &w, &l).unwrap();
        let horizons = [8usize, 16, 24];
        for t in e.action_tables([0, 0], &horizons).unwrap() {
            let time = t.horizon();
            let slack = slack_c * (l.dx() + l.dt()) * time;
            let b = t.field.support_box();
            for i in b.lo[0]..=b.hi[0] {
                let v = t.value([i, 0]);
                if !v.is_finite() {
                    continue;
                }
                let d = (i as f64 * l.dx()).abs();
                let lo = time * lower.eval(d / time);
                let hi = time * upper.eval(d / time);
                assert!(v >= lo - slack && v <= hi + slack, "t {time} x {i}: {lo} <= {v} <= {hi}");
            }
        }
    }
}

#[test]
fn conformal_metric_matches_geodesic_oracle() {
    // In 1D the geodesic distance of c(x) = 1 + a cos(2 pi x) is
    // x + a sin(2 pi x) / (2 pi), and phi = d^2 / t.
    let a = 0.5;
    let m = metric_medium(MetricFamily::Conformal { dim: 1, amplitude: a }).unwrap();
    let w = sample_environment(&m, 0);
    let l = lattice(160, 8, 2.5, 6.0);
    for (x, t) in [(1.0, 2.0), (0.5, 1.0), (1.25, 2.0)] {
        let d: f64 = x + a * (TAU * x).sin() / TAU;
        let v = minimal_action(&m, &w, &[0.0], &[x], t, &l).unwrap();
        let oracle = d * d / t;
        assert!((v - oracle).abs() <= 0.05 * oracle, "x {x} t {t}: {v} vs {oracle}");
    }
}

#[test]
fn free_lipschitz_constant_is_bounded() {
    let m = free();
    let w = sample_environment(&m, 0);
    let l = lattice(40, 8, 2.0, 6.0);
    let e = ActionEngine::new(&m, &w, &l).unwrap();
    let tables = e.action_tables([0, 0], &[8, 9, 10, 12, 16]).unwrap();
    let report = verify_cone_lipschitz(
        &[ConeSlices {
            epsilon: 1.0,
            seed: 0,
            tables,
        }],
        1.0,
        0.2,
    );
    let c = report.entries[0].lip_x;
    assert!(c <= 2.0 + 1.0, "{c}");
}

#[test]
fn shifting_the_potential_shifts_the_action_linearly() {
    let base = PeriodicSpec::cosine(1, 1.0);
    let shifted = PeriodicSpec { shift: 0.75, ..base.clone() };
    let (m0, m1) = (make_periodic_medium(base).unwrap(), make_periodic_medium(shifted).unwrap());
    let l = lattice(20, 5, 2.0, 4.0);
    let (w0, w1) = (sample_environment(&m0, 0), sample_environment(&m1, 0));
    for (x, t) in [(0.5, 1.0), (-1.0, 2.0), (0.0, 1.6)] {
        let a = minimal_action(&m0, &w0, &[0.0], &[x], t, &l).unwrap();
        let b = minimal_action(&m1, &w1, &[0.0], &[x], t, &l).unwrap();
        // H + c  <=>  L - c
        assert!((b - (a - 0.75 * t)).abs() <= 1e-12, "{a} {b}");
    }
}

#[test]
fn cache_round_trip_is_bitwise() {
    let m = quasi();
    let w = sample_environment(&m, 5);
    let l = lattice(20, 5, 2.0, 4.0);
    let e = ActionEngine::new(&m, &w, &l).unwrap();
    let t = e.action_tables([0, 0], &[10]).unwrap().remove(0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.hjact");
    write_action_table(&path, &m, &t).unwrap();
    let back = read_action_table(&path, &e).unwrap();
    let b = t.field.support_box();
    for i in b.lo[0]..=b.hi[0] {
        assert_eq!(t.value([i, 0]).to_bits(), back.value([i, 0]).to_bits());
    }
    // A different environment must not accept the file.
    let w2 = sample_environment(&m, 6);
    let e2 = ActionEngine::new(&m, &w2, &l).unwrap();
    assert!(read_action_table(&path, &e2).is_err());
}
