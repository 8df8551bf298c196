use proptest::prelude::*;

use hjhomog::action::{ActionEngine, Lattice};
use hjhomog::effective::{lower_convex_envelope, midpoint_defect, phi_map, DirectionGrid};
use hjhomog::media::{make_periodic_medium, make_quasiperiodic_medium, sample_environment, PeriodicSpec, QuasiPeriodicBase, Radial};
use hjhomog::solver::{minimizer_radius, Modulus};

fn small(dim: usize) -> Lattice {
    Lattice {
        dim,
        cells_per_unit: 10,
        steps_per_unit: 5,
        speed_cap: 2.0,
        radius: 2.0,
        quadrature_nodes: 3,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rounding_map_remainder(eps in 0.01f64..1.0, a in -10.0f64..10.0, b in -10.0f64..10.0) {
        let z = phi_map(eps, &[a, b]);
        let r = ((eps * z[0] as f64 - a).powi(2) + (eps * z[1] as f64 - b).powi(2)).sqrt();
        prop_assert!(r <= 2.0 * eps);
    }

    #[test]
    fn step_is_monotone_and_shift_equivariant(
        base in prop::collection::vec(-2.0f64..2.0, 41),
        bump in prop::collection::vec(0.0f64..1.0, 41),
        c in -5.0f64..5.0,
        amplitude in 0.0f64..1.5,
    ) {
        let m = make_periodic_medium(PeriodicSpec::cosine(1, amplitude)).unwrap();
        let w = sample_environment(&m, 0);
        let e = ActionEngine::new(&m, &w, &small(1)).unwrap();
        let at = |v: &Vec<f64>, x: f64| v[((x * 10.0).round() as i64 + 20) as usize];
        let f = e.datum(|x| at(&base, x[0]));
        let g = e.datum(|x| at(&base, x[0]) + at(&bump, x[0]));
        let (sf, sg, sc) = (e.step(&f).unwrap(), e.step(&g).unwrap(), e.step(&f.add_constant(c)).unwrap());
        let b = sf.exact_box();
        let (vf, vg, vc) = (sf.values_in(b).unwrap(), sg.values_in(b).unwrap(), sc.values_in(b).unwrap());
        for k in 0..vf.len() {
            prop_assert!(vf[k] <= vg[k]);
            prop_assert!((vc[k] - vf[k] - c).abs() <= 1e-12);
        }
    }

    #[test]
    fn aligned_subadditivity(seed in 0u64..1000, x in -5i64..=5, y in -8i64..=8, s in 1usize..5, t in 1usize..5) {
        let alpha = (5f64.sqrt() - 1.0) / 2.0;
        let m = make_quasiperiodic_medium(QuasiPeriodicBase { amplitude: 1.0 }, vec![alpha]).unwrap();
        let w = sample_environment(&m, seed);
        let l = Lattice { radius: 6.0, ..small(1) };
        let e = ActionEngine::new(&m, &w, &l).unwrap();
        let first = e.action_tables([x, 0], &[s, s + t]).unwrap();
        let second = e.action_tables([y, 0], &[t]).unwrap().remove(0);
        let a = first[0].value([y, 0]);
        prop_assume!(a.is_finite());
        for z in -40..=40 {
            let b = second.value([z, 0]);
            if b.is_finite() {
                prop_assert!(first[1].value([z, 0]) <= a + b + 1e-12);
            }
        }
    }

    #[test]
    fn envelope_is_convex_minorant_and_idempotent(values in prop::collection::vec(-3.0f64..3.0, 17)) {
        let grid = DirectionGrid::square(1, 2.0, 0.25).unwrap();
        let env = lower_convex_envelope(&grid, &values).unwrap();
        for (e, v) in env.iter().zip(&values) {
            prop_assert!(e <= v);
        }
        prop_assert!(midpoint_defect(&grid, &env) <= 1e-12);
        let again = lower_convex_envelope(&grid, &env).unwrap();
        for (a, b) in again.iter().zip(&env) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn envelope_2d_is_convex_minorant(values in prop::collection::vec(-3.0f64..3.0, 25)) {
        let grid = DirectionGrid::square(2, 1.0, 0.5).unwrap();
        prop_assume!(grid.len() == values.len());
        let env = lower_convex_envelope(&grid, &values).unwrap();
        for (e, v) in env.iter().zip(&values) {
            prop_assert!(*e <= v + 1e-12);
        }
        prop_assert!(midpoint_defect(&grid, &env) <= 1e-9);
    }

    #[test]
    fn linear_majorant_dominates(slope in 0.0f64..5.0, cap in 0.01f64..5.0, delta in 1e-4f64..2.0, r in 0.0f64..20.0) {
        for m in [Modulus { slope, cap }, Modulus { slope, cap: f64::INFINITY }] {
            let a = m.linear_majorant(delta);
            prop_assert!(m.eval(r) <= a * r + delta + 1e-12);
        }
    }

    #[test]
    fn radius_grows_with_time(slope in 0.0f64..3.0, quad in 0.1f64..2.0, c in 0.0f64..2.0, t in 0.01f64..4.0) {
        let sigma = Modulus { slope, cap: f64::INFINITY };
        let lower = Radial::quadratic(quad, -c);
        let upper = Radial::quadratic(quad, c);
        let r1 = minimizer_radius(&sigma, &lower, &upper, t);
        let r2 = minimizer_radius(&sigma, &lower, &upper, 2.0 * t);
        prop_assert!(r1.is_finite() && r1 > 0.0);
        prop_assert!(r2 >= r1);
    }

    #[test]
    fn fenchel_young(quad in 0.05f64..3.0, c in -2.0f64..2.0, r in 0.0f64..10.0, s in 0.0f64..10.0) {
        let f = Radial::quadratic(quad, c);
        let g = f.conjugate().unwrap();
        prop_assert!(f.eval(r) + g.eval(s) >= r * s - 1e-9 * (1.0 + r * s));
    }
}
