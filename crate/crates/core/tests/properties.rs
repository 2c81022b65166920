mod common;

use proptest::prelude::*;

use moebius_core::catalog::{self, builtin_library};
use moebius_core::dsl::{parse_components, print_components};
use moebius_core::jets::Jet;
use moebius_core::moebius::{random_conformal_map, ComputeOptions, MoebiusInvariants};
use moebius_core::verify::{self, VerifyOptions};

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn jet_pythagoras_and_exp_log(x in -2.0f64..2.0, y in -2.0f64..2.0, z in 0.1f64..2.0) {
        let v = Jet::variables(&[x, y, z], 5).unwrap();
        let s = &(&v[0] * &v[1]) + &v[2];
        let one = &s.sin().square() + &s.cos().square();
        prop_assert!((one.value() - 1.0).abs() < 1e-12);
        prop_assert!(one.coeffs()[1..].iter().all(|c| c.abs() < 1e-10));
        let back = v[2].ln().unwrap().exp();
        for (a, b) in back.coeffs().iter().zip(v[2].coeffs()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn jet_product_rule(x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let v = Jet::variables(&[x, y], 4).unwrap();
        let f = v[0].sin();
        let g = &v[1].exp() * &v[0];
        let lhs = (&f * &g).partial(0).unwrap();
        let rhs = &(&f.partial(0).unwrap() * &g.truncate(3)) + &(&f.truncate(3) * &g.partial(0).unwrap());
        for (a, b) in lhs.coeffs().iter().zip(rhs.coeffs()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_points_stay_in_box(seed in any::<u64>(), n in 1usize..20) {
        let spec = builtin_library().resolve("cone_clifford").unwrap();
        let pts = verify::sample_points(&spec, n, seed);
        prop_assert_eq!(pts.len(), n);
        prop_assert_eq!(&pts, &verify::sample_points(&spec, n, seed));
        for p in &pts {
            for (x, (lo, hi)) in p.iter().zip(&spec.sample_box) {
                prop_assert!(*lo <= *x && *x <= *hi);
            }
        }
    }
}

proptest! {
    #![proptest_config(cfg(12))]

    #[test]
    fn normalizations_hold_everywhere(seed in 0u64..1000, u in prop::array::uniform3(-0.25f64..0.25)) {
        let spec = catalog::random_graph(seed).unwrap();
        let inv = MoebiusInvariants::compute(&spec, &u, ComputeOptions::order(4));
        prop_assume!(inv.is_ok());
        let inv = inv.unwrap();
        let b = inv.frame.b;
        prop_assert!((b[0] + b[1] + b[2]).abs() < 1e-9);
        prop_assert!((b.iter().map(|x| x * x).sum::<f64>() - 2.0 / 3.0).abs() < 1e-9);
        let s = verify::pointwise_scalars(&inv).unwrap();
        prop_assert!((s.tr_a - (1.0 / 6.0 + s.scalar / 4.0)).abs() < 1e-7);
        prop_assert!(s.scalar * s.scalar / 3.0 - s.ric_norm2 <= 1e-10);
    }

    #[test]
    fn universal_identities_on_random_graphs(seed in 0u64..10_000, point_seed in any::<u64>()) {
        let spec = catalog::random_graph(seed).unwrap();
        let r = verify::check_universal(&spec, &verify::sample_points(&spec, 2, point_seed), &VerifyOptions::default());
        prop_assert!(r.pass, "{:?}", r.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
    }

    #[test]
    fn moebius_invariance_for_random_maps(graph in 0u64..1000, map in any::<u64>()) {
        let spec = catalog::random_graph(graph).unwrap();
        let shift = verify::safe_shift(&spec).unwrap();
        let maps = random_conformal_map(map, shift);
        let r = verify::check_moebius_invariance(&spec, &maps, &verify::sample_points(&spec, 3, map), &VerifyOptions::default()).unwrap();
        prop_assert!(r.pass, "{:?}", r.checks);
    }

    #[test]
    fn gap_bound_on_closed_form_families(family in 0usize..3, seed in any::<u64>()) {
        let name = ["cylinder_pseudosphere", "cone_clifford", "rotational_hyperbolic_cone"][family];
        let spec = builtin_library().resolve(name).unwrap();
        for p in verify::sample_points(&spec, 3, seed) {
            let b = MoebiusInvariants::compute(&spec, &p, ComputeOptions::order(2)).unwrap().frame.b;
            prop_assert!((b[2] - b[0]).powi(2) < 2.0);
        }
    }

    #[test]
    fn printed_components_reparse(seed in 0u64..1000) {
        let spec = catalog::random_graph(seed).unwrap();
        let text = print_components(&spec.components);
        let back = parse_components(&text).unwrap();
        let p = [0.1, -0.05, 0.2];
        for (a, b) in spec.components.iter().zip(&back) {
            let x = a.eval_f64(&p, &spec.params).unwrap();
            let y = b.eval_f64(&p, &spec.params).unwrap();
            prop_assert!((x - y).abs() <= 1e-15 * x.abs().max(1.0));
        }
    }
}
