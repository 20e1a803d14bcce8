use proptest::prelude::*;

use vcc_core::bilevel::FeasibleSet;
use vcc_oracle::project_box_halfspace;

fn set_and_point() -> impl Strategy<Value = (FeasibleSet, Vec<f64>, Vec<f64>)> {
    (1usize..14)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0.0f64..5.0, n),
                0.0f64..1.0,
                prop::collection::vec(-6.0f64..10.0, n),
                prop::collection::vec(-6.0f64..10.0, n),
            )
        })
        .prop_map(|(upper, frac, v, w)| {
            let demand = frac * upper.iter().sum::<f64>();
            (FeasibleSet { upper, demand }, v, w)
        })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn projection_lands_in_the_set_and_is_idempotent((set, v, _w) in set_and_point()) {
        let p = set.project(&v);
        prop_assert!(set.contains(&p, 1e-9));
        prop_assert!(dist(&set.project(&p), &p) <= 1e-9);
    }

    #[test]
    fn projection_matches_a_generic_qp((set, v, _w) in set_and_point()) {
        let p = set.project(&v);
        let q = project_box_halfspace(&v, &set.upper, set.demand).unwrap();
        let gap = p.iter().zip(&q).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        prop_assert!(gap <= 1e-6, "gap {gap}");
    }

    #[test]
    fn projection_satisfies_the_obtuse_angle_condition((set, v, w) in set_and_point()) {
        let p = set.project(&v);
        let other = set.project(&w);
        let inner: f64 = v.iter().zip(&p).zip(&other).map(|((vi, pi), oi)| (vi - pi) * (oi - pi)).sum();
        prop_assert!(inner <= 1e-9 * (1.0 + dist(&v, &p) * dist(&other, &p)), "inner {inner}");
    }

    #[test]
    fn points_inside_are_fixed((set, v, _w) in set_and_point(), frac in 0.0f64..=1.0) {
        let inside: Vec<f64> = v.iter().zip(&set.upper).map(|(x, u)| x.clamp(0.0, *u)).collect();
        let set = FeasibleSet { demand: frac * inside.iter().sum::<f64>(), ..set };
        prop_assert_eq!(set.project(&inside), inside);
    }
}
