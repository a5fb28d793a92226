use maxgauss::bounds::{epsilon_from, l_n, lemma3_bound, Estimate, ProfileSource};
use maxgauss::simulate::{dkw_two_sample_threshold, kolmogorov_distance};
use maxgauss::smoothmax::{
    f_third_sum_dense, f_third_sum_factored, psi, psi_grad, psi_hessian, psi_third,
};
use maxgauss::tune::{optimize, Objective, SearchConfig, TuneRequest};
use maxgauss::{BorelSet, Interval, MomentProfile, SmoothIndicator, SmoothingParams};
use proptest::prelude::*;

fn params(d: usize) -> impl Strategy<Value = SmoothingParams> {
    (0.1f64..40.0, 1.2f64..8.0, 0.0f64..=1.0)
        .prop_map(move |(gamma, u, iota)| SmoothingParams::new(gamma, u / gamma, iota, d).unwrap())
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-20.0f64..20.0, d)
}

fn borel_set() -> impl Strategy<Value = BorelSet> {
    prop::collection::vec((-10.0f64..10.0, 0.0f64..4.0), 1..5).prop_map(|ivs| {
        BorelSet::from_unsorted(
            ivs.into_iter()
                .map(|(a, w)| Interval::new(a, a + w))
                .collect(),
        )
        .unwrap()
    })
}

fn profile(x3: f64, y3: f64, c: f64, d: usize, iota: f64) -> MomentProfile {
    MomentProfile {
        third_max_x: Estimate::exact(x3),
        third_max_y: Estimate::exact(y3),
        c_sum: Estimate::exact(c),
        n: 4,
        d,
        iota,
        source: ProfileSource::Analytic,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn smooth_max_is_translation_equivariant(
        (p, x) in (1usize..12).prop_flat_map(|d| (params(d), point(d))),
        c in -50.0f64..50.0,
    ) {
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let lhs = psi(&p, &shifted).unwrap();
        let rhs = psi(&p, &x).unwrap() + c;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn smooth_max_is_monotone(
        (p, x, k) in (1usize..12).prop_flat_map(|d| (params(d), point(d), 0..d)),
        bump in 0.0f64..5.0,
    ) {
        let mut y = x.clone();
        y[k] += bump;
        prop_assert!(psi(&p, &y).unwrap() >= psi(&p, &x).unwrap());
    }

    #[test]
    fn softmax_is_a_probability_vector(
        (p, x) in (1usize..30).prop_flat_map(|d| (params(d), point(d))),
    ) {
        let pi = psi_grad(&p, &x).unwrap().pi;
        prop_assert!(pi.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hessian_is_symmetric_with_zero_row_sums(
        (p, x) in (1usize..10).prop_flat_map(|d| (params(d), point(d))),
    ) {
        let h = psi_hessian(&p, &x).unwrap();
        let scale = p.gamma();
        for j in 0..x.len() {
            prop_assert!(h.row(j).sum().abs() <= 1e-12 * scale);
            for k in 0..x.len() {
                prop_assert_eq!(h[(j, k)], h[(k, j)]);
            }
        }
    }

    #[test]
    fn third_tensor_is_symmetric_with_zero_fibre_sums(
        (p, x) in (1usize..7).prop_flat_map(|d| (params(d), point(d))),
    ) {
        let t = psi_third(&p, &x).unwrap();
        let d = x.len();
        let scale = p.gamma() * p.gamma();
        for j in 0..d {
            for k in 0..d {
                let fibre: f64 = (0..d).map(|l| t.get(j, k, l)).sum();
                prop_assert!(fibre.abs() <= 1e-12 * scale);
                for l in 0..d {
                    let v = t.get(j, k, l);
                    prop_assert!((v - t.get(k, j, l)).abs() <= 1e-14 * scale);
                    prop_assert!((v - t.get(l, k, j)).abs() <= 1e-14 * scale);
                }
            }
        }
    }

    #[test]
    fn factored_third_sum_matches_dense(
        (p, x) in (1usize..24).prop_flat_map(|d| (params(d), prop::collection::vec(-1.0f64..1.0, d))),
        t in -1.0f64..1.0,
    ) {
        let g = SmoothIndicator::build(&BorelSet::at_most(t), &p).unwrap();
        let x: Vec<f64> = x.iter().map(|v| v * 3.0 * p.delta()).collect();
        let dense = f_third_sum_dense(&p, &g, &x).unwrap();
        let fact = f_third_sum_factored(&p, &g, &x).unwrap();
        prop_assert!((dense - fact).abs() <= 1e-10 * (1.0 + dense.abs()), "{dense} {fact}");
    }

    #[test]
    fn smoothed_indicator_is_sandwiched(
        set in borel_set(),
        p in params(1),
        ts in prop::collection::vec(-20.0f64..20.0, 64),
    ) {
        let g = SmoothIndicator::build(&set, &p).unwrap();
        let big = set.enlarge(3.0 * p.delta()).unwrap();
        for t in ts {
            let v = g.value(t, 0);
            prop_assert!((0.0..=1.0).contains(&v));
            if set.contains(t) {
                prop_assert_eq!(v, 1.0);
            }
            if !big.contains(t) {
                prop_assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn enlargement_is_monotone_and_additive(
        set in borel_set(),
        s in 0.0f64..3.0,
        t in 0.0f64..3.0,
        probes in prop::collection::vec(-20.0f64..20.0, 64),
    ) {
        let a_s = set.enlarge(s).unwrap();
        prop_assert!(set.is_subset_of(&a_s));
        let twice = a_s.enlarge(t).unwrap();
        let once = set.enlarge(s + t).unwrap();
        for x in probes {
            // avoid points within rounding of a boundary
            let near = once.intervals().iter().any(|iv| (x - iv.lo).abs() < 1e-9 || (x - iv.hi).abs() < 1e-9);
            if !near {
                prop_assert_eq!(twice.contains(x), once.contains(x));
            }
        }
    }

    #[test]
    fn epsilon_decreases_beyond_the_diagonal(u in 1.0001f64..20.0, step in 1e-3f64..2.0) {
        let e1 = epsilon_from(u, 1.0).unwrap();
        let e2 = epsilon_from(u + step, 1.0).unwrap();
        prop_assert!(e2 < e1 && e1 < 1.0 && e2 >= 0.0);
    }

    #[test]
    fn lemma3_inequality_holds(a in 1.0f64..1e6, x in 0.0f64..1e3, iota in 0.0f64..=1.0) {
        let (lhs, rhs) = lemma3_bound(a, x, iota).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }

    #[test]
    fn bound_is_the_smaller_term_and_monotone(
        p in params(5),
        x3 in 0.0f64..100.0,
        y3 in 0.0f64..100.0,
        c in 0.0f64..100.0,
        extra in 0.0f64..10.0,
    ) {
        let r = l_n(&p, &profile(x3, y3, c, 5, p.iota())).unwrap();
        prop_assert_eq!(r.l_n, r.term1.min(r.term2));
        prop_assert!(r.prob_bound <= 1.0 && r.prob_bound >= 0.0);
        prop_assert!((r.radius - (p.c_gamma() + 3.0 * p.delta())).abs() < 1e-12 * r.radius);
        let larger = l_n(&p, &profile(x3 + extra, y3, c + extra, 5, p.iota())).unwrap();
        prop_assert!(larger.l_n >= r.l_n);
    }

    #[test]
    fn kolmogorov_distance_is_a_symmetric_metric(
        u in prop::collection::vec(-5.0f64..5.0, 1..60),
        v in prop::collection::vec(-5.0f64..5.0, 1..60),
    ) {
        let duv = kolmogorov_distance(&u, &v).unwrap();
        prop_assert_eq!(duv, kolmogorov_distance(&v, &u).unwrap());
        prop_assert!((0.0..=1.0).contains(&duv));
        prop_assert_eq!(kolmogorov_distance(&u, &u).unwrap(), 0.0);
    }

    #[test]
    fn dkw_threshold_shrinks_with_sample_size(m in 10usize..100_000, k in 2usize..10, alpha in 1e-4f64..0.5) {
        prop_assert!(dkw_two_sample_threshold(m * k, m * k, alpha) < dkw_two_sample_threshold(m, m, alpha));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn tuned_parameters_are_feasible(
        x3 in 0.1f64..200.0,
        y3 in 0.1f64..200.0,
        c in 0.1f64..500.0,
        d in 1usize..200,
        budget in 0.05f64..0.9,
    ) {
        let objective = Objective::MinimizeRadiusGivenBudget { budget };
        let req = TuneRequest {
            profile: profile(x3, y3, c, d, 0.5),
            d,
            objective,
            search: SearchConfig::default(),
        };
        let out = optimize(&req).unwrap();
        prop_assert!(out.gamma * out.delta > 1.0);
        prop_assert!(out.report.raw_bound <= budget);
        prop_assert!(out.objective_value <= out.grid_best_value);
    }
}
