use proptest::prelude::*;

use coldq::coldq::{run, InitialPoint, ParamSchedule};
use coldq::exec::Exec;
use coldq::expert::initial_weights;
use coldq::generators::{GeneratorConfig, ThetaParams};
use coldq::harness::artifacts::fmt_f64;
use coldq::harness::plot::quantile;
use coldq::problem::{hinge, project, BoxSet, Loss};
use coldq::queue::DoublyBoundedQueue;
use coldq::solver::InnerSolverConfig;
use coldq::verify;

proptest! {
    #[test]
    fn queue_stays_between_floor_and_ceiling(
        gamma in 0.01f64..5.0,
        eta in 0.001f64..0.9,
        g in 0.1f64..10.0,
        steps in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..60),
    ) {
        prop_assume!(gamma < g / eta);
        let mut q = DoublyBoundedQueue::new(3, gamma, eta, g).unwrap();
        for v in steps {
            let violations: Vec<f64> = v.iter().map(|u| u * g).collect();
            q = q.update(&violations).unwrap();
            for value in q.values() {
                prop_assert!(gamma <= *value && *value <= g / eta);
            }
        }
    }

    #[test]
    fn floats_serialize_round_trip(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn initial_weights_form_a_distribution(m in 1usize..200) {
        let w = initial_weights(m);
        prop_assert_eq!(w.len(), m);
        prop_assert!(w.iter().all(|v| *v > 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_lands_in_the_box_and_is_idempotent(
        x in prop::collection::vec(-10.0f64..10.0, 4),
        lo in -3.0f64..0.0,
        width in 0.1f64..5.0,
    ) {
        let set = BoxSet::cube(4, lo, lo + width).unwrap();
        let p = project(&set, &x).unwrap().into_inner();
        prop_assert!(p.iter().all(|v| lo <= *v && *v <= lo + width));
        prop_assert_eq!(project(&set, &p).unwrap().into_inner(), p);
    }

    #[test]
    fn quantiles_are_ordered(mut v in prop::collection::vec(-1e6f64..1e6, 1..40)) {
        v.sort_by(f64::total_cmp);
        let qs: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|p| quantile(&v, *p)).collect();
        prop_assert!(qs.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(qs[0], v[0]);
        prop_assert_eq!(qs[4], v[v.len() - 1]);
    }

    #[test]
    fn loss_gradient_matches_finite_differences(
        center in prop::collection::vec(-2.0f64..2.0, 3),
        linear in prop::collection::vec(-2.0f64..2.0, 3),
        x in prop::collection::vec(-2.0f64..2.0, 3),
        scale in 0.0f64..3.0,
    ) {
        let loss = Loss::Isotropic { scale, center, linear };
        let g = loss.gradient(&x);
        for k in 0..3 {
            let h = 1e-6;
            let mut up = x.clone();
            let mut down = x.clone();
            up[k] += h;
            down[k] -= h;
            let fd = (loss.value(&up) - loss.value(&down)) / (2.0 * h);
            prop_assert!((fd - g[k]).abs() < 1e-5 * (1.0 + g[k].abs()));
        }
    }

    #[test]
    fn parallel_and_sequential_maps_agree(n in 0usize..300) {
        let f = |i: usize| (i as f64).sqrt().sin();
        prop_assert_eq!(Exec::Parallel.map_range(0..n, f), Exec::Sequential.map_range(0..n, f));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn coldq_runs_satisfy_queue_bounds_and_drift(seed in 0u64..1000, horizon in 2usize..80) {
        let stream = GeneratorConfig::LinearProg(ThetaParams::default()).build(seed, horizon).unwrap();
        let sched = ParamSchedule::convex_dynamic(stream.spec(), 0.5, 0.0).unwrap();
        let trace = run(stream.as_ref(), &sched, &InnerSolverConfig::default(), &InitialPoint::Center, seed).unwrap();
        prop_assert!(verify::check_lemma1(&trace).pass);
        prop_assert!(verify::check_lemma2(&trace, stream.as_ref()).unwrap().pass);
        let vio: f64 = trace.rounds.iter().map(|r| r.g.iter().copied().map(hinge).sum::<f64>()).sum();
        prop_assert!((vio - coldq::metrics::hard_violation(&trace)).abs() <= 1e-12 * (1.0 + vio));
    }
}
