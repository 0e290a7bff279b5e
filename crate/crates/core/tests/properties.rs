use proptest::prelude::*;

use ranked_core::analytic::{build_survival_table, exact_moment, MomentMethod};
use ranked_core::asymptotics::{body_estimate, t_sum_exact, tail_bound, BodyTailSplit};
use ranked_core::ModelParams;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn table_invariants(lambda in 0.05f64..500.0, l_max in 0usize..600) {
        let params = ModelParams::new(lambda).unwrap();
        let t = build_survival_table(params, l_max);
        prop_assert_eq!(t.d()[0], 1.0);
        prop_assert_eq!(t.survival()[0], 1.0);
        let finite = t.overflow_index().unwrap_or(t.l_max() + 1);
        for l in 1..finite {
            prop_assert_eq!(t.d()[l], 1.0 + (l as f64 / lambda) * t.d()[l - 1]);
            prop_assert!(t.d()[l] > t.d()[l - 1]);
            prop_assert!(t.survival()[l] < t.survival()[l - 1]);
            prop_assert!(t.survival()[l] > 0.0 && t.survival()[l] <= 1.0);
            prop_assert!((t.survival()[l] * t.d()[l] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn survival_nondecreasing_in_load(lambda in 0.1f64..300.0, bump in 1.0001f64..3.0, l in 0usize..400) {
        let lo = build_survival_table(ModelParams::new(lambda).unwrap(), l);
        let hi = build_survival_table(ModelParams::new(lambda * bump).unwrap(), l);
        prop_assert!(hi.survival()[l] >= lo.survival()[l]);
    }

    #[test]
    fn first_moment_is_survival_sum(lambda in 0.1f64..2000.0) {
        let params = ModelParams::new(lambda).unwrap();
        let eps = 1e-13 * lambda.max(1.0);
        let m1 = exact_moment(params, 1, eps, MomentMethod::PartialSummation).unwrap().exact;
        let t0 = t_sum_exact(params, 0, eps).unwrap();
        prop_assert!(((m1 - t0) / m1).abs() < 1e-10);
        let m2 = exact_moment(params, 2, eps * lambda.max(1.0), MomentMethod::DirectPmf).unwrap().exact;
        prop_assert!(m2 >= m1 * m1);
        prop_assert!(m1 >= 1.0);
    }

    #[test]
    fn body_and_tail_partition_indices(lambda in 9.0f64..5000.0, frac in 0.0f64..2.0) {
        let params = ModelParams::new(lambda).unwrap();
        let split = BodyTailSplit::new(params);
        prop_assert!((split.s * split.s - lambda).abs() <= 1e-14 * lambda);
        let l = (frac * lambda) as usize;
        let body = body_estimate(params, l).is_ok();
        let tail = tail_bound(params, l).is_ok();
        prop_assert!(body || tail);
        prop_assert_eq!(body && tail, l as f64 == split.l0);
    }
}
