use proptest::prelude::*;

use collabq::model::enumerate_states;
use collabq::{policies, solver, SystemParams};

fn params() -> impl Strategy<Value = SystemParams> {
    (1u32..=4, 0.2f64..4.0, 0.2f64..4.0, 0.05f64..3.0, 0.05f64..3.0, 0.05f64..3.0)
        .prop_flat_map(|(c1, mu1, mu2, h0, h1, h2)| {
            (1u32..=c1).prop_map(move |c2| SystemParams::new(c1, c2, mu1, mu2, h0, h1, h2).unwrap())
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn optimal_dominates_every_fixed_rule(p in params()) {
        let opt = solver::solve_optimal(&p, 12);
        for id in ["heuristic", "pi1", "pi2", "pi3", "pi4", "tpi2"] {
            let pol = policies::policy_by_id(&p, id, None).unwrap();
            let table = solver::solve_under_policy(&p, &pol, 12).unwrap();
            for s in enumerate_states(&p, 12) {
                let (o, v) = (opt.get(s).unwrap(), table.get(s).unwrap());
                prop_assert!(o <= v + 1e-9 * (1.0 + v.abs()), "{id} at {s}: {o} > {v}");
            }
        }
    }

    #[test]
    fn values_grow_with_queue(p in params()) {
        let opt = solver::solve_optimal(&p, 10);
        for s in enumerate_states(&p, 9) {
            let next = collabq::State::new(s.i + 1, s.k, s.l);
            if next.is_member(&p) {
                prop_assert!(opt.get(next).unwrap() > opt.get(s).unwrap());
            }
        }
    }

    #[test]
    fn diff_recursion_holds(p in params()) {
        let opt = solver::solve_optimal(&p, 15);
        let d = solver::diff(&opt).unwrap();
        let report = solver::recursion_check(&p, &d);
        prop_assert!(report.passes(1e-9), "{report:?}");
    }
}
