mod common;

use common::*;
use proptest::prelude::*;
use tep_jcc::drjcc::{oos_probability, JccScheme};
use tep_jcc::solver::mps::{read_mps, write_mps};
use tep_jcc::solver::SolveStatus;

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn sla_solution_is_exactly_feasible(seed in 0u64..1_000_000, eps in 0.05f64..0.45) {
        let p = random_problem(seed, 10, |_, _| eps);
        let n = p.instance.samples.len();
        let (st, _, x) = solve(&p, &JccScheme::Sla { kappa: vec![1.0; n] });
        prop_assert_eq!(st, SolveStatus::Optimal);
        prop_assert!(exact_margin_oracle(&p.instance, &x) >= -1e-6);
    }

    #[test]
    fn larger_radius_never_lowers_the_minimum(seed in 0u64..1_000_000, eps in 0.05f64..0.45, grow in 1.0f64..1.5) {
        let p = random_problem(seed, 10, |_, _| eps);
        let n = p.instance.samples.len();
        let mut q = p.clone();
        q.instance.theta *= grow;
        let (s1, o1, _) = solve(&p, &JccScheme::Sla { kappa: vec![1.0; n] });
        let (s2, o2, _) = solve(&q, &JccScheme::Sla { kappa: vec![1.0; n] });
        prop_assert_eq!(s1, SolveStatus::Optimal);
        if s2 == SolveStatus::Optimal {
            prop_assert!(o2.unwrap() >= o1.unwrap() - 1e-7);
        }
    }

    #[test]
    fn quantile_rows_are_valid_for_la(seed in 0u64..1_000_000, eps in 0.05f64..0.45) {
        // every LA point satisfies the strengthening rows
        let p = random_problem(seed, 10, |_, _| eps);
        let inst = &p.instance;
        let n = inst.samples.len();
        let (st, _, x) = solve(&p, &JccScheme::La { kappa: vec![1.0; n] });
        prop_assert_eq!(st, SolveStatus::Optimal);
        let k = (inst.eps * n as f64 + 1e-9).floor() as usize;
        let margin = exact_margin_oracle(inst, &x);
        prop_assert!(margin >= -1e-6);
        for r in &inst.rows {
            let mut bx: Vec<f64> = inst.samples.iter().map(|s| r.b.iter().zip(s).map(|(a, b)| a * b).sum()).collect();
            bx.sort_by(f64::total_cmp);
            let ax: f64 = r.a.iter().zip(&x).map(|(a, b)| a * b).sum();
            // s >= theta / eps at any certificate, so q + d - a x >= 0
            prop_assert!(bx[k] + r.d - ax >= -1e-6);
        }
    }

    #[test]
    fn training_reliability_meets_eps(seed in 0u64..1_000_000, eps in 0.05f64..0.45) {
        let p = random_problem(seed, 10, |_, _| eps);
        let n = p.instance.samples.len();
        let (_, _, x) = solve(&p, &JccScheme::Sla { kappa: vec![1.0; n] });
        let rate = oos_probability(&p.instance, &x, &p.instance.samples);
        prop_assert!(rate >= 1.0 - p.instance.eps - 1e-9);
    }

    #[test]
    fn mps_round_trip_keeps_optimum(seed in 0u64..1_000_000, eps in 0.05f64..0.45) {
        let p = random_problem(seed, 8, |_, _| eps);
        let n = p.instance.samples.len();
        let (m, x) = p.build(&JccScheme::Exact { big_m: exact_big_m(&p), strengthened: true }).unwrap();
        let text = write_mps(&m);
        let back = read_mps(&text).unwrap();
        prop_assert_eq!(write_mps(&back), text);
        let (_, o1, _) = solve_model(&m, &x);
        let (_, o2, _) = solve_model(&back, &x);
        prop_assert!(close(o1.unwrap(), o2.unwrap(), 1e-9));
        let (_, o3, _) = solve(&p, &JccScheme::Sla { kappa: vec![1.0; n] });
        // the exact set contains the approximation
        prop_assert!(o1.unwrap() <= o3.unwrap() + 1e-6);
    }
}
