mod common;

use confal::class::HypothesisClass;
use confal::crp::{dis_abstain_predictor, solve_crp, verify_error_guarantee};
use confal::hypothesis::{HypothesisSet, LabeledSample, UnlabeledPool};
use confal::lp::{solve_lp, LpProblem, LpStatus, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use confal::oracle::{LabelModel, Marginal, Oracle, OracleSpec};
use confal::query::adaptive_label_query;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rows_strategy(max_h: usize, max_m: usize) -> impl Strategy<Value = Vec<Vec<i8>>> {
    (1..=max_h, 1..=max_m).prop_flat_map(|(h, m)| {
        prop::collection::vec(prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1i8 } else { -1 }), m), h)
    })
}

fn set(rows: &[Vec<i8>]) -> HypothesisSet {
    HypothesisSet::new(rows.to_vec(), 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn simplex_matches_vertex_enumeration(
        n in 1usize..=4,
        seed in any::<u64>(),
        k in 1usize..=4,
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut a: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.gen_range(-1.0..2.0)).collect()).collect();
        let mut b: Vec<f64> = (0..k).map(|_| rng.gen_range(-0.5..3.0)).collect();
        // Keep the region bounded.
        a.push(vec![1.0; n]);
        b.push(5.0);
        // The solver minimizes.
        let mut lp = LpProblem::new(c.iter().map(|v| -v).collect());
        for (row, rhs) in a.iter().zip(&b) {
            lp.add_le(row.clone(), *rhs);
        }
        let sol = solve_lp(&lp, DEFAULT_TOL, DEFAULT_MAX_ITERS).unwrap();
        match common::vertex_max(&a, &b, &c) {
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
            Some((best, _)) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!((-sol.objective - best).abs() < 1e-7, "{} vs {}", -sol.objective, best);
                prop_assert!(lp.max_violation(&sol.x) < 1e-7);
            }
        }
    }

    #[test]
    fn crp_matches_vertex_oracle_on_tiny_instances(rows in rows_strategy(3, 4), eta_k in 0usize..4) {
        let eta = [0.0, 0.1, 0.2, 0.3][eta_k];
        let p = solve_crp(&set(&rows), eta).unwrap();
        prop_assert!((p.phi() - common::crp_vertex_phi(&rows, eta)).abs() < 1e-6);
    }

    #[test]
    fn crp_feasible_and_dominates_dis(rows in rows_strategy(8, 12), eta_k in 0usize..4) {
        let eta = [0.0, 0.05, 0.1, 0.25][eta_k];
        let v = set(&rows);
        let p = solve_crp(&v, eta).unwrap();
        prop_assert!(verify_error_guarantee(&p, &v, eta).unwrap() <= 1e-6);
        let dis = dis_abstain_predictor(&v).unwrap();
        prop_assert!(p.coverage() >= dis.coverage() - 1e-6);
        prop_assert!(p.phi() <= dis.phi() + 1e-9);
        for i in 0..p.len() {
            let s = p.xi()[i] + p.zeta()[i] + p.gamma()[i];
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(p.xi()[i] >= 0.0 && p.zeta()[i] >= 0.0 && p.gamma()[i] >= 0.0);
        }
    }

    #[test]
    fn abstention_monotone_in_budget_and_set(rows in rows_strategy(6, 10), extra in rows_strategy(1, 10)) {
        let v = set(&rows);
        let m = rows[0].len();
        let mut last = f64::INFINITY;
        for eta in [0.0, 0.05, 0.1, 0.2, 0.4] {
            let phi = solve_crp(&v, eta).unwrap().phi();
            prop_assert!(phi <= last + 1e-9);
            last = phi;
        }
        let mut bigger = rows.clone();
        let mut row = extra[0].clone();
        row.resize(m, 1);
        bigger.push(row);
        for eta in [0.0, 0.1] {
            let small = solve_crp(&v, eta).unwrap().phi();
            let large = solve_crp(&set(&bigger), eta).unwrap().phi();
            prop_assert!(large >= small - 1e-9);
        }
    }

    #[test]
    fn abstention_lower_bound(rows in rows_strategy(6, 12), eta_k in 0usize..4) {
        let eta = [0.0, 0.05, 0.1, 0.25][eta_k];
        let phi = solve_crp(&set(&rows), eta).unwrap().phi();
        prop_assert!(phi >= common::max_pairwise_disagreement(&rows) - 2.0 * eta - 1e-6);
    }

    #[test]
    fn version_space_shrinks(rows in rows_strategy(8, 10), labels in prop::collection::vec((0usize..10, any::<bool>()), 0..6)) {
        let v = set(&rows);
        let m = rows[0].len();
        let mut s = LabeledSample::new();
        let mut current = v.clone();
        for (i, y) in labels {
            s.push(i % m, if y { 1 } else { -1 });
            let next = v.version_space_update(&s).unwrap();
            prop_assert!(next.active().iter().all(|h| current.is_active(*h)));
            current = next;
        }
    }
}

#[test]
fn doubling_rounds_are_geometric_and_deterministic() {
    let class = HypothesisClass::thresholds(0.0, 1.0, 11).unwrap();
    let pool = UnlabeledPool::from_scalars((0..30).map(|i| i as f64 / 29.0).collect());
    let spec = OracleSpec::new(
        Marginal::finite(pool.clone(), None).unwrap(),
        LabelModel::Flip { truth: class.classifier(4).clone(), rate: 0.15 },
    )
    .unwrap();
    let v = class.materialize(&pool).unwrap();
    let w: Vec<f64> = (0..30).map(|i| 1.0 + (i % 4) as f64).collect();
    let run = |seed: u64| {
        let mut o = Oracle::new(&spec, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = adaptive_label_query(&v, &pool, &w, &mut o, &mut rng, 0.3, 0.1, 24).unwrap();
        assert_eq!(o.budget(), q.labels_used);
        q
    };
    for seed in 0..10 {
        let q = run(seed);
        for (k, r) in q.rounds.iter().enumerate() {
            assert_eq!(r.n_j, 2u64 << k);
        }
        assert_eq!(q, run(seed));
    }
}
