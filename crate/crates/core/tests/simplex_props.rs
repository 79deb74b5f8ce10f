mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_rsp::simplex::{kkt_residual, spmin, spmin_bisection, spmin_quadratic, SimplexProblem};

fn normalized(weights: Vec<f64>) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

prop_compose! {
    fn instance(max_m: usize)(m in 1..=max_m)(
        costs in prop::collection::vec(0.0f64..10.0, m),
        weights in prop::collection::vec(0.01f64..1.0, m),
        r in 1.05f64..4.5,
        log_t in -2.0f64..2.0,
    ) -> SimplexProblem {
        SimplexProblem::new(costs, normalized(weights), r, 10f64.powf(log_t)).unwrap()
    }
}

prop_compose! {
    fn quadratic_instance(max_m: usize)(m in 1..=max_m)(
        costs in prop::collection::vec(0.0f64..10.0, m),
        weights in prop::collection::vec(0.01f64..1.0, m),
        log_t in -2.0f64..2.0,
    ) -> SimplexProblem {
        SimplexProblem::new(costs, normalized(weights), 2.0, 10f64.powf(log_t)).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn solution_satisfies_kkt(problem in instance(12)) {
        let sol = spmin(&problem).unwrap();
        let sum: f64 = sol.p.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        prop_assert!(sol.p.iter().all(|&v| v >= 0.0));
        prop_assert!(sol.kkt_residual <= 1e-9, "residual {}", sol.kkt_residual);
        for (i, &c) in problem.costs().iter().enumerate() {
            if sol.support.contains(&i) {
                prop_assert!(sol.p[i] > 0.0);
                prop_assert!(c < sol.mu);
            } else {
                prop_assert_eq!(sol.p[i], 0.0);
                prop_assert!(c >= sol.mu - 1e-9 * (1.0 + sol.mu.abs()));
            }
        }
    }

    #[test]
    fn objective_beats_random_feasible_points(problem in instance(8), seed in any::<u64>()) {
        let sol = spmin(&problem).unwrap();
        let best = problem.objective(&sol.p);
        let slack = 1e-10 * (1.0 + best.abs());
        prop_assert!(best <= problem.objective(problem.reference()) + slack);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let point = normalized((0..sol.p.len()).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect());
            prop_assert!(best <= problem.objective(&point) + slack);
        }
    }

    #[test]
    fn support_grows_with_temperature(problem in instance(10), factor in 1.0f64..50.0) {
        let hotter = SimplexProblem::new(
            problem.costs().to_vec(),
            problem.reference().to_vec(),
            problem.r(),
            problem.temperature() * factor,
        ).unwrap();
        prop_assert!(spmin(&problem).unwrap().support.len() <= spmin(&hotter).unwrap().support.len());
    }

    #[test]
    fn permutation_equivariance(problem in instance(10), seed in any::<u64>()) {
        let m = problem.costs().len();
        let mut perm: Vec<usize> = (0..m).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..m).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let permuted = SimplexProblem::new(
            perm.iter().map(|&i| problem.costs()[i]).collect(),
            perm.iter().map(|&i| problem.reference()[i]).collect(),
            problem.r(),
            problem.temperature(),
        ).unwrap();
        let p = spmin(&problem).unwrap().p;
        let q = spmin(&permuted).unwrap().p;
        for (k, &i) in perm.iter().enumerate() {
            prop_assert!((q[k] - p[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn linear_search_matches_support_enumeration(problem in quadratic_instance(10)) {
        let oracle = common::spmin_r2_by_enumeration(problem.costs(), problem.reference(), problem.temperature());
        let p = spmin_quadratic(&problem).unwrap().p;
        prop_assert!(common::max_abs_diff(&p, &oracle) <= 1e-12);
    }

    #[test]
    fn near_one_order_approaches_softmax(
        costs in prop::collection::vec(0.0f64..3.0, 2..8),
        log_t in -0.5f64..1.0,
    ) {
        let m = costs.len();
        let t = 10f64.powf(log_t);
        let reference = vec![1.0 / m as f64; m];
        let problem = SimplexProblem::new(costs.clone(), reference.clone(), 1.001, t).unwrap();
        let p = spmin(&problem).unwrap().p;
        let softmax = normalized(costs.iter().zip(&reference).map(|(c, q)| q * (-c / t).exp()).collect());
        prop_assert!(common::max_abs_diff(&p, &softmax) <= 1e-3);
    }
}

#[test]
fn linear_search_matches_bisection_on_1000_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let m = rng.random_range(1..=25);
        let costs: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
        let reference = normalized((0..m).map(|_| rng.random_range(0.001..1.0)).collect());
        let t = 10f64.powf(rng.random_range(-3.0..3.0));
        let problem = SimplexProblem::new(costs, reference, 2.0, t).unwrap();
        let a = spmin_quadratic(&problem).unwrap();
        let b = spmin_bisection(&problem).unwrap();
        assert!(common::max_abs_diff(&a.p, &b.p) <= 1e-9);
        assert_eq!(a.support, b.support);
    }
}

#[test]
fn linear_curve_example() {
    let problem = SimplexProblem::with_uniform_reference(vec![1.0, 2.0, 3.0, 4.0, 5.0], 2.0, 1.0).unwrap();
    let sol = spmin_quadratic(&problem).unwrap();
    assert_eq!(sol.support, vec![0, 1, 2, 3]);
    // Weighted mean over the support: (2T + Σ q c) / Σ q = (2 + 0.2 · 10) / 0.8.
    assert!((sol.mu - 5.0).abs() < 1e-12);
}

#[test]
fn convex_curve_threshold() {
    // r = 1.5: Σ (μ - c_i)² over the full support equals 45, so μ = 3 + √7.
    let problem = SimplexProblem::with_uniform_reference(vec![1.0, 2.0, 3.0, 4.0, 5.0], 1.5, 1.0).unwrap();
    let sol = spmin_bisection(&problem).unwrap();
    assert!((sol.mu - (3.0 + 7f64.sqrt())).abs() < 1e-9);
    let p = (1..=5).map(|c| 0.2 * ((sol.mu - c as f64) / 3.0).powi(2));
    for (got, want) in sol.p.iter().zip(p) {
        assert!((got - want).abs() < 1e-9);
    }
}

#[test]
fn huge_temperature_returns_reference() {
    let reference = vec![0.1, 0.2, 0.3, 0.4];
    for r in [1.5, 2.0, 3.0] {
        let problem = SimplexProblem::new(vec![4.0, 1.0, 3.0, 2.0], reference.clone(), r, 1e6).unwrap();
        assert!(common::max_abs_diff(&spmin(&problem).unwrap().p, &reference) <= 1e-6);
    }
}

#[test]
fn perturbed_solution_is_detected() {
    let problem = SimplexProblem::with_uniform_reference(vec![1.0, 2.0, 3.0, 4.0, 5.0], 2.0, 1.0).unwrap();
    let sol = spmin(&problem).unwrap();
    assert!(kkt_residual(&problem, &sol.p, sol.mu) <= 1e-12);
    let mut p = sol.p.clone();
    p[0] += 0.01;
    p[1] -= 0.01;
    assert!(kkt_residual(&problem, &p, sol.mu) > 1e-3);
}
