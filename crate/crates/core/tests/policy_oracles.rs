#![allow(clippy::needless_range_loop)]

mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sparse_rsp::flow::{duality_gap, expected_cost, expected_costs_to_target, expected_visits};
use sparse_rsp::graph::{shortest_path_cost, shortest_path_costs};
use sparse_rsp::policy::lagrange_solve;
use sparse_rsp::rsp_kl::{kl_lagrange_solve, kl_policy_iterate, kl_transition_update, softmin_recursion};
use sparse_rsp::rsp_tsallis::{
    tsallis_divergence, tsallis_lagrange_solve, tsallis_policy_iterate, tsallis_transition_update,
};
use sparse_rsp::synth::random_strongly_connected_seeded;
use sparse_rsp::{Graph, IterationOptions, LoadOptions, Policy, ReferenceKind, ReferenceMatrix, Regularizer};

fn natural(g: &Graph) -> ReferenceMatrix {
    ReferenceMatrix::new(g, ReferenceKind::Natural).unwrap()
}

fn defaults() -> IterationOptions {
    IterationOptions::default()
}

fn random_graph(seed: u64, max_n: usize) -> Graph {
    let n = 5 + (seed as usize * 7) % (max_n - 4);
    random_strongly_connected_seeded(n, 3.0, seed).unwrap()
}

fn assert_policy_shape(g: &Graph, reference: &ReferenceMatrix, policy: &Policy) {
    for i in 0..g.node_count() {
        let row = policy.row(g, i);
        if i == policy.target {
            assert!(row.iter().all(|&p| p == 0.0));
            continue;
        }
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        for (p, q) in row.iter().zip(reference.row(g, i)) {
            assert!(*p >= 0.0);
            if *q == 0.0 {
                assert_eq!(*p, 0.0);
            }
        }
    }
    assert_eq!(policy.lambda[policy.target], 0.0);
}

#[test]
fn ten_node_shortest_path() {
    let g = common::ten_node();
    let (s, t) = (g.node_index("s").unwrap(), g.node_index("t").unwrap());
    assert_eq!(shortest_path_cost(&g, s, t).unwrap(), 11.0);
    let floyd = common::floyd_warshall(&g);
    for src in 0..g.node_count() {
        assert_eq!(shortest_path_costs(&g, src), floyd[src]);
    }
}

#[test]
fn kl_potentials_match_fundamental_matrix() {
    let ten_node = common::ten_node();
    let mut graphs = vec![ten_node];
    graphs.extend((1..6).map(|seed| random_graph(seed, 25)));
    for g in &graphs {
        let reference = natural(g);
        let t = g.node_count() - 1;
        for theta in [0.05, 0.5, 2.0, 20.0] {
            let policy = kl_policy_iterate(g, &reference, t, theta, &defaults()).unwrap();
            let oracle = common::kl_free_energy_closed_form(g, theta, t);
            assert_policy_shape(g, &reference, &policy);
            for (a, b) in policy.lambda.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "theta {theta}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn kl_ten_node_at_low_temperature() {
    let g = common::ten_node();
    let reference = ReferenceMatrix::new(&g, ReferenceKind::Uniform).unwrap();
    let (s, t) = (g.node_index("s").unwrap(), g.node_index("t").unwrap());
    let policy = kl_policy_iterate(&g, &reference, t, 20.0, &defaults()).unwrap();
    // The free energy keeps the entropy of the single surviving path: 11 + ln(3·3·5·3)/20.
    assert!((policy.lambda[s] - (11.0 + 135f64.ln() / 20.0)).abs() < 1e-3);
    let flow = expected_visits(&g, &policy, s, &defaults().linear).unwrap();
    assert!((expected_cost(&g, &flow) - 11.0).abs() < 1e-3);
}

#[test]
fn softmin_reaches_dijkstra_at_large_theta() {
    for seed in 1..6 {
        let g = random_graph(seed, 30);
        let t = g.node_count() - 1;
        let lambda = softmin_recursion(&g, &natural(&g), t, 1e4, 1e-14, 1_000_000).unwrap();
        let floyd = common::floyd_warshall(&g);
        for i in 0..g.node_count() {
            // Gap is at most ln(1/q_min) · path length / θ.
            assert!((lambda[i] - floyd[i][t]).abs() <= 0.05 * (1.0 + floyd[i][t]));
            assert!(lambda[i] >= floyd[i][t] - 1e-9);
        }
    }
}

#[test]
fn reference_potentials_are_walk_costs() {
    for seed in 1..6 {
        let g = random_graph(seed, 30);
        let reference = natural(&g);
        let t = 0;
        let mut p = reference.probs().to_vec();
        for e in g.out_edges(t) {
            p[e] = 0.0;
        }
        let walk = common::walk_expected_costs(&g, t);
        let kl = kl_lagrange_solve(&g, &reference, &p, t, 0.7, &defaults().linear).unwrap();
        let ts = tsallis_lagrange_solve(&g, &reference, &p, t, 2.5, 0.7, &defaults().linear).unwrap();
        for i in 0..g.node_count() {
            let w = if i == t { 0.0 } else { walk[i] };
            assert!((kl[i] - w).abs() <= 1e-9 * (1.0 + w));
            assert!((ts[i] - w).abs() <= 1e-9 * (1.0 + w));
        }
    }
}

#[test]
fn forced_chain() {
    let g = Graph::read_edge_list("s a 1 2\na t 1 3\nt s 1 1\n".as_bytes(), &LoadOptions::default()).unwrap();
    let reference = natural(&g);
    let (s, t) = (0, 2);
    for regularizer in [Regularizer::Kl, Regularizer::Tsallis { r: 2.0 }] {
        let policy = match regularizer {
            Regularizer::Kl => kl_policy_iterate(&g, &reference, t, 1.0, &defaults()).unwrap(),
            Regularizer::Tsallis { r } => tsallis_policy_iterate(&g, &reference, t, r, 1.0, &defaults()).unwrap(),
        };
        assert_eq!(policy.lambda, vec![5.0, 3.0, 0.0]);
        let flow = expected_visits(&g, &policy, s, &defaults().linear).unwrap();
        assert_eq!(flow.node_visits, vec![1.0, 1.0, 1.0]);
        assert_eq!(expected_cost(&g, &flow), 5.0);
    }
}

#[test]
fn tsallis_update_limits() {
    let g = random_graph(3, 20);
    let reference = natural(&g);
    let t = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut lambda: Vec<f64> = (0..g.node_count()).map(|_| rng.random_range(0.0..5.0)).collect();
    lambda[t] = 0.0;
    let max_cost = g.costs().iter().cloned().fold(0.0, f64::max);

    let hot = tsallis_transition_update(&g, &reference, t, 2.0, 1e6 * max_cost, &lambda).unwrap();
    let cold = tsallis_transition_update(&g, &reference, t, 2.0, 1e-9, &lambda).unwrap();
    let kl_cold = kl_transition_update(&g, &reference, t, 1e9, &lambda).unwrap();
    for i in (0..g.node_count()).filter(|&i| i != t) {
        let edges = g.out_edges(i);
        for e in edges.clone() {
            assert!((hot[e] - reference.probs()[e]).abs() <= 1e-6);
        }
        let best = edges
            .clone()
            .min_by(|&a, &b| (g.costs()[a] + lambda[g.edge_dst(a)]).total_cmp(&(g.costs()[b] + lambda[g.edge_dst(b)])))
            .unwrap();
        for e in edges {
            let want = if e == best { 1.0 } else { 0.0 };
            assert_eq!(cold[e], want);
            assert!((kl_cold[e] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn ten_node_node_c_is_nearly_unused_at_half() {
    let g = common::ten_node();
    let reference = ReferenceMatrix::new(&g, ReferenceKind::Uniform).unwrap();
    let (s, t, c) = (
        g.node_index("s").unwrap(),
        g.node_index("t").unwrap(),
        g.node_index("c").unwrap(),
    );
    let policy = tsallis_policy_iterate(&g, &reference, t, 2.0, 2.0, &defaults()).unwrap();
    let flow = expected_visits(&g, &policy, s, &defaults().linear).unwrap();
    // Drawn as unreached: every net flow touching c rounds to 0.000.
    for f in flow.net_flows(&g) {
        if f.src == c || f.dst == c {
            assert!(f.value < 5e-4, "{f:?}");
        }
    }
    assert!(flow.node_visits[c] < 1e-3);
}

#[test]
fn ten_node_unit_flow_potential() {
    let g = common::ten_node();
    let reference = ReferenceMatrix::new(&g, ReferenceKind::Uniform).unwrap();
    let (s, t) = (g.node_index("s").unwrap(), g.node_index("t").unwrap());
    let policy = tsallis_policy_iterate(&g, &reference, t, 2.0, 0.5, &defaults()).unwrap();
    // Deterministic rows on s, a, d, f each contribute T (deg - 1) to the free energy.
    let penalty: f64 = ["s", "a", "d", "f"]
        .iter()
        .map(|n| g.out_degree(g.node_index(n).unwrap()) as f64 - 1.0)
        .sum();
    assert!((policy.lambda[s] - (11.0 + 0.5 * penalty)).abs() < 1e-9);
    let flow = expected_visits(&g, &policy, s, &defaults().linear).unwrap();
    assert!((expected_cost(&g, &flow) - 11.0).abs() < 1e-9);
}

#[test]
fn expected_costs_for_all_sources_match_per_source_flows() {
    for seed in 1..4 {
        let g = random_graph(seed, 25);
        let reference = natural(&g);
        let t = 1;
        let policy = tsallis_policy_iterate(&g, &reference, t, 2.0, 0.3, &defaults()).unwrap();
        let all = expected_costs_to_target(&g, &policy, &defaults().linear).unwrap();
        for s in (0..g.node_count()).filter(|&s| s != t) {
            let flow = expected_visits(&g, &policy, s, &defaults().linear).unwrap();
            assert!((all[s] - expected_cost(&g, &flow)).abs() <= 1e-10 * (1.0 + all[s]));
        }
    }
}

#[test]
fn source_equal_to_target_is_rejected() {
    let g = common::ten_node();
    let reference = natural(&g);
    let policy = tsallis_policy_iterate(&g, &reference, 9, 2.0, 1.0, &defaults()).unwrap();
    assert!(expected_visits(&g, &policy, 9, &defaults().linear).is_err());
}

#[test]
fn divergence_near_one_matches_kl() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let m = rng.random_range(2..10);
        let draw = |rng: &mut ChaCha8Rng| {
            let v: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let (p, q) = (draw(&mut rng), draw(&mut rng));
        let kl: f64 = p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum();
        let ts = tsallis_divergence(&p, &q, 1.001).unwrap();
        assert!((ts - kl).abs() <= 1e-2 * kl.max(1e-12), "{ts} vs {kl}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn converged_policies_are_certified(seed in 1u64..10_000, log_theta in -2.0f64..1.5, r in 1.2f64..3.5) {
        let g = random_graph(seed, 30);
        let reference = natural(&g);
        let (s, t) = (0, g.node_count() - 1);
        let theta = 10f64.powf(log_theta);
        let options = IterationOptions { source: Some(s), ..Default::default() };
        let policy = tsallis_policy_iterate(&g, &reference, t, r, 1.0 / theta, &options).unwrap();
        assert_policy_shape(&g, &reference, &policy);
        prop_assert!(policy.duality_gap.unwrap() <= 1e-8);
        let direct = duality_gap(&g, &reference, &policy, s, &options.linear).unwrap();
        prop_assert_eq!(direct, policy.duality_gap.unwrap());

        let flow = expected_visits(&g, &policy, s, &options.linear).unwrap();
        prop_assert!(flow.conservation_residual(&g) <= 1e-10);
        prop_assert!((flow.node_visits[t] - 1.0).abs() <= 1e-10);
        prop_assert!(flow.node_visits.iter().all(|&v| v >= 0.0));
        let net_out: f64 = flow.net_flows(&g).iter().filter(|f| f.src == s).map(|f| f.value).sum::<f64>()
            - flow.net_flows(&g).iter().filter(|f| f.dst == s).map(|f| f.value).sum::<f64>();
        prop_assert!((net_out - 1.0).abs() <= 1e-10);

        // The potentials solve the linear system at the returned transitions.
        let again = lagrange_solve(&g, &reference, &policy.transitions, t, policy.temperature, policy.regularizer, &options.linear).unwrap();
        prop_assert!(common::max_abs_diff(&again, &policy.lambda) <= 1e-8 * (1.0 + policy.lambda[s]));
    }

    #[test]
    fn potentials_decrease_with_theta(seed in 1u64..10_000) {
        let g = random_graph(seed, 25);
        let reference = natural(&g);
        let t = g.node_count() - 1;
        let floyd = common::floyd_warshall(&g);
        let thetas = [0.01, 0.1, 1.0, 10.0, 100.0];
        for kl in [true, false] {
            let mut previous: Option<Vec<f64>> = None;
            for &theta in &thetas {
                let policy = if kl {
                    kl_policy_iterate(&g, &reference, t, theta, &defaults()).unwrap()
                } else {
                    tsallis_policy_iterate(&g, &reference, t, 2.0, 1.0 / theta, &defaults()).unwrap()
                };
                for i in 0..g.node_count() {
                    prop_assert!(policy.lambda[i] >= floyd[i][t] - 1e-9);
                }
                if let Some(prev) = &previous {
                    for (now, before) in policy.lambda.iter().zip(prev) {
                        prop_assert!(*now <= before + 1e-9 * (1.0 + before.abs()));
                    }
                }
                previous = Some(policy.lambda);
            }
        }
    }

    #[test]
    fn near_one_order_matches_kl_policy(seed in 1u64..10_000) {
        let g = random_graph(seed, 20);
        let reference = natural(&g);
        let t = 0;
        let kl = kl_policy_iterate(&g, &reference, t, 1.0, &defaults()).unwrap();
        let ts = tsallis_policy_iterate(&g, &reference, t, 1.001, 1.0, &defaults()).unwrap();
        for i in 1..g.node_count() {
            prop_assert!((ts.lambda[i] - kl.lambda[i]).abs() <= 1e-2 * kl.lambda[i]);
        }
    }
}
