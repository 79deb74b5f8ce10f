//! Workloads shared by the benchmarks.

use sparse_rsp::synth::random_strongly_connected_seeded;
use sparse_rsp::{Graph, ReferenceKind, ReferenceMatrix, SimplexProblem};

/// Simplex instance with `m` scattered costs and a non-uniform reference.
pub fn simplex_instance(m: usize, r: f64, temperature: f64) -> SimplexProblem {
    let costs = (0..m).map(|i| ((i * 7919) % 1009) as f64 / 100.0).collect();
    let weights: Vec<f64> = (0..m).map(|i| 1.0 + ((i * 31) % 17) as f64).collect();
    let total: f64 = weights.iter().sum();
    let reference = weights.into_iter().map(|w| w / total).collect();
    SimplexProblem::new(costs, reference, r, temperature).expect("valid instance")
}

/// Random strongly connected graph with about four out-edges per node.
pub fn routing_graph(n: usize) -> (Graph, ReferenceMatrix) {
    let graph = random_strongly_connected_seeded(n, 3.0, n as u64).expect("valid graph");
    let reference = ReferenceMatrix::new(&graph, ReferenceKind::Natural).expect("positive affinities");
    (graph, reference)
}
