//! Seeded random graphs for tests, benchmarks and the evaluation harness.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cluster::Partition;
use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};

fn numbered(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

/// Directed graph on `n` nodes: a Hamiltonian cycle through a random
/// permutation plus each remaining ordered pair with probability
/// `min(1, extra_degree / n)`. Affinities are uniform on `[0.1, 1)` and
/// costs are their reciprocals.
pub fn random_strongly_connected(n: usize, extra_degree: f64, rng: &mut impl Rng) -> Result<Graph> {
    if n < 2 {
        return Err(Error::invalid("n", n, "need at least 2 nodes"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut present = vec![false; n * n];
    let mut pairs = Vec::new();
    for w in 0..n {
        let (i, j) = (order[w], order[(w + 1) % n]);
        present[i * n + j] = true;
        pairs.push((i, j));
    }
    let p = (extra_degree / n as f64).min(1.0);
    for i in 0..n {
        for j in 0..n {
            if i != j && !present[i * n + j] && rng.random::<f64>() < p {
                present[i * n + j] = true;
                pairs.push((i, j));
            }
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(src, dst)| {
            let affinity = rng.random_range(0.1..1.0);
            Edge {
                src,
                dst,
                affinity,
                cost: 1.0 / affinity,
            }
        })
        .collect();
    Graph::from_edges(numbered(n), edges, false)
}

/// Same generator driven by a fresh seeded stream.
pub fn random_strongly_connected_seeded(n: usize, extra_degree: f64, seed: u64) -> Result<Graph> {
    random_strongly_connected(n, extra_degree, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Undirected stochastic block model with unit affinities and costs.
/// Nodes are split into `blocks` near-equal consecutive groups. Draws are
/// repeated on the same stream until the graph is connected.
pub fn stochastic_block_model(n: usize, blocks: usize, p_in: f64, p_out: f64, seed: u64) -> Result<(Graph, Partition)> {
    if blocks == 0 || blocks > n {
        return Err(Error::invalid("blocks", blocks, format!("need 1 ≤ blocks ≤ {n}")));
    }
    for (name, p) in [("p_in", p_in), ("p_out", p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(name, p, "must lie in [0, 1]"));
        }
    }
    let labels: Vec<usize> = (0..n).map(|i| i * blocks / n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const ATTEMPTS: usize = 1000;
    for _ in 0..ATTEMPTS {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let p = if labels[i] == labels[j] { p_in } else { p_out };
                if rng.random::<f64>() < p {
                    for (src, dst) in [(i, j), (j, i)] {
                        edges.push(Edge {
                            src,
                            dst,
                            affinity: 1.0,
                            cost: 1.0,
                        });
                    }
                }
            }
        }
        match Graph::from_edges(numbered(n), edges, true) {
            Ok(graph) => return Ok((graph, Partition::from_labels(&labels))),
            Err(Error::NotStronglyConnected { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::invalid(
        "p_in/p_out",
        format!("{p_in}/{p_out}"),
        format!("no connected draw in {ATTEMPTS} attempts"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_deterministic() {
        let a = random_strongly_connected_seeded(20, 3.0, 5).unwrap();
        let b = random_strongly_connected_seeded(20, 3.0, 5).unwrap();
        assert_eq!(a.edges().collect::<Vec<_>>(), b.edges().collect::<Vec<_>>());
        assert!(a.edge_count() >= 20);
        for e in a.edges() {
            assert!((e.cost * e.affinity - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn block_model_shape() {
        let (g, labels) = stochastic_block_model(100, 2, 0.2, 0.02, 1).unwrap();
        assert_eq!(g.node_count(), 100);
        assert!(g.is_undirected());
        assert_eq!(labels.sizes(), vec![50, 50]);
        let within = g
            .edges()
            .filter(|e| labels.assignment[e.src] == labels.assignment[e.dst])
            .count();
        assert!(within > 4 * (g.edge_count() - within));
    }
}
