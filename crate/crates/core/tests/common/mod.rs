//! Fixtures and reference computations shared by the integration tests.
//! The oracles below use dense matrices and textbook formulas only; they do
//! not call into the solvers they check.

#![allow(dead_code, clippy::needless_range_loop)]

use std::path::PathBuf;

use sparse_rsp::cluster::Partition;
use sparse_rsp::{CostConvention, Graph, LoadOptions};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn ten_node() -> Graph {
    let options = LoadOptions {
        undirected: true,
        ..Default::default()
    };
    Graph::load_edge_list(fixture("ten_node.tsv"), &options).unwrap()
}

pub fn karate() -> (Graph, Partition) {
    let options = LoadOptions {
        undirected: true,
        cost: CostConvention::InverseAffinity,
        ..Default::default()
    };
    let graph = Graph::load_edge_list(fixture("karate.tsv"), &options).unwrap();
    let text = std::fs::read_to_string(fixture("karate_labels.tsv")).unwrap();
    let mut labels = vec![String::new(); graph.node_count()];
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let mut fields = line.split_whitespace();
        let node = graph.node_index(fields.next().unwrap()).unwrap();
        labels[node] = fields.next().unwrap().to_string();
    }
    (graph, Partition::from_labels(&labels))
}

/// Dense `n × n` matrix of an edge-slot vector.
pub fn dense(graph: &Graph, values: &[f64]) -> Vec<Vec<f64>> {
    let n = graph.node_count();
    let mut m = vec![vec![0.0; n]; n];
    for (e, edge) in graph.edges().enumerate() {
        m[edge.src][edge.dst] = values[e];
    }
    m
}

pub fn dense_costs(graph: &Graph) -> Vec<Vec<f64>> {
    let n = graph.node_count();
    let mut m = vec![vec![f64::INFINITY; n]; n];
    for edge in graph.edges() {
        m[edge.src][edge.dst] = edge.cost;
    }
    m
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        assert!(a[col][col].abs() > 1e-300, "singular system");
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = ((row + 1)..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Expected cost to `target` from every node for the killed chain `p`
/// (dense, target row ignored): `(I - P) x = c̃` with `x_t = 0`.
pub fn absorbing_expected_costs(p: &[Vec<f64>], c: &[Vec<f64>], target: usize) -> Vec<f64> {
    let n = p.len();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for i in 0..n {
        a[i][i] = 1.0;
        if i == target {
            continue;
        }
        for j in 0..n {
            if p[i][j] > 0.0 {
                a[i][j] -= p[i][j];
                b[i] += p[i][j] * c[i][j];
            }
        }
    }
    gauss_solve(a, b)
}

/// Natural random-walk transition matrix built directly from the edges.
pub fn natural_walk(graph: &Graph) -> Vec<Vec<f64>> {
    let n = graph.node_count();
    let mut p = vec![vec![0.0; n]; n];
    for edge in graph.edges() {
        p[edge.src][edge.dst] = edge.affinity;
    }
    for row in &mut p {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    p
}

/// Expected cost of the reference random walk from every node to `target`.
pub fn walk_expected_costs(graph: &Graph, target: usize) -> Vec<f64> {
    absorbing_expected_costs(&natural_walk(graph), &dense_costs(graph), target)
}

/// All-pairs least costs (Floyd-Warshall).
pub fn floyd_warshall(graph: &Graph) -> Vec<Vec<f64>> {
    let n = graph.node_count();
    let mut d = dense_costs(graph);
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// KL free energy to `target` from the fundamental matrix of
/// `W = P_ref ∘ exp(-θ C)` with the target killed: `φ_it = -ln(z_it) / θ`.
pub fn kl_free_energy_closed_form(graph: &Graph, theta: f64, target: usize) -> Vec<f64> {
    let n = graph.node_count();
    let p = natural_walk(graph);
    let c = dense_costs(graph);
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = 1.0;
        if i == target {
            continue;
        }
        for j in 0..n {
            if p[i][j] > 0.0 {
                a[i][j] -= p[i][j] * (-theta * c[i][j]).exp();
            }
        }
    }
    let mut e_t = vec![0.0; n];
    e_t[target] = 1.0;
    let z = gauss_solve(a, e_t);
    z.iter().map(|v| -v.ln() / theta).collect()
}

/// spmin for `r = 2` by enumerating supports: the unique KKT point.
pub fn spmin_r2_by_enumeration(c: &[f64], q: &[f64], temperature: f64) -> Vec<f64> {
    let m = c.len();
    assert!(m <= 16);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << m) {
        let support: Vec<usize> = (0..m).filter(|&i| mask >> i & 1 == 1 && q[i] > 0.0).collect();
        if support.is_empty() {
            continue;
        }
        let w: f64 = support.iter().map(|&i| q[i]).sum();
        let s: f64 = support.iter().map(|&i| q[i] * c[i]).sum();
        let mu = (2.0 * temperature + s) / w;
        let mut p = vec![0.0; m];
        for &i in &support {
            p[i] = q[i] * (mu - c[i]) / (2.0 * temperature);
        }
        let tol = 1e-12 * (1.0 + mu.abs());
        let feasible =
            p.iter().all(|&v| v >= -tol) && (0..m).all(|j| q[j] == 0.0 || support.contains(&j) || mu <= c[j] + tol);
        if feasible {
            let obj: f64 = (0..m)
                .filter(|&i| p[i] > 0.0)
                .map(|i| c[i] * p[i] + temperature * p[i] * (p[i] / q[i] - 1.0))
                .sum();
            if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                best = Some((obj, p.iter().map(|v| v.max(0.0)).collect()));
            }
        }
    }
    best.expect("a KKT point always exists").1
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
