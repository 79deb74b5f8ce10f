//! Clustering evaluation: kernel k-means, modularity, NMI, ARI and
//! modularity-driven parameter selection over a `θ` grid.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dissim::{dissimilarity_matrix, mds_kernel, DissimilarityKind};
use crate::error::{Error, Result};
use crate::graph::{Graph, ReferenceMatrix};
use crate::policy::IterationOptions;

/// Cluster assignment with labels compacted to `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    pub assignment: Vec<usize>,
    pub k: usize,
}

impl Partition {
    /// Relabels arbitrary ids to `0..k` in order of first appearance.
    pub fn from_labels<T: std::hash::Hash + Eq + Clone>(labels: &[T]) -> Self {
        let mut ids = HashMap::new();
        let assignment = labels
            .iter()
            .map(|l| {
                let next = ids.len();
                *ids.entry(l.clone()).or_insert(next)
            })
            .collect();
        Partition {
            assignment,
            k: ids.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterScores {
    pub modularity: f64,
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct KMeansResult {
    pub partition: Partition,
    /// Sum of squared feature-space distances to cluster means.
    pub objective: f64,
    /// Fewer than the requested clusters survived after all retries.
    pub collapsed: bool,
    pub restart: usize,
    /// Objective after each assignment step of the winning restart.
    pub history: Vec<f64>,
}

pub const DEFAULT_RESTARTS: usize = 30;
pub const EMPTY_CLUSTER_RETRIES: usize = 10;
const MAX_LLOYD_ITER: usize = 300;

/// Best of `restarts` seeded runs. Restart `j` draws from stream `j` of the seed.
pub fn kernel_kmeans(kernel: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    kernel_kmeans_stream(kernel, k, restarts, seed, 0)
}

/// As [`kernel_kmeans`], with restart `j` on stream `(grid << 32) | j`.
pub fn kernel_kmeans_stream(
    kernel: &DMatrix<f64>,
    k: usize,
    restarts: usize,
    seed: u64,
    grid: u32,
) -> Result<KMeansResult> {
    let n = kernel.nrows();
    if kernel.ncols() != n {
        return Err(Error::invalid(
            "kernel",
            format!("{n}x{}", kernel.ncols()),
            "must be square",
        ));
    }
    if k < 2 || k > n {
        return Err(Error::invalid("k", k, format!("need 2 ≤ k ≤ {n}")));
    }
    if restarts == 0 {
        return Err(Error::invalid("restarts", 0, "must be ≥ 1"));
    }
    let runs: Vec<KMeansResult> = (0..restarts)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((grid as u64) << 32) | j as u64);
            let mut last = None;
            for _ in 0..=EMPTY_CLUSTER_RETRIES {
                let (assignment, history) = lloyd(kernel, k, &mut rng);
                let objective = *history.last().expect("at least one step");
                let partition = Partition::from_labels(&assignment);
                let collapsed = partition.k < k;
                let result = KMeansResult {
                    partition,
                    objective,
                    collapsed,
                    restart: j,
                    history,
                };
                if !collapsed {
                    return result;
                }
                last = Some(result);
            }
            last.expect("at least one attempt")
        })
        .collect();
    Ok(runs
        .into_iter()
        .min_by(|a, b| {
            (a.collapsed, a.objective)
                .partial_cmp(&(b.collapsed, b.objective))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.restart.cmp(&b.restart))
        })
        .expect("restarts ≥ 1"))
}

/// Squared feature-space distance between nodes `i` and `j`.
fn pair_distance(kernel: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    (kernel[(i, i)] - 2.0 * kernel[(i, j)] + kernel[(j, j)]).max(0.0)
}

/// k-means++ seeding on nodes, then Lloyd iterations. Returns raw labels.
fn lloyd(kernel: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<f64>) {
    let n = kernel.nrows();
    let mut centers = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = (0..n).map(|i| pair_distance(kernel, i, centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 {
                    chosen = i;
                    if u < d {
                        break;
                    }
                    u -= d;
                }
            }
            chosen
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !centers.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        centers.push(pick);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(pair_distance(kernel, i, pick));
        }
    }
    let mut assignment: Vec<usize> = (0..n)
        .map(|i| {
            (0..k)
                .min_by(|&a, &b| pair_distance(kernel, i, centers[a]).total_cmp(&pair_distance(kernel, i, centers[b])))
                .unwrap()
        })
        .collect();

    let mut history = Vec::new();
    for _ in 0..MAX_LLOYD_ITER {
        let distances = cluster_distances(kernel, &assignment, k);
        history.push((0..n).map(|i| distances[(i, assignment[i])]).sum());
        let mut changed = false;
        for i in 0..n {
            let current = assignment[i];
            let mut best = current;
            for c in 0..k {
                if distances[(i, c)] < distances[(i, best)] {
                    best = c;
                }
            }
            if best != current {
                assignment[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let final_distances = cluster_distances(kernel, &assignment, k);
    let objective: f64 = (0..n).map(|i| final_distances[(i, assignment[i])]).sum();
    if history.last() != Some(&objective) {
        history.push(objective);
    }
    (assignment, history)
}

/// `d(i, C) = K_ii - 2 mean_{j∈C} K_ij + mean_{j,l∈C} K_jl`; empty clusters get `+∞`.
fn cluster_distances(kernel: &DMatrix<f64>, assignment: &[usize], k: usize) -> DMatrix<f64> {
    let n = kernel.nrows();
    let mut sizes = vec![0usize; k];
    for &c in assignment {
        sizes[c] += 1;
    }
    // cross[(i, c)] = Σ_{j∈C} K_ij
    let mut cross = DMatrix::<f64>::zeros(n, k);
    for j in 0..n {
        let c = assignment[j];
        for i in 0..n {
            cross[(i, c)] += kernel[(i, j)];
        }
    }
    let mut within = vec![0.0; k];
    for j in 0..n {
        within[assignment[j]] += cross[(j, assignment[j])];
    }
    DMatrix::from_fn(n, k, |i, c| {
        if sizes[c] == 0 {
            return f64::INFINITY;
        }
        let m = sizes[c] as f64;
        kernel[(i, i)] - 2.0 * cross[(i, c)] / m + within[c] / (m * m)
    })
}

/// Kernel k-means objective of an arbitrary assignment.
pub fn kmeans_objective(kernel: &DMatrix<f64>, partition: &Partition) -> f64 {
    let d = cluster_distances(kernel, &partition.assignment, partition.k);
    partition.assignment.iter().enumerate().map(|(i, &c)| d[(i, c)]).sum()
}

/// Newman modularity on the symmetrized affinities `(A + Aᵀ)/2`.
pub fn modularity(partition: &Partition, affinity: &DMatrix<f64>) -> Result<f64> {
    let n = affinity.nrows();
    if affinity.ncols() != n || partition.len() != n {
        return Err(Error::invalid(
            "partition",
            partition.len(),
            format!("affinity matrix is {n}x{}", affinity.ncols()),
        ));
    }
    let a = (affinity + affinity.transpose()) * 0.5;
    let degree: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    let volume: f64 = degree.iter().sum();
    if volume.is_nan() || volume <= 0.0 {
        return Err(Error::invalid("graph", volume, "modularity needs positive volume"));
    }
    let mut internal = vec![0.0f64; partition.k];
    let mut cluster_degree = vec![0.0; partition.k];
    for i in 0..n {
        let ci = partition.assignment[i];
        cluster_degree[ci] += degree[i];
        for j in 0..n {
            if partition.assignment[j] == ci {
                internal[ci] += a[(i, j)];
            }
        }
    }
    Ok(internal
        .iter()
        .zip(&cluster_degree)
        .map(|(e, d)| e / volume - (d / volume).powi(2))
        .sum())
}

pub fn graph_modularity(partition: &Partition, graph: &Graph) -> Result<f64> {
    modularity(partition, &graph.affinity_matrix())
}

fn contingency(u: &Partition, v: &Partition) -> Result<DMatrix<f64>> {
    if u.len() != v.len() {
        return Err(Error::invalid(
            "partition",
            v.len(),
            format!("other partition covers {} nodes", u.len()),
        ));
    }
    if u.is_empty() {
        return Err(Error::invalid("partition", 0, "empty partition"));
    }
    let mut table = DMatrix::<f64>::zeros(u.k, v.k);
    for (&a, &b) in u.assignment.iter().zip(&v.assignment) {
        table[(a, b)] += 1.0;
    }
    Ok(table)
}

fn entropy(counts: impl Iterator<Item = f64>, n: f64) -> f64 {
    counts.filter(|&c| c > 0.0).map(|c| -(c / n) * (c / n).ln()).sum()
}

/// Normalized mutual information with arithmetic-mean normalization.
/// Two single-cluster partitions score 1.
pub fn nmi(u: &Partition, v: &Partition) -> Result<f64> {
    let table = contingency(u, v)?;
    let n = u.len() as f64;
    let rows: Vec<f64> = (0..table.nrows()).map(|i| table.row(i).sum()).collect();
    let cols: Vec<f64> = (0..table.ncols()).map(|j| table.column(j).sum()).collect();
    let hu = entropy(rows.iter().copied(), n);
    let hv = entropy(cols.iter().copied(), n);
    if hu + hv == 0.0 {
        return Ok(1.0);
    }
    let mut mutual = 0.0;
    for i in 0..table.nrows() {
        for j in 0..table.ncols() {
            let nij = table[(i, j)];
            if nij > 0.0 {
                mutual += nij / n * (n * nij / (rows[i] * cols[j])).ln();
            }
        }
    }
    Ok((mutual / (0.5 * (hu + hv))).clamp(0.0, 1.0))
}

fn pairs(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index. When the chance-corrected denominator vanishes the
/// score is 1 for identical partitions and 0 otherwise.
pub fn ari(u: &Partition, v: &Partition) -> Result<f64> {
    let table = contingency(u, v)?;
    let n = u.len() as f64;
    let index: f64 = table.iter().map(|&c| pairs(c)).sum();
    let a: f64 = (0..table.nrows()).map(|i| pairs(table.row(i).sum())).sum();
    let b: f64 = (0..table.ncols()).map(|j| pairs(table.column(j).sum())).sum();
    let expected = a * b / pairs(n).max(1.0);
    let max = 0.5 * (a + b);
    if (max - expected).abs() < 1e-12 {
        let identical = Partition::from_labels(&u.assignment) == Partition::from_labels(&v.assignment);
        return Ok(if identical { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TuningOptions {
    pub k: usize,
    pub restarts: usize,
    pub seed: u64,
    pub iteration: IterationOptions,
}

impl Default for TuningOptions {
    fn default() -> Self {
        TuningOptions {
            k: 2,
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            iteration: IterationOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridEvaluation {
    pub theta: f64,
    pub scores: Option<ClusterScores>,
    pub clipped_eigenvalue_mass: Option<f64>,
    pub collapsed: bool,
    /// Set when the solver failed and the point was skipped.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TuningResult {
    pub best_theta: f64,
    pub best_index: usize,
    pub partition: Partition,
    pub scores: ClusterScores,
    pub grid: Vec<GridEvaluation>,
}

/// Evaluates every grid value (dissimilarity, MDS kernel, kernel k-means) and
/// keeps the one with the largest modularity; ties go to the earlier value.
#[allow(clippy::too_many_arguments)]
pub fn tune_parameter(
    graph: &Graph,
    reference: &ReferenceMatrix,
    kind: DissimilarityKind,
    r: f64,
    grid: &[f64],
    labels: Option<&Partition>,
    options: &TuningOptions,
) -> Result<TuningResult> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "[]", "grid must not be empty"));
    }
    if let Some(l) = labels {
        if l.len() != graph.node_count() {
            return Err(Error::invalid(
                "labels",
                l.len(),
                format!("graph has {} nodes", graph.node_count()),
            ));
        }
    }
    let affinity = graph.affinity_matrix();
    let outcomes: Vec<Result<(KMeansResult, ClusterScores, f64)>> = grid
        .par_iter()
        .enumerate()
        .map(|(g, &theta)| {
            let d = dissimilarity_matrix(graph, reference, kind, r, theta, &options.iteration)?;
            let kernel = mds_kernel(&d.values);
            let fit = kernel_kmeans_stream(&kernel.values, options.k, options.restarts, options.seed, g as u32)?;
            let scores = ClusterScores {
                modularity: modularity(&fit.partition, &affinity)?,
                nmi: labels.map(|l| nmi(l, &fit.partition)).transpose()?,
                ari: labels.map(|l| ari(l, &fit.partition)).transpose()?,
            };
            Ok((fit, scores, kernel.clipped_eigenvalue_mass))
        })
        .collect();

    let mut evaluations = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, KMeansResult, ClusterScores)> = None;
    let mut first_error = None;
    for (g, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok((fit, scores, clipped)) => {
                evaluations.push(GridEvaluation {
                    theta: grid[g],
                    scores: Some(scores),
                    clipped_eigenvalue_mass: Some(clipped),
                    collapsed: fit.collapsed,
                    error: None,
                });
                if best.as_ref().is_none_or(|(_, _, s)| scores.modularity > s.modularity) {
                    best = Some((g, fit, scores));
                }
            }
            Err(e) => {
                evaluations.push(GridEvaluation {
                    theta: grid[g],
                    scores: None,
                    clipped_eigenvalue_mass: None,
                    collapsed: false,
                    error: Some(e.to_string()),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    match best {
        Some((g, fit, scores)) => Ok(TuningResult {
            best_theta: grid[g],
            best_index: g,
            partition: fit.partition,
            scores,
            grid: evaluations,
        }),
        None => Err(first_error.expect("non-empty grid")),
    }
}
