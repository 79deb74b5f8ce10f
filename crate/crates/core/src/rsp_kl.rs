//! KL-regularized randomized shortest paths, computed locally.
//!
//! The transition update is the Gibbs row
//! `p_ij ∝ p_ref_ij · exp(-θ (c_ij + λ_j))`; the potential update is the
//! shared linear system with the KL row divergence. The Bellman-Ford style
//! softmin recursion provides an independent route to the same potentials.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Graph, ReferenceMatrix};
use crate::linalg::LinearSolverConfig;
use crate::policy::{
    check_node, check_temperature, iterate, lagrange_solve, rows_mut, IterationOptions, Policy, Regularizer,
    PARALLEL_EDGE_THRESHOLD,
};

/// Potentials for fixed transitions under KL regularization.
pub fn kl_lagrange_solve(
    graph: &Graph,
    reference: &ReferenceMatrix,
    transitions: &[f64],
    target: usize,
    temperature: f64,
    config: &LinearSolverConfig,
) -> Result<Vec<f64>> {
    lagrange_solve(
        graph,
        reference,
        transitions,
        target,
        temperature,
        Regularizer::Kl,
        config,
    )
}

/// Gibbs transition rows for the potentials `lambda`; the target row is zero.
pub fn kl_transition_update(
    graph: &Graph,
    reference: &ReferenceMatrix,
    target: usize,
    theta: f64,
    lambda: &[f64],
) -> Result<Vec<f64>> {
    check_node(graph, target, "target")?;
    check_temperature(1.0 / theta)?;
    let mut out = vec![0.0; graph.edge_count()];
    update_rows(graph, reference, target, theta, lambda, &mut out);
    Ok(out)
}

fn update_rows(graph: &Graph, reference: &ReferenceMatrix, target: usize, theta: f64, lambda: &[f64], out: &mut [f64]) {
    let q = reference.probs();
    let c = graph.costs();
    let solve_row = |(i, row): (usize, &mut [f64])| {
        if i == target {
            row.fill(0.0);
            return;
        }
        let edges = graph.out_edges(i);
        let exponent = |e: usize| theta * (c[e] + lambda[graph.edge_dst(e)]);
        let shift = edges
            .clone()
            .filter(|&e| q[e] > 0.0)
            .map(exponent)
            .fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for (slot, e) in row.iter_mut().zip(edges) {
            *slot = if q[e] > 0.0 {
                q[e] * (shift - exponent(e)).exp()
            } else {
                0.0
            };
            total += *slot;
        }
        row.iter_mut().for_each(|p| *p /= total);
    };
    let rows = rows_mut(graph, out);
    if graph.edge_count() >= PARALLEL_EDGE_THRESHOLD {
        rows.into_par_iter().enumerate().for_each(solve_row);
    } else {
        rows.into_iter().enumerate().for_each(solve_row);
    }
}

/// Primal-dual iteration from the reference walk to the KL-optimal policy.
pub fn kl_policy_iterate(
    graph: &Graph,
    reference: &ReferenceMatrix,
    target: usize,
    theta: f64,
    options: &IterationOptions,
) -> Result<Policy> {
    let temperature = 1.0 / theta;
    iterate(
        graph,
        reference,
        target,
        temperature,
        Regularizer::Kl,
        options,
        |lambda, out| {
            update_rows(graph, reference, target, theta, lambda, out);
            Ok(())
        },
    )
}

/// Fixed point of `λ_i = -(1/θ) log Σ_j p_ref_ij exp(-θ (c_ij + λ_j))` with
/// `λ_t = 0`, by Jacobi sweeps from `λ = 0`.
pub fn softmin_recursion(
    graph: &Graph,
    reference: &ReferenceMatrix,
    target: usize,
    theta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    check_node(graph, target, "target")?;
    check_temperature(1.0 / theta)?;
    let q = reference.probs();
    let c = graph.costs();
    let n = graph.node_count();
    let mut lambda = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next: Vec<f64> = (0..n)
            .map(|i| {
                if i == target {
                    return 0.0;
                }
                let edges = graph.out_edges(i).filter(|&e| q[e] > 0.0);
                let shift = edges
                    .clone()
                    .map(|e| c[e] + lambda[graph.edge_dst(e)])
                    .fold(f64::INFINITY, f64::min);
                let sum: f64 = edges
                    .map(|e| q[e] * (-theta * (c[e] + lambda[graph.edge_dst(e)] - shift)).exp())
                    .sum();
                shift - sum.ln() / theta
            })
            .collect();
        residual = next.iter().zip(&lambda).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        lambda = next;
        if residual <= tol * (1.0 + scale) {
            return Ok(lambda);
        }
    }
    Err(Error::NonConvergence {
        what: "softmin recursion",
        iterations: max_iter,
        residual,
    })
}
