//! Sparse randomized shortest paths under Tsallis-divergence regularization.
//!
//! Each sweep solves the potential system for the current transitions, then
//! replaces every transient row by the spmin solution for the augmented
//! costs `c_ij + λ_j` against the reference row. Rows whose augmented cost
//! reaches the row threshold get probability exactly zero, so the policy
//! uses fewer and fewer edges as the temperature drops.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Graph, ReferenceMatrix};
use crate::linalg::LinearSolverConfig;
use crate::policy::{
    check_node, check_temperature, iterate, lagrange_solve, rows_mut, IterationOptions, Policy, Regularizer,
    PARALLEL_EDGE_THRESHOLD,
};
use crate::simplex;

/// Tsallis directed `r`-divergence `H_r(p | q) = 1/(r-1) Σ p_i ((p_i/q_i)^(r-1) - 1)`.
pub fn tsallis_divergence(p: &[f64], reference: &[f64], r: f64) -> Result<f64> {
    if !(r > 1.0 && r.is_finite()) {
        return Err(Error::invalid("r", r, "must be finite and > 1"));
    }
    if p.len() != reference.len() {
        return Err(Error::invalid("p", p.len(), "length differs from the reference"));
    }
    let regularizer = Regularizer::Tsallis { r };
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(reference).enumerate() {
        if pi > 0.0 && qi <= 0.0 {
            return Err(Error::invalid(
                "p",
                i,
                "probability mass outside the support of the reference",
            ));
        }
        total += regularizer.edge_term(pi, qi);
    }
    Ok(total)
}

/// Potentials for fixed transitions under Tsallis regularization.
pub fn tsallis_lagrange_solve(
    graph: &Graph,
    reference: &ReferenceMatrix,
    transitions: &[f64],
    target: usize,
    r: f64,
    temperature: f64,
    config: &LinearSolverConfig,
) -> Result<Vec<f64>> {
    let regularizer = Regularizer::Tsallis { r };
    regularizer.validate()?;
    lagrange_solve(graph, reference, transitions, target, temperature, regularizer, config)
}

/// One spmin solve per transient node against the augmented costs.
pub fn tsallis_transition_update(
    graph: &Graph,
    reference: &ReferenceMatrix,
    target: usize,
    r: f64,
    temperature: f64,
    lambda: &[f64],
) -> Result<Vec<f64>> {
    check_node(graph, target, "target")?;
    check_temperature(temperature)?;
    Regularizer::Tsallis { r }.validate()?;
    let mut out = vec![0.0; graph.edge_count()];
    update_rows(graph, reference, target, r, temperature, lambda, &mut out)?;
    Ok(out)
}

fn update_rows(
    graph: &Graph,
    reference: &ReferenceMatrix,
    target: usize,
    r: f64,
    temperature: f64,
    lambda: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let c = graph.costs();
    let solve_row = |(i, row): (usize, &mut [f64])| -> Result<()> {
        if i == target {
            row.fill(0.0);
            return Ok(());
        }
        let edges = graph.out_edges(i);
        let augmented: Vec<f64> = edges.clone().map(|e| c[e] + lambda[graph.edge_dst(e)]).collect();
        simplex::solve_into(&augmented, &reference.probs()[edges], r, temperature, row)
            .map(|_| ())
            .map_err(|source| Error::AtNode {
                node: i,
                source: Box::new(source),
            })
    };
    let rows = rows_mut(graph, out);
    if graph.edge_count() >= PARALLEL_EDGE_THRESHOLD {
        rows.into_par_iter().enumerate().try_for_each(solve_row)
    } else {
        rows.into_iter().enumerate().try_for_each(solve_row)
    }
}

/// Sparse policy for `target` at temperature `T` and divergence order `r`.
pub fn tsallis_policy_iterate(
    graph: &Graph,
    reference: &ReferenceMatrix,
    target: usize,
    r: f64,
    temperature: f64,
    options: &IterationOptions,
) -> Result<Policy> {
    let regularizer = Regularizer::Tsallis { r };
    iterate(
        graph,
        reference,
        target,
        temperature,
        regularizer,
        options,
        |lambda, out| update_rows(graph, reference, target, r, temperature, lambda, out),
    )
}

/// Matrix `Q` of the Hessian quadratic form of the flow objective at one
/// node, for row probabilities `p`, reference `q` and order `r`:
/// `Q_jl = δ_jl q_j^(1-r) p_j^(r-2) - (q_j^(1-r) p_j^(r-1) + q_l^(1-r) p_l^(r-1)) + Σ_k q_k^(1-r) p_k^r`.
pub fn hessian_form(p: &[f64], reference: &[f64], r: f64) -> DMatrix<f64> {
    let m = p.len();
    let weight: Vec<f64> = reference.iter().map(|q| q.powf(1.0 - r)).collect();
    let first: Vec<f64> = (0..m).map(|j| weight[j] * p[j].powf(r - 1.0)).collect();
    let total: f64 = (0..m).map(|j| weight[j] * p[j].powf(r)).sum();
    DMatrix::from_fn(m, m, |j, l| {
        let diagonal = if j == l { weight[j] * p[j].powf(r - 2.0) } else { 0.0 };
        diagonal - (first[j] + first[l]) + total
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityInstance {
    pub r: f64,
    pub p: Vec<f64>,
    pub reference: Vec<f64>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityReport {
    pub dimension: usize,
    pub samples: usize,
    /// Smallest `λ_min / λ_max` over all samples.
    pub min_relative_eigenvalue: f64,
    pub worst_instance: ConvexityInstance,
}

/// Samples random `(p, q, r)` and reports the most negative relative
/// eigenvalue of [`hessian_form`]. Sample `k` draws from its own RNG stream,
/// so the report does not depend on thread scheduling.
pub fn convexity_probe(dimension: usize, samples: usize, r_range: (f64, f64), seed: u64) -> Result<ConvexityReport> {
    if dimension < 2 {
        return Err(Error::invalid("m", dimension, "need at least 2 dimensions"));
    }
    if samples == 0 {
        return Err(Error::invalid("samples", 0, "need at least one sample"));
    }
    let (lo, hi) = r_range;
    if !(lo > 1.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::invalid("r range", format!("{lo}..{hi}"), "need 1 < lo ≤ hi"));
    }
    let worst = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let p = random_simplex(&mut rng, dimension);
            let reference = random_simplex(&mut rng, dimension);
            let r = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let eigen = SymmetricEigen::new(hessian_form(&p, &reference, r)).eigenvalues;
            let min = eigen.iter().copied().fold(f64::INFINITY, f64::min);
            let max = eigen.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            ConvexityInstance {
                r,
                p,
                reference,
                min_eigenvalue: min,
                max_eigenvalue: max,
            }
        })
        .min_by(|a, b| relative(a).total_cmp(&relative(b)))
        .expect("at least one sample");
    Ok(ConvexityReport {
        dimension,
        samples,
        min_relative_eigenvalue: relative(&worst),
        worst_instance: worst,
    })
}

fn relative(instance: &ConvexityInstance) -> f64 {
    instance.min_eigenvalue / instance.max_eigenvalue
}

/// Uniform draw from the open simplex (normalized exponentials).
fn random_simplex(rng: &mut impl Rng, m: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..m)
        .map(|_| loop {
            let x = -(1.0 - rng.random::<f64>()).ln();
            if x > 0.0 {
                break x;
            }
        })
        .collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}
