//! Routing policies toward an absorbing target and the primal-dual iteration
//! shared by the KL and Tsallis variants.
//!
//! Both variants alternate two steps from `P = P_ref`:
//!
//! 1. the potentials `λ` solve `(I - P) λ = c̃ + T h̃`, where `c̃_i` is the
//!    expected one-step cost and `h̃_i` the divergence of row `i` of `P`
//!    from the reference row;
//! 2. each transient row of `P` is re-optimized against the augmented costs
//!    `c_ij + λ_j` (a Gibbs row for KL, spmin for Tsallis).
//!
//! At the fixed point `λ_i` is the minimized free energy from `i` to the
//! target.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Graph, ReferenceMatrix};
use crate::linalg::{Absorbing, LinearSolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "divergence", rename_all = "lowercase")]
pub enum Regularizer {
    Kl,
    Tsallis { r: f64 },
}

impl Regularizer {
    /// Per-edge divergence density `d(p, q)`; the row divergence is `Σ_j p_j d(p_j, q_j)`.
    #[inline]
    pub fn density(&self, p: f64, q: f64) -> f64 {
        match *self {
            Regularizer::Kl => (p / q).ln(),
            Regularizer::Tsallis { r } => ((p / q).powf(r - 1.0) - 1.0) / (r - 1.0),
        }
    }

    /// `p · d(p, q)`, zero when `p = 0`.
    #[inline]
    pub fn edge_term(&self, p: f64, q: f64) -> f64 {
        if p > 0.0 {
            p * self.density(p, q)
        } else {
            0.0
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match *self {
            Regularizer::Tsallis { r } if !(r > 1.0 && r.is_finite()) => {
                Err(Error::invalid("r", r, "must be finite and > 1"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationOptions {
    /// Convergence when `max|Δλ| ≤ tol · (1 + max|λ|)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation factor in (0, 1] applied to `λ` before each transition update.
    pub relaxation: f64,
    pub linear: LinearSolverConfig,
    /// When set, the duality gap for this source is recorded on the policy.
    pub source: Option<usize>,
}

impl Default for IterationOptions {
    fn default() -> Self {
        IterationOptions {
            tol: 1e-10,
            max_iter: 10_000,
            relaxation: 1.0,
            linear: LinearSolverConfig::default(),
            source: None,
        }
    }
}

impl IterationOptions {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::invalid("tol", self.tol, "must be > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", 0, "must be ≥ 1"));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::invalid("relaxation", self.relaxation, "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// A routing policy: substochastic transitions (one value per edge slot,
/// target row zero) with the potentials `λ` they induce.
#[derive(Debug, Clone, Serialize)]
pub struct Policy {
    #[serde(flatten)]
    pub regularizer: Regularizer,
    pub target: usize,
    pub temperature: f64,
    pub transitions: Vec<f64>,
    pub lambda: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub duality_gap: Option<f64>,
}

impl Policy {
    pub fn theta(&self) -> f64 {
        1.0 / self.temperature
    }

    pub fn row<'a>(&'a self, graph: &Graph, node: usize) -> &'a [f64] {
        &self.transitions[graph.out_edges(node)]
    }

    /// Number of edges carrying positive probability.
    pub fn support_size(&self) -> usize {
        self.transitions.iter().filter(|&&p| p > 0.0).count()
    }

    pub(crate) fn absorbing<'a>(&'a self, graph: &'a Graph) -> Absorbing<'a> {
        Absorbing {
            graph,
            probs: &self.transitions,
            target: self.target,
        }
    }
}

pub(crate) fn check_temperature(temperature: f64) -> Result<()> {
    if temperature > 0.0 && temperature.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("T", temperature, "temperature must be finite and > 0"))
    }
}

pub(crate) fn check_node(graph: &Graph, node: usize, name: &'static str) -> Result<()> {
    if node < graph.node_count() {
        Ok(())
    } else {
        Err(Error::invalid(
            name,
            node,
            format!("graph has {} nodes", graph.node_count()),
        ))
    }
}

/// Expected one-step cost plus `T` times the row divergence, zero at the target.
pub(crate) fn local_free_energy(
    graph: &Graph,
    reference: &ReferenceMatrix,
    transitions: &[f64],
    target: usize,
    temperature: f64,
    regularizer: Regularizer,
) -> Vec<f64> {
    let q = reference.probs();
    let c = graph.costs();
    (0..graph.node_count())
        .map(|i| {
            if i == target {
                return 0.0;
            }
            graph
                .out_edges(i)
                .filter(|&e| q[e] > 0.0)
                .map(|e| transitions[e] * c[e] + temperature * regularizer.edge_term(transitions[e], q[e]))
                .sum()
        })
        .collect()
}

/// Potentials `λ` solving `(I - P) λ = c̃ + T h̃` for the given transitions.
pub fn lagrange_solve(
    graph: &Graph,
    reference: &ReferenceMatrix,
    transitions: &[f64],
    target: usize,
    temperature: f64,
    regularizer: Regularizer,
    config: &LinearSolverConfig,
) -> Result<Vec<f64>> {
    check_node(graph, target, "target")?;
    check_temperature(temperature)?;
    let rhs = local_free_energy(graph, reference, transitions, target, temperature, regularizer);
    let absorbing = Absorbing {
        graph,
        probs: transitions,
        target,
    };
    let mut lambda = absorbing.solve(&rhs, config)?;
    lambda[target] = 0.0;
    Ok(lambda)
}

/// Reference transitions with the target row zeroed.
pub(crate) fn killed_reference(graph: &Graph, reference: &ReferenceMatrix, target: usize) -> Vec<f64> {
    let mut p = reference.probs().to_vec();
    for e in graph.out_edges(target) {
        p[e] = 0.0;
    }
    p
}

/// Runs the primal-dual alternation. `update` rewrites the transient rows of
/// the transition vector from the potentials.
pub(crate) fn iterate<F>(
    graph: &Graph,
    reference: &ReferenceMatrix,
    target: usize,
    temperature: f64,
    regularizer: Regularizer,
    options: &IterationOptions,
    update: F,
) -> Result<Policy>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    check_node(graph, target, "target")?;
    check_temperature(temperature)?;
    regularizer.validate()?;
    options.validate()?;
    if let Some(s) = options.source {
        check_node(graph, s, "source")?;
    }

    let mut transitions = killed_reference(graph, reference, target);
    let mut lambda = lagrange_solve(
        graph,
        reference,
        &transitions,
        target,
        temperature,
        regularizer,
        &options.linear,
    )?;
    let mut driving = lambda.clone();
    let mut next = transitions.clone();
    let mut converged = false;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;

    while iterations < options.max_iter {
        iterations += 1;
        if options.relaxation < 1.0 && iterations > 1 {
            for (d, l) in driving.iter_mut().zip(&lambda) {
                *d += options.relaxation * (l - *d);
            }
        } else {
            driving.copy_from_slice(&lambda);
        }
        update(&driving, &mut next)?;
        std::mem::swap(&mut transitions, &mut next);
        let fresh = lagrange_solve(
            graph,
            reference,
            &transitions,
            target,
            temperature,
            regularizer,
            &options.linear,
        )?;
        residual = fresh
            .iter()
            .zip(&lambda)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = fresh.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        lambda = fresh;
        if residual <= options.tol * (1.0 + scale) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            what: "policy iteration",
            iterations,
            residual,
        });
    }

    let mut policy = Policy {
        regularizer,
        target,
        temperature,
        transitions,
        lambda,
        iterations,
        converged,
        duality_gap: None,
    };
    if let Some(source) = options.source.filter(|&s| s != target) {
        policy.duality_gap = Some(crate::flow::duality_gap(
            graph,
            reference,
            &policy,
            source,
            &options.linear,
        )?);
    }
    Ok(policy)
}

/// Splits an edge-slot vector into per-node row slices.
pub(crate) fn rows_mut<'a>(graph: &Graph, values: &'a mut [f64]) -> Vec<&'a mut [f64]> {
    let mut rows = Vec::with_capacity(graph.node_count());
    let mut rest = values;
    for i in 0..graph.node_count() {
        let (head, tail) = rest.split_at_mut(graph.out_degree(i));
        rows.push(head);
        rest = tail;
    }
    rows
}

/// Rows are solved in parallel only above this many edges.
pub(crate) const PARALLEL_EDGE_THRESHOLD: usize = 4096;
