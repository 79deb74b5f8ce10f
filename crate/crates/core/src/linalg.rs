//! Linear systems `(I - P) x = b` and `(I - P)ᵀ x = b` for a transition
//! matrix `P` stored per edge slot whose target row is zero.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSolverConfig {
    /// Graphs with at most this many nodes use a dense LU factorization;
    /// larger ones use fixed-point sweeps.
    pub dense_limit: usize,
    pub sweep_tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for LinearSolverConfig {
    fn default() -> Self {
        LinearSolverConfig {
            dense_limit: 2000,
            sweep_tolerance: 1e-14,
            max_sweeps: 200_000,
        }
    }
}

/// A transition matrix over the edge slots of a graph with an absorbing target.
#[derive(Clone, Copy)]
pub(crate) struct Absorbing<'a> {
    pub graph: &'a Graph,
    pub probs: &'a [f64],
    pub target: usize,
}

impl Absorbing<'_> {
    fn dense(&self, transpose: bool) -> DMatrix<f64> {
        let n = self.graph.node_count();
        let mut m = DMatrix::identity(n, n);
        for i in (0..n).filter(|&i| i != self.target) {
            for e in self.graph.out_edges(i) {
                let j = self.graph.edge_dst(e);
                let (row, col) = if transpose { (j, i) } else { (i, j) };
                m[(row, col)] -= self.probs[e];
            }
        }
        m
    }

    /// Solves `(I - P) x = b`.
    pub fn solve(&self, rhs: &[f64], config: &LinearSolverConfig) -> Result<Vec<f64>> {
        if self.graph.node_count() <= config.dense_limit {
            self.solve_dense(rhs, false)
        } else {
            self.sweep(rhs, config)
        }
    }

    /// Solves `(I - P)ᵀ x = b`.
    pub fn solve_transposed(&self, rhs: &[f64], config: &LinearSolverConfig) -> Result<Vec<f64>> {
        if self.graph.node_count() <= config.dense_limit {
            self.solve_dense(rhs, true)
        } else {
            self.sweep_transposed(rhs, config)
        }
    }

    fn solve_dense(&self, rhs: &[f64], transpose: bool) -> Result<Vec<f64>> {
        let lu = self.dense(transpose).lu();
        let b = nalgebra::DVector::from_column_slice(rhs);
        let x = lu
            .solve(&b)
            .ok_or_else(|| Error::Singular(format!("I - P is singular for target {}", self.target)))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular(format!(
                "non-finite solution of I - P for target {}",
                self.target
            )));
        }
        Ok(x.as_slice().to_vec())
    }

    // Gauss-Seidel on x_i = b_i + Σ_j p_ij x_j.
    fn sweep(&self, rhs: &[f64], config: &LinearSolverConfig) -> Result<Vec<f64>> {
        let n = self.graph.node_count();
        let mut x = rhs.to_vec();
        let mut delta = f64::INFINITY;
        for _ in 0..config.max_sweeps {
            delta = 0.0;
            let mut scale: f64 = 0.0;
            for i in 0..n {
                let mut v = rhs[i];
                if i != self.target {
                    for e in self.graph.out_edges(i) {
                        v += self.probs[e] * x[self.graph.edge_dst(e)];
                    }
                }
                delta = delta.max((v - x[i]).abs());
                scale = scale.max(v.abs());
                x[i] = v;
            }
            if delta <= config.sweep_tolerance * (1.0 + scale) {
                return Ok(x);
            }
        }
        Err(Error::NonConvergence {
            what: "fixed-point linear solve",
            iterations: config.max_sweeps,
            residual: delta,
        })
    }

    // Jacobi on x_j = b_j + Σ_i x_i p_ij.
    fn sweep_transposed(&self, rhs: &[f64], config: &LinearSolverConfig) -> Result<Vec<f64>> {
        let n = self.graph.node_count();
        let mut x = rhs.to_vec();
        let mut delta = f64::INFINITY;
        for _ in 0..config.max_sweeps {
            let mut next = rhs.to_vec();
            for i in (0..n).filter(|&i| i != self.target) {
                for e in self.graph.out_edges(i) {
                    next[self.graph.edge_dst(e)] += x[i] * self.probs[e];
                }
            }
            delta = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            x = next;
            if delta <= config.sweep_tolerance * (1.0 + scale) {
                return Ok(x);
            }
        }
        Err(Error::NonConvergence {
            what: "fixed-point linear solve",
            iterations: config.max_sweeps,
            residual: delta,
        })
    }
}
