//! Node dissimilarities built from per-target policies, their conversion to
//! kernels by classical MDS, and a triangle-inequality audit.
//!
//! One policy per target serves every source. Free-energy kinds read the
//! potentials `λ` (directed free energy to the target); RSP kinds solve one
//! extra system `(I - P) x = c̃` per target for the expected costs of all
//! sources at once.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::expected_costs_to_target;
use crate::graph::{Graph, ReferenceMatrix};
use crate::policy::{IterationOptions, Policy};
use crate::rsp_kl::kl_policy_iterate;
use crate::rsp_tsallis::tsallis_policy_iterate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DissimilarityKind {
    /// `(φ_st + φ_ts) / 2` with Tsallis potentials.
    TsallisFe,
    /// `⟨c⟩_st + ⟨c⟩_ts` under the Tsallis policy.
    TsallisRsp,
    KlFe,
    KlRsp,
}

impl DissimilarityKind {
    pub fn is_tsallis(self) -> bool {
        matches!(self, DissimilarityKind::TsallisFe | DissimilarityKind::TsallisRsp)
    }

    fn uses_free_energy(self) -> bool {
        matches!(self, DissimilarityKind::TsallisFe | DissimilarityKind::KlFe)
    }
}

impl fmt::Display for DissimilarityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DissimilarityKind::TsallisFe => "tsallis-fe",
            DissimilarityKind::TsallisRsp => "tsallis-rsp",
            DissimilarityKind::KlFe => "kl-fe",
            DissimilarityKind::KlRsp => "kl-rsp",
        })
    }
}

impl FromStr for DissimilarityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsallis-fe" => Ok(DissimilarityKind::TsallisFe),
            "tsallis-rsp" => Ok(DissimilarityKind::TsallisRsp),
            "kl-fe" => Ok(DissimilarityKind::KlFe),
            "kl-rsp" => Ok(DissimilarityKind::KlRsp),
            other => Err(Error::invalid(
                "kind",
                other,
                "expected tsallis-fe, tsallis-rsp, kl-fe or kl-rsp",
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DissimilarityMatrix {
    pub kind: DissimilarityKind,
    /// Divergence order; `None` for KL kinds.
    pub r: Option<f64>,
    pub theta: f64,
    pub values: DMatrix<f64>,
}

/// Policy toward `target` for the family of `kind`.
pub fn target_policy(
    graph: &Graph,
    reference: &ReferenceMatrix,
    kind: DissimilarityKind,
    r: f64,
    theta: f64,
    target: usize,
    options: &IterationOptions,
) -> Result<Policy> {
    if kind.is_tsallis() {
        tsallis_policy_iterate(graph, reference, target, r, 1.0 / theta, options)
    } else {
        kl_policy_iterate(graph, reference, target, theta, options)
    }
}

/// Directed quantity toward every target: column `t` holds `φ_·t` (FE kinds)
/// or `⟨c⟩_·t` (RSP kinds).
pub fn directed_matrix(
    graph: &Graph,
    reference: &ReferenceMatrix,
    kind: DissimilarityKind,
    r: f64,
    theta: f64,
    options: &IterationOptions,
) -> Result<DMatrix<f64>> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::invalid("theta", theta, "must be finite and > 0"));
    }
    let n = graph.node_count();
    let options = IterationOptions {
        source: None,
        ..*options
    };
    let columns = (0..n)
        .into_par_iter()
        .map(|t| {
            let policy = target_policy(graph, reference, kind, r, theta, t, &options)?;
            if kind.uses_free_energy() {
                Ok(policy.lambda)
            } else {
                expected_costs_to_target(graph, &policy, &options.linear)
            }
            .map_err(|e: Error| e)
        })
        .enumerate()
        .map(|(t, column)| {
            column.map_err(|source| Error::AtTarget {
                target: t,
                source: Box::new(source),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(n, n, |s, t| columns[t][s]))
}

/// Symmetrized dissimilarity of the requested kind; zero diagonal.
pub fn dissimilarity_matrix(
    graph: &Graph,
    reference: &ReferenceMatrix,
    kind: DissimilarityKind,
    r: f64,
    theta: f64,
    options: &IterationOptions,
) -> Result<DissimilarityMatrix> {
    let directed = directed_matrix(graph, reference, kind, r, theta, options)?;
    let n = directed.nrows();
    let factor = if kind.uses_free_energy() { 0.5 } else { 1.0 };
    let values = DMatrix::from_fn(n, n, |s, t| {
        if s == t {
            0.0
        } else {
            factor * (directed[(s, t)] + directed[(t, s)])
        }
    });
    Ok(DissimilarityMatrix {
        kind,
        r: kind.is_tsallis().then_some(r),
        theta,
        values,
    })
}

#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub values: DMatrix<f64>,
    /// Negative spectral mass removed, relative to the total absolute spectrum.
    pub clipped_eigenvalue_mass: f64,
}

/// Classical MDS: `K = -½ H D⁽²⁾ H` with `H = I - 11ᵀ/n`, negative eigenvalues set to zero.
pub fn mds_kernel(dissimilarities: &DMatrix<f64>) -> KernelMatrix {
    let n = dissimilarities.nrows();
    if n == 0 {
        return KernelMatrix {
            values: DMatrix::zeros(0, 0),
            clipped_eigenvalue_mass: 0.0,
        };
    }
    let squared = dissimilarities.map(|d| d * d);
    let centered = double_center(&squared) * -0.5;
    let symmetric = (&centered + centered.transpose()) * 0.5;
    let eigen = SymmetricEigen::new(symmetric);
    let total: f64 = eigen.eigenvalues.iter().map(|v| v.abs()).sum();
    let clipped: f64 = eigen.eigenvalues.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    let kept = eigen.eigenvalues.map(|v| v.max(0.0));
    let values = &eigen.eigenvectors * DMatrix::from_diagonal(&kept) * eigen.eigenvectors.transpose();
    let values = (&values + values.transpose()) * 0.5;
    KernelMatrix {
        values,
        clipped_eigenvalue_mass: if total > 0.0 { clipped / total } else { 0.0 },
    }
}

/// `H M H` with the centering matrix `H = I - 11ᵀ/n`.
pub fn double_center(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() as f64;
    let row_means = m.column_mean();
    let col_means = m.row_mean();
    let grand = m.mean();
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        m[(i, j)] - row_means[i] - col_means[j] + grand
    })
    .map(|v| if n > 0.0 { v } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriangleReport {
    /// Unordered endpoint pairs `{i, k}` with an intermediate `j` such that
    /// `Δ_ik > Δ_ij + Δ_jk + slack`.
    pub violations: usize,
    /// Smallest `Δ_ij + Δ_jk - Δ_ik` over all triples (negative when violated).
    pub worst_slack: f64,
    pub worst_triple: Option<(usize, usize, usize)>,
}

pub const TRIANGLE_SLACK: f64 = 1e-9;

/// Scans all triples of distinct nodes.
pub fn triangle_check(dissimilarities: &DMatrix<f64>, slack: f64) -> Result<TriangleReport> {
    let n = dissimilarities.nrows();
    if dissimilarities.ncols() != n {
        return Err(Error::invalid(
            "matrix",
            format!("{}x{}", n, dissimilarities.ncols()),
            "must be square",
        ));
    }
    let d = dissimilarities;
    let mut report = TriangleReport {
        violations: 0,
        worst_slack: f64::INFINITY,
        worst_triple: None,
    };
    for i in 0..n {
        for k in (i + 1)..n {
            for j in (0..n).filter(|&j| j != i && j != k) {
                let gap = d[(i, j)] + d[(j, k)] - d[(i, k)];
                if gap < -slack {
                    report.violations += 1;
                }
                if gap < report.worst_slack {
                    report.worst_slack = gap;
                    report.worst_triple = Some((i, j, k));
                }
            }
        }
    }
    Ok(report)
}

/// Formats with 12 significant digits, shortest representation.
pub fn format_significant(x: f64) -> String {
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    format!("{rounded}")
}

/// CSV with a header row of node names followed by one row per node.
pub fn write_matrix_csv(names: &[String], values: &DMatrix<f64>, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{}", names.join(","))?;
    for i in 0..values.nrows() {
        let row: Vec<String> = (0..values.ncols())
            .map(|j| format_significant(values[(i, j)]))
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_matrix_csv(reader: impl BufRead) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut lines = reader
        .lines()
        .enumerate()
        .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
    let io = |source| Error::Io {
        path: Default::default(),
        source,
    };
    let names: Vec<String> = match lines.next() {
        Some((_, line)) => line.map_err(io)?.split(',').map(|s| s.trim().to_string()).collect(),
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty matrix file".into(),
            })
        }
    };
    let n = names.len();
    let mut values = Vec::with_capacity(n * n);
    let mut rows = 0;
    for (k, line) in lines {
        let line = line.map_err(io)?;
        let row: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: k + 1,
                    message: format!("cannot parse `{}`", s.trim()),
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != n {
            return Err(Error::Parse {
                line: k + 1,
                message: format!("expected {n} values, found {}", row.len()),
            });
        }
        values.extend(row);
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse {
            line: rows + 2,
            message: format!("expected {n} rows, found {rows}"),
        });
    }
    Ok((names, DMatrix::from_row_slice(n, n, &values)))
}
