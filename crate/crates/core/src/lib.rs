//! Sparse randomized shortest-path routing on weighted directed graphs.
//!
//! A routing policy toward a target node is found by alternating a linear
//! solve for the potentials `λ` with a row-wise re-optimization of the
//! transition probabilities. With Tsallis regularization each row update is a
//! sparse simplex minimization ([`spmin`]) that zeroes out expensive edges;
//! with KL regularization it is a Gibbs row and the classical randomized
//! shortest-path model is recovered.
//!
//! ```
//! use sparse_rsp::{Graph, LoadOptions, ReferenceKind, ReferenceMatrix, IterationOptions};
//! use sparse_rsp::rsp_tsallis::tsallis_policy_iterate;
//!
//! let text = "s a 1 1\na t 1 1\ns t 1 5\nt s 1 1\n";
//! let graph = Graph::read_edge_list(text.as_bytes(), &LoadOptions::default())?;
//! let reference = ReferenceMatrix::new(&graph, ReferenceKind::Natural)?;
//! let t = graph.node_index("t")?;
//! let policy = tsallis_policy_iterate(&graph, &reference, t, 2.0, 0.1, &IterationOptions::default())?;
//! // At low temperature the expensive shortcut s -> t is dropped.
//! let s = graph.node_index("s")?;
//! assert_eq!(policy.row(&graph, s), &[1.0, 0.0]);
//! # Ok::<(), sparse_rsp::Error>(())
//! ```

pub mod cluster;
pub mod dissim;
pub mod error;
pub mod flow;
pub mod graph;
pub mod linalg;
pub mod policy;
pub mod rsp_kl;
pub mod rsp_tsallis;
pub mod simplex;
pub mod synth;

pub use cluster::{ClusterScores, Partition};
pub use dissim::{DissimilarityKind, DissimilarityMatrix, KernelMatrix};
pub use error::{Error, Result};
pub use flow::{FlowField, NetFlow};
pub use graph::{AffinityConvention, CostConvention, Edge, Graph, LoadOptions, ReferenceKind, ReferenceMatrix};
pub use linalg::LinearSolverConfig;
pub use policy::{IterationOptions, Policy, Regularizer};
pub use simplex::{spmin, SimplexProblem, SimplexSolution};
