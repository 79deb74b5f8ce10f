//! Weighted directed graphs with per-edge affinity and cost, edge-list
//! ingestion, and the reference random walk.
//!
//! Edges are stored row-wise (compressed sparse rows): the successors of node
//! `i` occupy the edge slots `offsets[i]..offsets[i + 1]`, sorted by
//! destination. Every per-edge quantity in this crate (reference
//! probabilities, policies, flows) is a `Vec<f64>` indexed by these slots.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use petgraph::visit::{Dfs, Reversed};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Comment prefix of the optional header listing node labels in index
/// order. Honored only before the first edge row; other readers see a comment.
pub const NODE_HEADER: &str = "# nodes";

/// How edge costs are obtained when reading an edge list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CostConvention {
    /// The fourth column holds the cost; rows without it are an error.
    #[default]
    FromColumn,
    /// `c_ij = 1 / a_ij`, as in electrical networks.
    InverseAffinity,
}

/// How edge affinities are obtained when reading an edge list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AffinityConvention {
    /// The third column holds the affinity.
    #[default]
    FromColumn,
    /// The third column holds the cost and `a_ij = 1 / c_ij`.
    InverseCost,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Expand every row into two reciprocal directed edges.
    pub undirected: bool,
    pub cost: CostConvention,
    pub affinity: AffinityConvention,
}

/// One directed edge, addressed by dense node indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub affinity: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    names: Vec<String>,
    offsets: Vec<usize>,
    src: Vec<usize>,
    dst: Vec<usize>,
    affinity: Vec<f64>,
    cost: Vec<f64>,
    undirected: bool,
}

impl Graph {
    /// Builds a validated graph. `names` fixes the node count; edge order is
    /// irrelevant. Errors report the 1-based position of the offending edge
    /// in `edges` as its line.
    pub fn from_edges(names: Vec<String>, edges: Vec<Edge>, undirected: bool) -> Result<Self> {
        let n = names.len();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for (k, e) in edges.iter().enumerate() {
            let line = k + 1;
            if e.src >= n || e.dst >= n {
                return Err(Error::Parse {
                    line,
                    message: format!("edge {} -> {} refers to a node outside 0..{n}", e.src, e.dst),
                });
            }
            validate_edge(line, &names[e.src], &names[e.dst], e.affinity, e.cost)?;
            if e.src == e.dst {
                return Err(Error::SelfLoop {
                    line,
                    node: names[e.src].clone(),
                });
            }
            if !seen.insert((e.src, e.dst)) {
                return Err(Error::DuplicateEdge {
                    line,
                    src: names[e.src].clone(),
                    dst: names[e.dst].clone(),
                });
            }
        }

        let mut sorted = edges;
        sorted.sort_by_key(|e| (e.src, e.dst));
        let mut offsets = vec![0; n + 1];
        for e in &sorted {
            offsets[e.src + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let graph = Graph {
            names,
            offsets,
            src: sorted.iter().map(|e| e.src).collect(),
            dst: sorted.iter().map(|e| e.dst).collect(),
            affinity: sorted.iter().map(|e| e.affinity).collect(),
            cost: sorted.iter().map(|e| e.cost).collect(),
            undirected,
        };
        graph.check_strongly_connected()?;
        Ok(graph)
    }

    /// Reads a whitespace-separated edge list `src dst affinity [cost]`.
    /// Lines starting with `#` and blank lines are skipped. Node labels are
    /// assigned dense indices in order of first appearance, after any labels
    /// listed in a leading [`NODE_HEADER`] line.
    pub fn load_edge_list(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_edge_list(std::io::BufReader::new(file), options).map_err(|e| match e {
            Error::Io { source, .. } => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }

    pub fn read_edge_list(reader: impl BufRead, options: &LoadOptions) -> Result<Self> {
        if options.affinity == AffinityConvention::InverseCost && options.cost == CostConvention::InverseAffinity {
            return Err(Error::invalid(
                "cost convention",
                "inverse-affinity",
                "cannot combine with affinities derived from costs",
            ));
        }
        let mut names: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut seen = HashSet::new();

        for (k, line) in reader.lines().enumerate() {
            let lineno = k + 1;
            let line = line.map_err(|source| Error::Io {
                path: Default::default(),
                source,
            })?;
            let trimmed = line.trim();
            if let Some(list) = trimmed
                .strip_prefix(NODE_HEADER)
                .filter(|l| l.starts_with(char::is_whitespace))
            {
                if edges.is_empty() && names.is_empty() {
                    for label in list.split_whitespace() {
                        if index.insert(label.to_string(), names.len()).is_some() {
                            return Err(Error::Parse {
                                line: lineno,
                                message: format!("node `{label}` listed twice"),
                            });
                        }
                        names.push(label.to_string());
                    }
                }
                continue;
            }
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = trimmed.split_whitespace().collect();
            let max_cols = match options.affinity {
                AffinityConvention::FromColumn => 4,
                AffinityConvention::InverseCost => 3,
            };
            if cols.len() < 3 || cols.len() > max_cols {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected 3 to {max_cols} columns, found {}", cols.len()),
                });
            }
            let number = |s: &str, what: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("cannot parse {what} `{s}`"),
                })
            };
            let third = number(cols[2], "weight")?;
            let fourth = cols.get(3).map(|s| number(s, "cost")).transpose()?;
            let (affinity, cost) = match (options.affinity, fourth, options.cost) {
                (AffinityConvention::InverseCost, _, _) => (1.0 / third, third),
                (AffinityConvention::FromColumn, Some(c), _) => (third, c),
                (AffinityConvention::FromColumn, None, CostConvention::InverseAffinity) => (third, 1.0 / third),
                (AffinityConvention::FromColumn, None, CostConvention::FromColumn) => {
                    return Err(Error::MissingCost {
                        line: lineno,
                        src: cols[0].to_string(),
                        dst: cols[1].to_string(),
                    })
                }
            };
            validate_edge(lineno, cols[0], cols[1], affinity, cost)?;
            if cols[0] == cols[1] {
                return Err(Error::SelfLoop {
                    line: lineno,
                    node: cols[0].to_string(),
                });
            }
            let mut id = |label: &str| -> usize {
                *index.entry(label.to_string()).or_insert_with(|| {
                    names.push(label.to_string());
                    names.len() - 1
                })
            };
            let (s, d) = (id(cols[0]), id(cols[1]));
            let mut push = |src: usize, dst: usize, a: &str, b: &str| -> Result<()> {
                if !seen.insert((src, dst)) {
                    return Err(Error::DuplicateEdge {
                        line: lineno,
                        src: a.to_string(),
                        dst: b.to_string(),
                    });
                }
                edges.push(Edge {
                    src,
                    dst,
                    affinity,
                    cost,
                });
                Ok(())
            };
            push(s, d, cols[0], cols[1])?;
            if options.undirected {
                push(d, s, cols[1], cols[0])?;
            }
        }
        Graph::from_edges(names, edges, options.undirected)
    }

    /// Writes the canonical directed form: a `# nodes` header fixing the node
    /// order, then one row `src dst affinity cost` per directed edge in
    /// (src, dst) index order. Reading it back with default options
    /// reproduces the same graph.
    pub fn write_edge_list(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{NODE_HEADER}\t{}", self.names.join("\t"))?;
        for e in 0..self.edge_count() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                self.names[self.src[e]], self.names[self.dst[e]], self.affinity[e], self.cost[e]
            )?;
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.dst.len()
    }

    /// Whether the graph was expanded from undirected input.
    pub fn is_undirected(&self) -> bool {
        self.undirected
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, node: usize) -> &str {
        &self.names[node]
    }

    /// Resolves a node label; falls back to a numeric index when no label matches.
    pub fn node_index(&self, label: &str) -> Result<usize> {
        if let Some(i) = self.names.iter().position(|n| n == label) {
            return Ok(i);
        }
        match label.parse::<usize>() {
            Ok(i) if i < self.node_count() => Ok(i),
            _ => Err(Error::UnknownNode(label.to_string())),
        }
    }

    /// Edge slots of the successors of `node`.
    pub fn out_edges(&self, node: usize) -> Range<usize> {
        self.offsets[node]..self.offsets[node + 1]
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn successors(&self, node: usize) -> &[usize] {
        &self.dst[self.out_edges(node)]
    }

    pub fn edge_src(&self, edge: usize) -> usize {
        self.src[edge]
    }

    pub fn edge_dst(&self, edge: usize) -> usize {
        self.dst[edge]
    }

    pub fn costs(&self) -> &[f64] {
        &self.cost
    }

    pub fn affinities(&self) -> &[f64] {
        &self.affinity
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        (0..self.edge_count()).map(move |e| Edge {
            src: self.src[e],
            dst: self.dst[e],
            affinity: self.affinity[e],
            cost: self.cost[e],
        })
    }

    pub fn find_edge(&self, src: usize, dst: usize) -> Option<usize> {
        let range = self.out_edges(src);
        self.dst[range.clone()]
            .binary_search(&dst)
            .ok()
            .map(|k| range.start + k)
    }

    /// Dense affinity matrix `A`.
    pub fn affinity_matrix(&self) -> DMatrix<f64> {
        let n = self.node_count();
        let mut a = DMatrix::zeros(n, n);
        for e in self.edges() {
            a[(e.src, e.dst)] = e.affinity;
        }
        a
    }

    pub(crate) fn to_petgraph(&self) -> petgraph::Graph<(), f64> {
        let mut g = petgraph::Graph::with_capacity(self.node_count(), self.edge_count());
        let nodes: Vec<_> = (0..self.node_count()).map(|_| g.add_node(())).collect();
        for e in self.edges() {
            g.add_edge(nodes[e.src], nodes[e.dst], e.cost);
        }
        g
    }

    fn check_strongly_connected(&self) -> Result<()> {
        let g = self.to_petgraph();
        let root = petgraph::graph::NodeIndex::new(0);
        for (direction, reached) in [
            ("reachable from", reach(&g, root)),
            ("able to reach", reach(Reversed(&g), root)),
        ] {
            if let Some(missing) = reached.iter().position(|&r| !r) {
                return Err(Error::NotStronglyConnected {
                    node: self.names[missing].clone(),
                    root: self.names[0].clone(),
                    direction,
                });
            }
        }
        Ok(())
    }
}

fn reach<G>(g: G, root: petgraph::graph::NodeIndex) -> Vec<bool>
where
    G: petgraph::visit::IntoNeighbors<NodeId = petgraph::graph::NodeIndex>
        + petgraph::visit::Visitable
        + petgraph::visit::NodeCount,
{
    let mut reached = vec![false; g.node_count()];
    let mut dfs = Dfs::new(g, root);
    while let Some(v) = dfs.next(g) {
        reached[v.index()] = true;
    }
    reached
}

fn validate_edge(line: usize, src: &str, dst: &str, affinity: f64, cost: f64) -> Result<()> {
    for (what, value) in [("affinity", affinity), ("cost", cost)] {
        if value < 0.0 {
            return Err(Error::NegativeWeight {
                line,
                what,
                value,
                src: src.to_string(),
                dst: dst.to_string(),
            });
        }
        if !value.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("{what} on edge {src} -> {dst} is not finite"),
            });
        }
    }
    if affinity == 0.0 {
        return Err(Error::Parse {
            line,
            message: format!("zero affinity on edge {src} -> {dst}; omit the row instead"),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    /// `p_ij ∝ a_ij`
    #[default]
    Natural,
    /// `p_ij = 1 / |Succ(i)|`
    Uniform,
}

impl fmt::Display for ReferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReferenceKind::Natural => "natural",
            ReferenceKind::Uniform => "uniform",
        })
    }
}

/// Transition probabilities of the reference random walk, one per edge slot.
/// Rows are stochastic; the target row is zeroed only inside the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMatrix {
    kind: ReferenceKind,
    probs: Vec<f64>,
}

impl ReferenceMatrix {
    pub fn new(graph: &Graph, kind: ReferenceKind) -> Result<Self> {
        let mut probs = vec![0.0; graph.edge_count()];
        for i in 0..graph.node_count() {
            let range = graph.out_edges(i);
            if range.is_empty() {
                return Err(Error::invalid("graph", graph.name(i), "node has no successor"));
            }
            match kind {
                ReferenceKind::Natural => {
                    let total: f64 = graph.affinities()[range.clone()].iter().sum();
                    for e in range {
                        probs[e] = graph.affinities()[e] / total;
                    }
                }
                ReferenceKind::Uniform => {
                    let p = 1.0 / range.len() as f64;
                    for e in range {
                        probs[e] = p;
                    }
                }
            }
        }
        Ok(ReferenceMatrix { kind, probs })
    }

    pub fn kind(&self) -> ReferenceKind {
        self.kind
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row<'a>(&'a self, graph: &Graph, node: usize) -> &'a [f64] {
        &self.probs[graph.out_edges(node)]
    }
}

/// Least cumulative cost from `source` to every node (Dijkstra).
pub fn shortest_path_costs(graph: &Graph, source: usize) -> Vec<f64> {
    let g = graph.to_petgraph();
    let dist = petgraph::algo::dijkstra(&g, petgraph::graph::NodeIndex::new(source), None, |e| *e.weight());
    let mut out = vec![f64::INFINITY; graph.node_count()];
    for (node, d) in dist {
        out[node.index()] = d;
    }
    out
}

/// Least cumulative cost of a directed path `source -> target`.
pub fn shortest_path_cost(graph: &Graph, source: usize, target: usize) -> Result<f64> {
    if source == target {
        return Err(Error::invalid("source", source, "source and target must differ"));
    }
    let d = shortest_path_costs(graph, source)[target];
    if d.is_finite() {
        Ok(d)
    } else {
        Err(Error::invalid("target", graph.name(target), "unreachable from source"))
    }
}
