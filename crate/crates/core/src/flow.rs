//! Expected visits, edge flows and expected costs under a policy.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Graph, ReferenceMatrix};
use crate::linalg::LinearSolverConfig;
use crate::policy::{check_node, local_free_energy, Policy};

/// Flow of one unit injected at `source` and absorbed at the policy's target.
#[derive(Debug, Clone, Serialize)]
pub struct FlowField {
    pub source: usize,
    pub target: usize,
    /// Expected number of visits `n̄_i`.
    pub node_visits: Vec<f64>,
    /// `n̄_ij = n̄_i p_ij`, one value per edge slot.
    pub edge_flows: Vec<f64>,
}

/// Oriented positive part of `n̄_ij - n̄_ji`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NetFlow {
    pub src: usize,
    pub dst: usize,
    pub value: f64,
}

impl FlowField {
    /// Net flows, at most one per pair of reciprocal edges, in edge-slot order.
    pub fn net_flows(&self, graph: &Graph) -> Vec<NetFlow> {
        (0..graph.edge_count())
            .filter_map(|e| {
                let (i, j) = (graph.edge_src(e), graph.edge_dst(e));
                let back = graph.find_edge(j, i).map_or(0.0, |b| self.edge_flows[b]);
                let value = self.edge_flows[e] - back;
                (value > 0.0).then_some(NetFlow { src: i, dst: j, value })
            })
            .collect()
    }

    /// Largest `|n̄_j - Σ_i n̄_i p_ij - δ_sj|` over all nodes.
    pub fn conservation_residual(&self, graph: &Graph) -> f64 {
        let mut inflow = vec![0.0; graph.node_count()];
        inflow[self.source] = 1.0;
        for (e, f) in self.edge_flows.iter().enumerate() {
            inflow[graph.edge_dst(e)] += f;
        }
        inflow
            .iter()
            .zip(&self.node_visits)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Solves `(I - P)ᵀ n̄ = e_s` and derives the edge flows.
pub fn expected_visits(
    graph: &Graph,
    policy: &Policy,
    source: usize,
    config: &LinearSolverConfig,
) -> Result<FlowField> {
    check_node(graph, source, "source")?;
    if source == policy.target {
        return Err(Error::invalid("source", source, "source must differ from the target"));
    }
    let mut rhs = vec![0.0; graph.node_count()];
    rhs[source] = 1.0;
    let node_visits = policy.absorbing(graph).solve_transposed(&rhs, config)?;
    let edge_flows = (0..graph.edge_count())
        .map(|e| node_visits[graph.edge_src(e)] * policy.transitions[e])
        .collect();
    Ok(FlowField {
        source,
        target: policy.target,
        node_visits,
        edge_flows,
    })
}

/// `⟨c⟩_st = Σ n̄_ij c_ij`
pub fn expected_cost(graph: &Graph, flow: &FlowField) -> f64 {
    flow.edge_flows.iter().zip(graph.costs()).map(|(f, c)| f * c).sum()
}

/// Expected cost to the target from every node at once: solves `(I - P) x = c̃`.
pub fn expected_costs_to_target(graph: &Graph, policy: &Policy, config: &LinearSolverConfig) -> Result<Vec<f64>> {
    let c = graph.costs();
    let rhs: Vec<f64> = (0..graph.node_count())
        .map(|i| {
            if i == policy.target {
                0.0
            } else {
                graph.out_edges(i).map(|e| policy.transitions[e] * c[e]).sum()
            }
        })
        .collect();
    let mut x = policy.absorbing(graph).solve(&rhs, config)?;
    x[policy.target] = 0.0;
    Ok(x)
}

/// Primal free-energy objective `Σ n̄_i p_ij (c_ij + T d(p_ij, p_ref_ij))`.
pub fn primal_objective(graph: &Graph, reference: &ReferenceMatrix, policy: &Policy, flow: &FlowField) -> f64 {
    let per_node = local_free_energy(
        graph,
        reference,
        &policy.transitions,
        policy.target,
        policy.temperature,
        policy.regularizer,
    );
    per_node.iter().zip(&flow.node_visits).map(|(g, n)| g * n).sum()
}

/// `|primal objective - λ_s|` for the given source.
pub fn duality_gap(
    graph: &Graph,
    reference: &ReferenceMatrix,
    policy: &Policy,
    source: usize,
    config: &LinearSolverConfig,
) -> Result<f64> {
    let flow = expected_visits(graph, policy, source, config)?;
    Ok((primal_objective(graph, reference, policy, &flow) - policy.lambda[source]).abs())
}
