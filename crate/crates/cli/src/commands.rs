use std::io::Write;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use sparse_rsp::cluster::{tune_parameter, TuningOptions, TuningResult};
use sparse_rsp::dissim::{dissimilarity_matrix, read_matrix_csv, triangle_check, write_matrix_csv};
use sparse_rsp::flow::{expected_cost, expected_visits, primal_objective};
use sparse_rsp::rsp_kl::kl_policy_iterate;
use sparse_rsp::rsp_tsallis::{convexity_probe, tsallis_policy_iterate, ConvexityReport};
use sparse_rsp::simplex::kkt_residual;
use sparse_rsp::{
    spmin, DissimilarityKind, FlowField, Graph, Partition, Policy, ReferenceKind, ReferenceMatrix, SimplexProblem,
};

use crate::args::{
    parse_values, CheckCommand, ClusterArgs, DissimArgs, DivergenceArg, GraphArgs, PolicyArgs, RoutingArgs,
    SimplexArgs, SpminArgs,
};
use crate::output::{self, number, number_list, write_flow_dot, write_json, DISPLAY_THRESHOLD};

const DEFAULT_R: f64 = 2.0;

fn schema(name: &str) -> String {
    format!("sparse-rsp/{name}/1")
}

fn stdout() -> &'static Path {
    Path::new("-")
}

fn load(args: &GraphArgs) -> Result<(Graph, ReferenceMatrix)> {
    let graph = Graph::load_edge_list(&args.graph, &args.load_options())
        .with_context(|| format!("--graph {}", args.graph.display()))?;
    let reference = ReferenceMatrix::new(&graph, args.reference_kind()).context("--ref")?;
    Ok((graph, reference))
}

fn node(graph: &Graph, name: &str, flag: &str) -> Result<usize> {
    graph.node_index(name).with_context(|| flag.to_string())
}

/// Order for Tsallis computations; rejects `--r` on KL ones.
fn order(r: Option<f64>, tsallis: bool, what: &str) -> Result<f64> {
    match r {
        Some(_) if !tsallis => bail!("--r applies only to Tsallis {what}"),
        Some(r) => Ok(r),
        None => Ok(DEFAULT_R),
    }
}

fn problem(args: &SimplexArgs) -> Result<SimplexProblem> {
    let costs = args.costs.0.clone();
    let built = if args.reference == "uniform" {
        SimplexProblem::with_uniform_reference(costs, args.r, args.temperature)
    } else {
        let reference = parse_values(&args.reference)
            .map_err(anyhow::Error::msg)
            .context("--ref: expected `uniform` or a comma list")?;
        ensure!(
            reference.len() == costs.len(),
            "--ref has {} values but --costs has {}",
            reference.len(),
            costs.len()
        );
        SimplexProblem::new(costs, reference, args.r, args.temperature)
    };
    built.context("--costs/--ref")
}

#[derive(Serialize)]
struct SpminReport {
    schema: String,
    r: f64,
    #[serde(rename = "T")]
    temperature: f64,
    p: Vec<f64>,
    mu: f64,
    support: Vec<usize>,
    kkt_residual: f64,
}

pub fn spmin_command(args: &SpminArgs) -> Result<()> {
    let problem = problem(&args.problem)?;
    let sol = spmin(&problem)?;
    if let Some(path) = &args.json {
        let report = SpminReport {
            schema: schema("spmin"),
            r: problem.r(),
            temperature: problem.temperature(),
            p: sol.p,
            mu: sol.mu,
            support: sol.support,
            kkt_residual: sol.kkt_residual,
        };
        return write_json(&report, path, "--json");
    }
    let mut out = std::io::stdout().lock();
    writeln!(out, "p = {}", number_list(&sol.p))?;
    writeln!(out, "mu = {}", number(sol.mu))?;
    writeln!(out, "support = {:?}", sol.support)?;
    writeln!(out, "kkt_residual = {:e}", sol.kkt_residual)?;
    Ok(())
}

struct Routing {
    graph: Graph,
    reference: ReferenceMatrix,
    policy: Policy,
    r: Option<f64>,
    source: Option<usize>,
}

/// Loads the graph and computes the policy. Without `source`, `first_as_source`
/// picks the first node of the edge list.
fn route(args: &RoutingArgs, source: Option<&str>, first_as_source: bool) -> Result<Routing> {
    let (graph, reference) = load(&args.graph)?;
    let target = node(&graph, &args.target, "--target")?;
    let mut options = args.solver.options();
    options.source = match source {
        Some(name) => {
            let s = node(&graph, name, "--source")?;
            ensure!(s != target, "--source and --target are both `{name}`");
            Some(s)
        }
        None if first_as_source => {
            ensure!(
                target != 0,
                "--source is required: the default source, the first node `{}`, is the target",
                graph.name(0)
            );
            Some(0)
        }
        None => None,
    };
    let (policy, r) = match args.divergence {
        DivergenceArg::Kl => {
            order(args.r, false, "routing (--divergence tsallis)")?;
            (
                kl_policy_iterate(&graph, &reference, target, args.theta, &options)?,
                None,
            )
        }
        DivergenceArg::Tsallis => {
            let r = order(args.r, true, "routing")?;
            let policy = tsallis_policy_iterate(&graph, &reference, target, r, 1.0 / args.theta, &options)?;
            (policy, Some(r))
        }
    };
    let source = options.source;
    Ok(Routing {
        graph,
        reference,
        policy,
        r,
        source,
    })
}

fn divergence_name(d: DivergenceArg) -> &'static str {
    match d {
        DivergenceArg::Kl => "kl",
        DivergenceArg::Tsallis => "tsallis",
    }
}

fn reference_name(kind: ReferenceKind) -> String {
    kind.to_string()
}

type Triplet = (String, String, f64);

#[derive(Serialize)]
struct FlowReport {
    source: String,
    expected_cost: f64,
    free_energy: f64,
    duality_gap: f64,
    conservation_residual: f64,
    node_visits: Vec<f64>,
    /// Positive net flows.
    net_flows: Vec<Triplet>,
}

#[derive(Serialize)]
struct PolicyReport {
    schema: String,
    divergence: &'static str,
    r: Option<f64>,
    theta: f64,
    reference: String,
    target: String,
    iterations: usize,
    converged: bool,
    nodes: Vec<String>,
    lambda: Vec<f64>,
    /// Edges with positive transition probability.
    #[serde(rename = "P")]
    transitions: Vec<Triplet>,
    flow: Option<FlowReport>,
}

fn flow_report(routing: &Routing, flow: &FlowField) -> FlowReport {
    let Routing {
        graph,
        reference,
        policy,
        ..
    } = routing;
    let name = |i: usize| graph.name(i).to_string();
    FlowReport {
        source: name(flow.source),
        expected_cost: expected_cost(graph, flow),
        free_energy: policy.lambda[flow.source],
        duality_gap: (primal_objective(graph, reference, policy, flow) - policy.lambda[flow.source]).abs(),
        conservation_residual: flow.conservation_residual(graph),
        node_visits: flow.node_visits.clone(),
        net_flows: flow
            .net_flows(graph)
            .into_iter()
            .map(|f| (name(f.src), name(f.dst), f.value))
            .collect(),
    }
}

pub fn policy_command(args: &PolicyArgs) -> Result<()> {
    let routing = &args.routing;
    let result = route(routing, args.source.as_deref(), args.dot.is_some())?;
    let graph = &result.graph;
    let flow = result
        .source
        .map(|s| expected_visits(graph, &result.policy, s, &routing.solver.options().linear))
        .transpose()?;

    let name = |i: usize| graph.name(i).to_string();
    let transitions = graph
        .edges()
        .zip(&result.policy.transitions)
        .filter(|(_, &p)| p > 0.0)
        .map(|(e, &p)| (name(e.src), name(e.dst), p))
        .collect();
    let report = PolicyReport {
        schema: schema("policy"),
        divergence: divergence_name(routing.divergence),
        r: result.r,
        theta: routing.theta,
        reference: reference_name(result.reference.kind()),
        target: routing.target.clone(),
        iterations: result.policy.iterations,
        converged: result.policy.converged,
        nodes: graph.names().to_vec(),
        lambda: result.policy.lambda.clone(),
        transitions,
        flow: flow.as_ref().map(|f| flow_report(&result, f)),
    };

    eprintln!(
        "policy: {} θ={} target {}: {} iterations, {} of {} edges used",
        report.divergence,
        routing.theta,
        routing.target,
        report.iterations,
        result.policy.support_size(),
        graph.edge_count()
    );
    if let Some(f) = &report.flow {
        let drawn = f.net_flows.iter().filter(|t| t.2 >= DISPLAY_THRESHOLD).count();
        eprintln!(
            "flow from {}: expected cost {}, free energy {}, {} net-flow edges",
            f.source,
            number(f.expected_cost),
            number(f.free_energy),
            drawn
        );
    }
    if let (Some(path), Some(flow)) = (&args.dot, &flow) {
        let mut out = output::writer(path, "--dot")?;
        write_flow_dot(graph, flow, &mut out).with_context(|| format!("--dot {}", path.display()))?;
        out.flush()?;
    }
    write_json(&report, args.json.as_deref().unwrap_or(stdout()), "--json")
}

pub fn dissim_command(args: &DissimArgs) -> Result<()> {
    let kind = DissimilarityKind::from(args.kind);
    let r = order(args.r, kind.is_tsallis(), "dissimilarities")?;
    let (graph, reference) = load(&args.graph)?;
    let d = dissimilarity_matrix(&graph, &reference, kind, r, args.theta, &args.solver.options())?;
    let path = args.out.as_deref().unwrap_or(stdout());
    let mut out = output::writer(path, "--out")?;
    write_matrix_csv(graph.names(), &d.values, &mut out).with_context(|| format!("--out {}", path.display()))?;
    out.flush()?;
    eprintln!(
        "dissim: {kind} θ={} on {} nodes, largest value {}",
        args.theta,
        graph.node_count(),
        number(d.values.max())
    );
    Ok(())
}

#[derive(Serialize)]
struct Spread {
    mean: f64,
    std: f64,
}

impl Spread {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Spread { mean, std: var.sqrt() })
    }
}

#[derive(Serialize)]
struct Repeats {
    seeds: Vec<u64>,
    best_theta: Vec<f64>,
    modularity: Spread,
    nmi: Option<Spread>,
    ari: Option<Spread>,
}

#[derive(Serialize)]
struct ClusterReport {
    schema: String,
    kind: DissimilarityKind,
    r: Option<f64>,
    k: u32,
    seed: u64,
    restarts: u32,
    reference: String,
    nodes: Vec<String>,
    labels: Option<Partition>,
    #[serde(flatten)]
    result: TuningResult,
    repeats: Option<Repeats>,
}

fn summarize(runs: &[(u64, TuningResult)]) -> Repeats {
    let collect = |f: &dyn Fn(&TuningResult) -> Option<f64>| runs.iter().filter_map(|(_, t)| f(t)).collect::<Vec<_>>();
    Repeats {
        seeds: runs.iter().map(|(s, _)| *s).collect(),
        best_theta: collect(&|t| Some(t.best_theta)),
        modularity: Spread::of(&collect(&|t| Some(t.scores.modularity))).expect("at least one run"),
        nmi: Spread::of(&collect(&|t| t.scores.nmi)),
        ari: Spread::of(&collect(&|t| t.scores.ari)),
    }
}

pub fn cluster_command(args: &ClusterArgs) -> Result<()> {
    let kind = DissimilarityKind::from(args.kind);
    let r = order(args.r, kind.is_tsallis(), "dissimilarities")?;
    let (graph, reference) = load(&args.graph)?;
    ensure!(
        args.k as usize <= graph.node_count(),
        "--k {} exceeds the {} nodes of the graph",
        args.k,
        graph.node_count()
    );
    let labels = args
        .labels
        .as_deref()
        .map(|p| output::read_labels(&graph, p))
        .transpose()?;
    let grid = &args.grid.0;

    let mut runs = Vec::with_capacity(args.repeat as usize);
    for offset in 0..args.repeat as u64 {
        let seed = args
            .seed
            .checked_add(offset)
            .context("--seed plus --repeat overflows")?;
        let options = TuningOptions {
            k: args.k as usize,
            restarts: args.restarts as usize,
            seed,
            iteration: args.solver.options(),
        };
        let tuned = tune_parameter(&graph, &reference, kind, r, grid, labels.as_ref(), &options)?;
        runs.push((seed, tuned));
    }
    let repeats = (args.repeat > 1).then(|| summarize(&runs));
    let (_, result) = runs.swap_remove(0);

    eprintln!(
        "cluster: {kind} over {} θ values, best θ={} modularity {}{}{}",
        grid.len(),
        result.best_theta,
        number(result.scores.modularity),
        result
            .scores
            .nmi
            .map_or(String::new(), |v| format!(" NMI {}", number(v))),
        result
            .scores
            .ari
            .map_or(String::new(), |v| format!(" ARI {}", number(v))),
    );
    for point in result.grid.iter().filter(|p| p.error.is_some()) {
        eprintln!(
            "warning: θ={} skipped: {}",
            point.theta,
            point.error.as_deref().unwrap_or_default()
        );
    }
    let report = ClusterReport {
        schema: schema("cluster"),
        kind,
        r: kind.is_tsallis().then_some(r),
        k: args.k,
        seed: args.seed,
        restarts: args.restarts,
        reference: reference_name(reference.kind()),
        nodes: graph.names().to_vec(),
        labels,
        result,
        repeats,
    };
    write_json(&report, args.report.as_deref().unwrap_or(stdout()), "--report")
}

#[derive(Serialize)]
struct TriangleCheck {
    schema: String,
    nodes: usize,
    slack: f64,
    violations: usize,
    worst_slack: f64,
    worst_triple: Option<[String; 3]>,
}

#[derive(Serialize)]
struct DualityCheck {
    schema: String,
    divergence: &'static str,
    r: Option<f64>,
    theta: f64,
    source: String,
    target: String,
    iterations: usize,
    free_energy: f64,
    primal_objective: f64,
    duality_gap: f64,
    conservation_residual: f64,
    max_gap: f64,
}

#[derive(Serialize)]
struct ConvexityCheck {
    schema: String,
    tolerance: f64,
    #[serde(flatten)]
    report: ConvexityReport,
}

#[derive(Serialize)]
struct KktCheck {
    schema: String,
    p: Vec<f64>,
    mu: f64,
    kkt_residual: f64,
    tolerance: f64,
}

pub fn check_command(check: &CheckCommand) -> Result<()> {
    match check {
        CheckCommand::Triangle { matrix, slack } => {
            let file = std::fs::File::open(matrix).with_context(|| matrix.display().to_string())?;
            let (names, d) =
                read_matrix_csv(std::io::BufReader::new(file)).with_context(|| matrix.display().to_string())?;
            let report = triangle_check(&d, *slack).with_context(|| matrix.display().to_string())?;
            write_json(
                &TriangleCheck {
                    schema: schema("check-triangle"),
                    nodes: names.len(),
                    slack: *slack,
                    violations: report.violations,
                    worst_slack: report.worst_slack,
                    worst_triple: report
                        .worst_triple
                        .map(|(i, j, k)| [names[i].clone(), names[j].clone(), names[k].clone()]),
                },
                stdout(),
                "",
            )?;
            ensure!(report.violations == 0, "{} triangle violations", report.violations);
        }
        CheckCommand::Duality {
            routing,
            source,
            max_gap,
        } => {
            let result = route(routing, Some(source), false)?;
            let graph = &result.graph;
            let s = graph.node_index(source)?;
            let flow = expected_visits(graph, &result.policy, s, &routing.solver.options().linear)?;
            let primal = primal_objective(graph, &result.reference, &result.policy, &flow);
            let gap = (primal - result.policy.lambda[s]).abs();
            write_json(
                &DualityCheck {
                    schema: schema("check-duality"),
                    divergence: divergence_name(routing.divergence),
                    r: result.r,
                    theta: routing.theta,
                    source: source.clone(),
                    target: routing.target.clone(),
                    iterations: result.policy.iterations,
                    free_energy: result.policy.lambda[s],
                    primal_objective: primal,
                    duality_gap: gap,
                    conservation_residual: flow.conservation_residual(graph),
                    max_gap: *max_gap,
                },
                stdout(),
                "",
            )?;
            ensure!(gap <= *max_gap, "duality gap {gap:e} exceeds --max-gap {max_gap:e}");
        }
        CheckCommand::Convexity {
            m,
            samples,
            r_min,
            r_max,
            seed,
            tolerance,
        } => {
            ensure!(r_min <= r_max, "--r-min {r_min} exceeds --r-max {r_max}");
            let report = convexity_probe(*m as usize, *samples as usize, (*r_min, *r_max), *seed)?;
            let worst = report.min_relative_eigenvalue;
            write_json(
                &ConvexityCheck {
                    schema: schema("check-convexity"),
                    tolerance: *tolerance,
                    report,
                },
                stdout(),
                "",
            )?;
            ensure!(
                worst >= -tolerance,
                "relative eigenvalue {worst:e} below -{tolerance:e}"
            );
        }
        CheckCommand::Kkt {
            problem: args,
            p,
            mu,
            tolerance,
        } => {
            let problem = problem(args)?;
            let (p, mu) = match p {
                Some(p) => {
                    ensure!(
                        p.0.len() == problem.costs().len(),
                        "--p has {} values but --costs has {}",
                        p.0.len(),
                        problem.costs().len()
                    );
                    let mu = mu.unwrap_or_else(|| stationary_threshold(&problem, &p.0));
                    (p.0.clone(), mu)
                }
                None => {
                    ensure!(mu.is_none(), "--mu requires --p");
                    let sol = spmin(&problem)?;
                    (sol.p, sol.mu)
                }
            };
            let residual = kkt_residual(&problem, &p, mu);
            write_json(
                &KktCheck {
                    schema: schema("check-kkt"),
                    p,
                    mu,
                    kkt_residual: residual,
                    tolerance: *tolerance,
                },
                stdout(),
                "",
            )?;
            ensure!(
                residual <= *tolerance,
                "KKT residual {residual:e} exceeds --tolerance {tolerance:e}"
            );
        }
    }
    Ok(())
}

/// `p`-weighted mean of the stationarity values `c_i + rΥ (p_i / q_i)^(r-1)`.
fn stationary_threshold(problem: &SimplexProblem, p: &[f64]) -> f64 {
    let r = problem.r();
    let scale = r * problem.upsilon();
    let (weighted, mass) = problem
        .costs()
        .iter()
        .zip(problem.reference())
        .zip(p)
        .filter(|(_, &pi)| pi > 0.0)
        .fold((0.0, 0.0), |(w, m), ((&c, &q), &pi)| {
            (w + pi * (c + scale * (pi / q).powf(r - 1.0)), m + pi)
        });
    if mass > 0.0 {
        weighted / mass
    } else {
        f64::NAN
    }
}
