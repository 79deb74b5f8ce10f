use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sparse_rsp::{CostConvention, DissimilarityKind, IterationOptions, LoadOptions, ReferenceKind};

/// Sparse randomized shortest paths: routing policies, dissimilarities and clustering.
#[derive(Debug, Parser)]
#[command(name = "sparse-rsp", version, about, propagate_version = true)]
pub struct RunConfig {
    /// Plain-text `key = value` file supplying defaults for any long flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for parallel targets and grid points [default: logical cores].
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one regularized simplex problem.
    Spmin(SpminArgs),
    /// Compute a routing policy toward a target.
    Policy(PolicyArgs),
    /// Compute a node dissimilarity matrix.
    Dissim(DissimArgs),
    /// Tune θ by modularity and cluster the graph.
    Cluster(ClusterArgs),
    /// Run a diagnostic check.
    #[command(subcommand)]
    Check(CheckCommand),
}

#[derive(Debug, Args)]
pub struct SimplexArgs {
    /// Comma-separated edge costs.
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    pub costs: List,

    /// `uniform` or comma-separated reference probabilities.
    #[arg(long = "ref", default_value = "uniform")]
    pub reference: String,

    /// Divergence order, > 1.
    #[arg(long, default_value_t = 2.0, value_parser = parse_order)]
    pub r: f64,

    /// Temperature, > 0.
    #[arg(long = "T", value_name = "T", value_parser = parse_positive)]
    pub temperature: f64,
}

#[derive(Debug, Args)]
pub struct SpminArgs {
    #[command(flatten)]
    pub problem: SimplexArgs,

    /// Write JSON to stdout, or to FILE when given.
    #[arg(long, value_name = "FILE", num_args = 0..=1, default_missing_value = "-")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CostArg {
    /// Fourth column of the edge list.
    Column,
    /// Reciprocal of the affinity.
    InverseAffinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RefArg {
    Natural,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DivergenceArg {
    Kl,
    Tsallis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    TsallisFe,
    TsallisRsp,
    KlFe,
    KlRsp,
}

impl From<KindArg> for DissimilarityKind {
    fn from(kind: KindArg) -> Self {
        match kind {
            KindArg::TsallisFe => DissimilarityKind::TsallisFe,
            KindArg::TsallisRsp => DissimilarityKind::TsallisRsp,
            KindArg::KlFe => DissimilarityKind::KlFe,
            KindArg::KlRsp => DissimilarityKind::KlRsp,
        }
    }
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Edge list: `src dst affinity [cost]` per line.
    #[arg(long, value_name = "FILE")]
    pub graph: PathBuf,

    /// Read every row as a pair of reciprocal edges.
    #[arg(long)]
    pub undirected: bool,

    #[arg(long, value_enum, default_value_t = CostArg::Column)]
    pub cost: CostArg,

    /// Reference random walk.
    #[arg(long = "ref", value_enum, default_value_t = RefArg::Natural)]
    pub reference: RefArg,
}

impl GraphArgs {
    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            undirected: self.undirected,
            cost: match self.cost {
                CostArg::Column => CostConvention::FromColumn,
                CostArg::InverseAffinity => CostConvention::InverseAffinity,
            },
            ..Default::default()
        }
    }

    pub fn reference_kind(&self) -> ReferenceKind {
        match self.reference {
            RefArg::Natural => ReferenceKind::Natural,
            RefArg::Uniform => ReferenceKind::Uniform,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Relative tolerance on the change of λ between sweeps.
    #[arg(long, default_value_t = 1e-10, value_parser = parse_positive)]
    pub tol: f64,

    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_iter: u32,

    /// Relaxation factor in (0, 1] applied to λ.
    #[arg(long, default_value_t = 1.0, value_parser = parse_relaxation)]
    pub relaxation: f64,
}

impl SolverArgs {
    pub fn options(&self) -> IterationOptions {
        IterationOptions {
            tol: self.tol,
            max_iter: self.max_iter as usize,
            relaxation: self.relaxation,
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct RoutingArgs {
    #[command(flatten)]
    pub graph: GraphArgs,

    #[arg(long, value_enum, default_value_t = DivergenceArg::Tsallis)]
    pub divergence: DivergenceArg,

    /// Tsallis order, > 1 [default: 2].
    #[arg(long, value_parser = parse_order)]
    pub r: Option<f64>,

    /// Inverse temperature, > 0.
    #[arg(long, value_parser = parse_positive, allow_hyphen_values = true)]
    pub theta: f64,

    /// Absorbing target node.
    #[arg(long)]
    pub target: String,

    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    #[command(flatten)]
    pub routing: RoutingArgs,

    /// Source node for flows [default with --dot: first node of the edge list].
    #[arg(long)]
    pub source: Option<String>,

    /// Write JSON to stdout (the default), or to FILE when given.
    #[arg(long, value_name = "FILE", num_args = 0..=1, default_missing_value = "-")]
    pub json: Option<PathBuf>,

    /// Write the net flows as a Graphviz digraph.
    #[arg(long, value_name = "FILE")]
    pub dot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DissimArgs {
    #[command(flatten)]
    pub graph: GraphArgs,

    #[arg(long, value_enum, default_value_t = KindArg::TsallisFe)]
    pub kind: KindArg,

    /// Tsallis order, > 1 [default: 2].
    #[arg(long, value_parser = parse_order)]
    pub r: Option<f64>,

    /// Inverse temperature, > 0.
    #[arg(long, value_parser = parse_positive, allow_hyphen_values = true)]
    pub theta: f64,

    /// CSV output [default: stdout].
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub graph: GraphArgs,

    /// Ground-truth labels: `node label` per line.
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = KindArg::TsallisFe)]
    pub kind: KindArg,

    /// Tsallis order, > 1 [default: 2].
    #[arg(long, value_parser = parse_order)]
    pub r: Option<f64>,

    /// θ values: `LO..HI` for every decade from LO to HI, or a comma list.
    #[arg(long, default_value = "1e-4..1e5", value_parser = parse_grid)]
    pub grid: Grid,

    /// Number of clusters.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    pub k: u32,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// k-means restarts per grid point.
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u32).range(1..))]
    pub restarts: u32,

    /// Repeat the tuning with seeds SEED..SEED+N and report score statistics.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub repeat: u32,

    /// JSON report [default: stdout].
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,

    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Subcommand)]
pub enum CheckCommand {
    /// Count triangle inequality violations in a dissimilarity CSV.
    Triangle {
        /// Matrix written by `dissim`.
        matrix: PathBuf,

        #[arg(long, default_value_t = sparse_rsp::dissim::TRIANGLE_SLACK, value_parser = parse_nonnegative)]
        slack: f64,
    },
    /// Compare λ at the source with the primal objective of the converged flows.
    Duality {
        #[command(flatten)]
        routing: RoutingArgs,

        #[arg(long)]
        source: String,

        /// Largest accepted gap.
        #[arg(long, default_value_t = 1e-8, value_parser = parse_nonnegative)]
        max_gap: f64,
    },
    /// Sample the Hessian form of the flow objective and report its smallest relative eigenvalue.
    Convexity {
        /// Dimension of the sampled rows.
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(2..))]
        m: u32,

        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u32).range(1..))]
        samples: u32,

        #[arg(long, default_value_t = 1.1, value_parser = parse_order)]
        r_min: f64,

        #[arg(long, default_value_t = 4.1, value_parser = parse_order)]
        r_max: f64,

        #[arg(long, default_value_t = 0)]
        seed: u64,

        /// Most negative accepted relative eigenvalue, as a magnitude.
        #[arg(long, default_value_t = 1e-12, value_parser = parse_nonnegative)]
        tolerance: f64,
    },
    /// Check the optimality conditions of a simplex solution.
    Kkt {
        #[command(flatten)]
        problem: SimplexArgs,

        /// Candidate solution [default: the solver's own].
        #[arg(long, value_parser = parse_list)]
        p: Option<List>,

        /// Threshold paired with --p [default: recomputed from p].
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<f64>,

        #[arg(long, default_value_t = 1e-9, value_parser = parse_nonnegative)]
        tolerance: f64,
    },
}

/// Comma-separated numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct List(pub Vec<f64>);

/// Grid of θ values in the order given.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

fn parse_number(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v = parse_number(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err("must be > 0".into())
    }
}

fn parse_nonnegative(s: &str) -> Result<f64, String> {
    let v = parse_number(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err("must be ≥ 0".into())
    }
}

fn parse_order(s: &str) -> Result<f64, String> {
    let v = parse_number(s)?;
    if v > 1.0 {
        Ok(v)
    } else {
        Err("must be > 1".into())
    }
}

fn parse_relaxation(s: &str) -> Result<f64, String> {
    let v = parse_number(s)?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err("must lie in (0, 1]".into())
    }
}

pub fn parse_values(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(parse_number).collect()
}

fn parse_list(s: &str) -> Result<List, String> {
    parse_values(s).map(List)
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    let Some((lo, hi)) = s.split_once("..") else {
        let values = parse_values(s)?;
        return match values.iter().find(|v| **v <= 0.0) {
            Some(v) => Err(format!("θ = {v} must be > 0")),
            None => Ok(Grid(values)),
        };
    };
    let (lo, hi) = (parse_positive(lo)?, parse_positive(hi)?);
    if hi < lo {
        return Err(format!("empty range {lo}..{hi}"));
    }
    let decades = (hi / lo).log10();
    let steps = (decades + 1e-9).floor() as i32;
    if steps > 64 {
        return Err(format!("range {lo}..{hi} spans more than 64 decades"));
    }
    // Round to 12 significant digits.
    let decade = |k: i32| {
        format!("{:.11e}", lo * 10f64.powi(k))
            .parse::<f64>()
            .expect("formatted float")
    };
    Ok(Grid((0..=steps).map(decade).collect()))
}
