use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use coarsemp::mp::CoarseOperatorKind;
use coarsemp::{LaplacianKind, ModelSpec, PropagationKind};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "coarsemp", version, about = "Graph coarsening with oriented coarse message passing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic graph and write it in the dataset format
    Gen(GenArgs),
    /// Coarsen a graph at one or more ratios and report spectral constants
    Coarsen(CoarsenArgs),
    /// Measure message-passing errors of coarse operators against the bound
    MpError(MpErrorArgs),
    /// Train SGC/GCN models on the full graph and on coarsened graphs
    Train(TrainArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GraphSource {
    /// Dataset directory holding edges.tsv and optional features.csv,
    /// labels.csv and splits.txt
    #[arg(long, conflicts_with = "gen", required_unless_present = "gen")]
    pub graph: Option<PathBuf>,

    /// Generator: geometric[:n=..,threshold=..,seed=..],
    /// planted[:n=..,classes=..,p_in=..,p_out=..,feature_dim=..,noise=..,seed=..]
    /// or six-node
    #[arg(long)]
    pub gen: Option<String>,

    /// Restrict the graph to its principal connected component
    #[arg(long)]
    pub pcc: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct GenArgs {
    /// Generator spec, as for --gen elsewhere
    #[arg(long)]
    pub gen: String,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CoarseningArgs {
    /// Laplacian: comb, norm, shifted or shifted:<delta>
    #[arg(long, default_value = "shifted")]
    #[serde(serialize_with = "as_string")]
    pub laplacian: LaplacianKind,

    /// Propagation matrix: adj, mean or gcn
    #[arg(long, default_value = "gcn")]
    #[serde(serialize_with = "as_string")]
    pub prop: PropagationKind,

    /// Comma-separated coarsening ratios in [0, 1)
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.7")]
    pub ratios: Vec<f64>,

    /// Preserved subspace dimension (default ceil(N/10))
    #[arg(long = "K")]
    pub subspace_dim: Option<usize>,

    /// Maximum merges per sweep: a count or "inf" (default ceil(0.05 N))
    #[arg(long = "ne")]
    pub max_merges: Option<String>,

    /// Force uniform weights on the final coarsening
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub uniform: bool,

    /// Use this partition (JSON array or coarsening document) instead of
    /// running the greedy coarsener
    #[arg(long)]
    pub assignment: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct CoarsenArgs {
    #[command(flatten)]
    pub source: GraphSource,

    #[command(flatten)]
    pub coarsening: CoarseningArgs,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct MpErrorArgs {
    #[command(flatten)]
    pub source: GraphSource,

    #[command(flatten)]
    pub coarsening: CoarseningArgs,

    /// Comma-separated coarse operators: mp, naive, diag, diff, sym
    #[arg(long, value_delimiter = ',', default_value = "mp,naive,diag,diff,sym")]
    #[serde(serialize_with = "all_as_string")]
    pub operators: Vec<CoarseOperatorKind>,

    /// Number of propagation steps
    #[arg(long, default_value_t = 6)]
    pub k: usize,

    /// Random smooth signals per seed
    #[arg(long, default_value_t = 100)]
    pub signals: usize,

    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub source: GraphSource,

    #[command(flatten)]
    pub coarsening: CoarseningArgs,

    #[arg(long, value_delimiter = ',', default_value = "mp")]
    #[serde(serialize_with = "all_as_string")]
    pub operators: Vec<CoarseOperatorKind>,

    /// sgc:<k> or gcn:<hidden>
    #[arg(long, default_value = "sgc:6")]
    #[serde(serialize_with = "as_string")]
    pub model: ModelSpec,

    #[arg(long, default_value_t = 200)]
    pub epochs: usize,

    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,

    #[arg(long, default_value_t = 0.01)]
    pub wd: f64,

    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7,8,9")]
    pub seeds: Vec<u64>,

    /// Also write per-epoch metrics for every run
    #[arg(long)]
    pub metrics: bool,

    #[arg(long)]
    pub out: PathBuf,
}

fn as_string<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

fn all_as_string<T: std::fmt::Display, S: serde::Serializer>(v: &[T], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(ToString::to_string))
}
