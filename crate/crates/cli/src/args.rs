// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ivtrace_core::stats::{Alternative, EffectMetric};
use ivtrace_core::{Activation, MlpKind};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "ivtrace", version, about = "Locate and trace instruction representations in transformers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(untagged)]
pub enum Command {
    /// Generate a seeded toy model, vocabulary and task files.
    GenToy(GenToyArgs),
    /// Patch every layer pair and write effect grids per task.
    PatchScan(PatchScanArgs),
    /// Superadditivity tests on the strongest pairs of a scan.
    Superadd(SuperaddArgs),
    /// LDA coordinates and linear-probe accuracy of instruction representations.
    Geometry(GeometryArgs),
    /// Enumerate high-ranking token-to-output paths.
    Trace(TraceArgs),
    /// Mean number of kept paths per source position.
    TokenContrib(TokenContribArgs),
    /// Share of samples in which each head carries a kept path from T_inst.
    HeadActivity(HeadActivityArgs),
    /// Exact-match accuracy of greedy predictions.
    Eval(EvalArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenToy(_) => "gen-toy",
            Command::PatchScan(_) => "patch-scan",
            Command::Superadd(_) => "superadd",
            Command::Geometry(_) => "geometry",
            Command::Trace(_) => "trace",
            Command::TokenContrib(_) => "token-contrib",
            Command::HeadActivity(_) => "head-activity",
            Command::Eval(_) => "eval",
            Command::Replay(_) => "replay",
        }
    }
}

/// Toy model shape shared by `gen-toy` and `--toy` specs.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ToyShape {
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Vocabulary size.
    #[arg(long, default_value_t = 64)]
    pub vocab: usize,
    /// Hidden MLP width; 4 × dim when omitted.
    #[arg(long)]
    pub mlp_dim: Option<usize>,
    #[arg(long, default_value = "relu")]
    pub activation: Activation,
    #[arg(long, default_value = "plain")]
    pub mlp_kind: MlpKind,
    #[arg(long)]
    pub rotary: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct GenToyArgs {
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub shape: ToyShape,
    #[arg(long, default_value_t = 4)]
    pub tasks: usize,
    #[arg(long, default_value_t = 8)]
    pub samples: usize,
    #[arg(long, default_value_t = 12)]
    pub rephrasings: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Either a weight file with its vocabulary, or a seeded toy model.
#[derive(Debug, Clone, Args, Serialize)]
#[group(required = true, multiple = false, id = "model_source")]
pub struct ModelSource {
    /// Weight file; requires --vocab.
    #[arg(long, requires = "vocab")]
    pub model: Option<PathBuf>,
    /// Seeded toy model such as `seed=7,layers=2,heads=2,dim=16,vocab=64`.
    #[arg(long)]
    pub toy: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Vocabulary file, one entry per line.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Vocabulary entry used as the filler token.
    #[arg(long, default_value = "<s>")]
    pub filler: String,
}

#[derive(Debug, Args, Serialize)]
pub struct PatchScanArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub tasks: PathBuf,
    /// 1 for single layers only, 2 for all pairs.
    #[arg(long, default_value_t = 2)]
    pub max_pair_order: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SuperaddArgs {
    /// Output directory of a patch-scan run.
    #[arg(long)]
    pub scan: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    #[arg(long, default_value = "rank")]
    pub metric: EffectMetric,
    #[arg(long, default_value = "less")]
    pub alternative: Alternative,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GeometryArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub rephrasings: PathBuf,
    /// Residual stream `X^layer`, 1..=L+1. Every layer when omitted.
    #[arg(long, conflicts_with = "concat")]
    pub layer: Option<usize>,
    /// Concatenate all residual streams into one vector.
    #[arg(long)]
    pub concat: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TraceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub tasks: PathBuf,
    /// Keep paths whose answer rank is at most this.
    #[arg(long, default_value_t = 100)]
    pub rank_threshold: usize,
    /// Follow every attention source instead of the argmax (tiny models only)
    /// and check that the paths sum to the final residual.
    #[arg(long)]
    pub exhaustive_oracle: bool,
    /// Only paths from this position; `inst` selects each prompt's T_inst.
    #[arg(long)]
    pub source_pos: Option<String>,
    /// Top logit tokens recorded per path.
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TokenContribArgs {
    /// Output directory of a trace run.
    #[arg(long)]
    pub trace: PathBuf,
    /// Restrict to one task.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct HeadActivityArgs {
    /// Output directory of a trace run.
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
