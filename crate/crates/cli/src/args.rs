use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "btn",
    version,
    about = "MobileNetV2 inference, cost and memory analysis, ReLU experiments"
)]
pub struct Cli {
    /// Output format.
    #[arg(long, visible_alias = "out", value_enum, default_value_t = Format::Table, global = true)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Table,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-layer multiply-adds and parameter counts.
    Summarize(ModelArgs),
    /// Run the network and write logits to a tensor file.
    Infer(InferArgs),
    /// Activation memory per resolution and per block.
    MemoryPlan(MemoryArgs),
    /// Numerical ReLU experiments.
    #[command(subcommand)]
    Theory(TheoryCommand),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Width multiplier.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Input resolution in pixels.
    #[arg(long, default_value_t = 224)]
    pub res: usize,
    #[arg(long, default_value_t = 1000)]
    pub classes: usize,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Weight container to load.
    #[arg(
        long,
        conflicts_with = "random_weights",
        required_unless_present = "random_weights"
    )]
    pub weights: Option<PathBuf>,
    /// He-initialized weights drawn from `--seed`.
    #[arg(long)]
    pub random_weights: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Input tensor file (NHWC). A standard normal image is drawn from
    /// `--input-seed` when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub input_seed: u64,
    /// Run bottlenecks as a cascade of this many channel groups.
    #[arg(long)]
    pub split: Option<usize>,
    /// Cascade only the first bottleneck.
    #[arg(long, requires = "split")]
    pub first_block_only: bool,
    /// Where to write the logits.
    #[arg(long, default_value = "logits.bten")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct MemoryArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Channel groups per cascaded block.
    #[arg(long, default_value_t = 1)]
    pub split: usize,
    /// Bits per stored activation.
    #[arg(long, default_value_t = 16, value_parser = parse_act_bits)]
    pub act_bits: usize,
    /// Materialize the stem-resolution tensors instead of streaming them.
    #[arg(long)]
    pub no_first_layer_trick: bool,
    /// Dump the block-level compute graph as JSON lines.
    #[arg(long)]
    pub graph_out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum TheoryCommand {
    /// Monte Carlo estimate of how often a random ReLU embedding stays
    /// invertible.
    Collapse {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Spiral embedded with a random matrix and ReLU, then mapped back.
    Spiral {
        #[arg(long, value_delimiter = ',', default_value = "2,3,5,15,30")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Positive channels after each ReLU6 over a random input batch.
    Activations {
        #[command(flatten)]
        model: ModelArgs,
        /// Trained weights; without them the network is He-initialized from
        /// `--seed` and batch norm is calibrated on the batch.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 5)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = AggregationArg::PerLocation)]
        aggregation: AggregationArg,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationArg {
    PerLocation,
    PerFeatureMap,
}

fn parse_act_bits(s: &str) -> Result<usize, String> {
    match s {
        "16" => Ok(16),
        "32" => Ok(32),
        _ => Err(format!("`{s}` is not 16 or 32")),
    }
}
