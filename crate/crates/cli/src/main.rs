//! `entity-embed`: rule files to entity embeddings and back.
//!
//! Exit status: 0 success, 2 usage, 3 data or format, 4 numerical failure.
//! Failures print one line, `error[<code>]: <message>`, on stderr.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use entity_embed::latent::PerturbNoise;
use entity_embed::vae::LatentActivation;
use entity_embed::{Error, ErrorClass};

#[derive(Parser)]
#[command(name = "entity-embed", version, about = "Entity embeddings for game mechanics")]
struct Cli {
    /// TOML file with defaults; command-line flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-game rule corpus and its dataset CSV.
    GenSynthetic(GenSyntheticArgs),
    /// Extract entity states from rule files.
    Parse(ParseArgs),
    /// Seeded train/test split of a dataset CSV.
    Split(SplitArgs),
    /// Train the VAE.
    Train(TrainArgs),
    /// Score the VAE against PCA and nearest-entity baselines on held-out states.
    Eval(EvalArgs),
    /// Write latent means for every state of a dataset.
    Embed(EmbedArgs),
    /// Decode latent vectors into entity states.
    Decode(DecodeArgs),
    /// Latent-space exploration.
    #[command(subcommand)]
    Explore(ExploreCommand),
    /// Project embeddings to 2-D with t-SNE.
    Tsne(TsneArgs),
}

#[derive(Args)]
pub struct GenSyntheticArgs {
    #[arg(long)]
    pub games: Option<usize>,
    /// Entity archetypes per game.
    #[arg(long)]
    pub archetypes: Option<usize>,
    /// Walk length per archetype.
    #[arg(long)]
    pub states: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; receives `rules/<game>/rules.txt` and `dataset.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ParseArgs {
    /// Directory with one subdirectory of rule files per game.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Extra game as `label=dir`; repeatable.
    #[arg(long = "game", value_name = "LABEL=DIR")]
    pub games: Vec<String>,
    /// Dataset CSV; symbol tables go to `<stem>.entities.csv` and `<stem>.games.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub test_frac: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_train: PathBuf,
    #[arg(long)]
    pub out_test: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ActivationArg {
    Linear,
    Relu,
}

impl From<ActivationArg> for LatentActivation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Linear => LatentActivation::Linear,
            ActivationArg::Relu => LatentActivation::Relu,
        }
    }
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training dataset CSV.
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub latent: Option<usize>,
    /// Activation on the latent mean head.
    #[arg(long, value_enum)]
    pub latent_activation: Option<ActivationArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub kl_weight: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep the dataset order fixed across epochs.
    #[arg(long)]
    pub no_shuffle: bool,
    #[arg(long)]
    pub model_out: PathBuf,
    /// Per-epoch loss CSV.
    #[arg(long)]
    pub history_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// PCA components.
    #[arg(long)]
    pub k: Option<usize>,
    /// Accept test states that also occur in the training set.
    #[arg(long)]
    pub allow_overlap: bool,
    /// JSON report with per-method means.
    #[arg(long)]
    pub report_out: PathBuf,
    /// Per-entity comparison CSV, every test state and method.
    #[arg(long)]
    pub per_entity_out: PathBuf,
    /// Per-entity CSV restricted to a seeded sample of test states.
    #[arg(long)]
    pub sample_out: Option<PathBuf>,
    #[arg(long)]
    pub sample_frac: Option<f64>,
    #[arg(long)]
    pub sample_seed: Option<u64>,
}

#[derive(Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with `z1..zL` columns, as written by `embed`.
    #[arg(long)]
    pub latent: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand)]
pub enum ExploreCommand {
    /// Compare vector averaging with latent averaging for two states.
    Average(AverageArgs),
    /// Decode random neighbours of one state's embedding.
    Perturb(PerturbArgs),
    /// Pairwise latent distances between chosen states.
    Table(TableArgs),
}

#[derive(Args)]
pub struct ModelData {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct AverageArgs {
    #[command(flatten)]
    pub io: ModelData,
    #[arg(long)]
    pub i: usize,
    #[arg(long)]
    pub j: usize,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum NoiseArg {
    Uniform,
    TruncatedNormal,
}

impl From<NoiseArg> for PerturbNoise {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Uniform => PerturbNoise::Uniform,
            NoiseArg::TruncatedNormal => PerturbNoise::TruncatedNormal,
        }
    }
}

#[derive(Args)]
pub struct PerturbArgs {
    #[command(flatten)]
    pub io: ModelData,
    #[arg(long)]
    pub i: usize,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub range: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub noise: Option<NoiseArg>,
}

#[derive(Args)]
pub struct TableArgs {
    #[command(flatten)]
    pub io: ModelData,
    /// Dataset row indices, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub indices: Vec<usize>,
}

#[derive(Args)]
pub struct TsneArgs {
    /// CSV written by `embed`.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub perplexity: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn exit_status(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config::FileConfig::load(cli.config.as_deref())
        .map_err(anyhow::Error::from)
        .and_then(|file| commands::run(cli.command, &file));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let lib = err.chain().find_map(|e| e.downcast_ref::<Error>());
            let (code, class) = lib.map_or(("io", ErrorClass::Data), |e| (e.code(), e.class()));
            let msg = format!("{err:#}").replace('\n', " ");
            eprintln!("error[{code}]: {msg}");
            ExitCode::from(exit_status(class))
        }
    }
}
