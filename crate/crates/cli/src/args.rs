use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "remiclip",
    version,
    about = "Text-conditioned symbolic music: REMI tokens, alignment training and guided generation"
)]
pub struct Cli {
    /// Seed for every randomized step; overrides any seed in --config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// JSON file of settings for the subcommand; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More log output on stderr (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode a MIDI file as REMI events plus per-bar attribute classes.
    Tokenize(TokenizeArgs),
    /// Write a REMI stream (text, JSON events or token ids) as a MIDI file.
    Detokenize(DetokenizeArgs),
    /// Per-bar rhythmic intensity and polyphony, binned over the given files.
    Attrs(AttrsArgs),
    /// Objective metrics of a MIDI file.
    Metrics(MetricsArgs),
    /// Build and split (music, caption) pair datasets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train the text-music alignment model on a split dataset.
    TrainAlign(TrainAlignArgs),
    /// Compare analytic gradients against central finite differences.
    GradCheck(GradCheckArgs),
    /// Tune a decoder toward a text prompt and emit REMI and MIDI.
    Generate(GenerateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct TokenizeArgs {
    /// Input Standard MIDI File.
    pub input: PathBuf,
    /// Attribute bins from `attrs --bins-out`; fitted on the input alone if absent.
    #[arg(long, value_name = "FILE")]
    pub bins: Option<PathBuf>,
    /// Print one token per line instead of JSON.
    #[arg(long)]
    pub text: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct DetokenizeArgs {
    /// REMI input; `-` reads standard input.
    pub input: PathBuf,
    /// Output MIDI path.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Repair an ill-formed stream instead of rejecting it.
    #[arg(long)]
    pub repair: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct AttrsArgs {
    /// Input MIDI files; bins are fitted over all of them.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Write the fitted bins as JSON.
    #[arg(long, value_name = "FILE")]
    pub bins_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MetricsArgs {
    /// Input MIDI file.
    pub input: PathBuf,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Segment every MIDI file in a directory and pair segments with captions.
    Build(DatasetBuildArgs),
    /// Split a pair file 80/10/10 by segment into train, validation and test.
    Split(DatasetSplitArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct DatasetBuildArgs {
    /// Directory of .mid/.midi files; each file stem is its piece id.
    #[arg(long)]
    pub midi_dir: PathBuf,
    /// JSON object {"reviews": {id: text}, "links": {piece_id: [id, ...]}}.
    #[arg(long)]
    pub reviews: PathBuf,
    /// Bars per segment.
    #[arg(long, default_value_t = remiclip::dataset::DEFAULT_SEGMENT_BARS)]
    pub segment_bars: u32,
    /// Output JSONL path.
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(skip)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct DatasetSplitArgs {
    /// Pair file from `dataset build`.
    pub input: PathBuf,
    /// Directory for train.jsonl, validation.jsonl and test.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(skip)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SchedulerArg {
    Constant,
    Cosine,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LossModeArg {
    InBatch,
    Pairwise,
}

/// Flags that override fields of the alignment config.
#[derive(Debug, Default, Args)]
pub struct AlignFlags {
    /// Embedding width [default: 64].
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Pairs per step [default: 8].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Passes over the training set [default: 200].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Peak learning rate [default: 1e-4].
    #[arg(long)]
    pub lr_max: Option<f64>,
    /// Final learning rate under cosine annealing [default: 5e-6].
    #[arg(long)]
    pub lr_min: Option<f64>,
    /// Learning-rate schedule [default: cosine].
    #[arg(long, value_enum)]
    pub scheduler: Option<SchedulerArg>,
    /// Initial softmax temperature [default: 0.07].
    #[arg(long)]
    pub temperature_init: Option<f64>,
    /// Caption word hash buckets [default: 32768].
    #[arg(long)]
    pub text_hash_buckets: Option<usize>,
    /// Standard deviation of the initial embeddings [default: 0.005; 1.0 for grad-check].
    #[arg(long)]
    pub init_scale: Option<f64>,
    /// Negatives from the rest of the batch or from stored negative captions [default: in-batch].
    #[arg(long, value_enum)]
    pub loss_mode: Option<LossModeArg>,
}

#[derive(Debug, Args)]
pub struct TrainAlignArgs {
    /// Directory holding train.jsonl and validation.jsonl.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint output path.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Write per-epoch losses as CSV.
    #[arg(long, value_name = "FILE")]
    pub loss_csv: Option<PathBuf>,
    #[command(flatten)]
    pub align: AlignFlags,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GradTarget {
    Align,
    Decoder,
    Both,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    /// Which model to check.
    #[arg(long, value_enum, default_value = "both")]
    pub model: GradTarget,
    /// Pair file for the batch; a synthetic captioned corpus if absent.
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Check this alignment checkpoint instead of a fresh model.
    #[arg(long, value_name = "FILE")]
    pub align: Option<PathBuf>,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Entries checked per tensor.
    #[arg(long, default_value_t = remiclip::grad::DEFAULT_SAMPLES_PER_TENSOR)]
    pub samples: usize,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Prompt scored by the decoder check.
    #[arg(long, default_value = "A pop song about love")]
    pub prompt: String,
    #[command(flatten)]
    pub align_flags: AlignFlags,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Text the generated music should match.
    #[arg(long)]
    pub prompt: Option<String>,
    /// Trained alignment checkpoint; a fresh seeded model if absent.
    #[arg(long, value_name = "FILE")]
    pub align: Option<PathBuf>,
    /// Decoder checkpoint to start from; a fresh seeded decoder if absent.
    #[arg(long, value_name = "FILE")]
    pub decoder: Option<PathBuf>,
    /// Directory for raw.txt, repaired.txt and generated.mid.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Write the per-epoch tuning loss as CSV.
    #[arg(long, value_name = "FILE")]
    pub loss_csv: Option<PathBuf>,
    /// Save the tuned decoder.
    #[arg(long, value_name = "FILE")]
    pub save_decoder: Option<PathBuf>,
    /// Top-p sampling mass [default: 0.9].
    #[arg(long)]
    pub nucleus_p: Option<f64>,
    /// Longest emitted stream [default: 512].
    #[arg(long)]
    pub max_tokens: Option<usize>,
    /// Tuning epochs [default: 100].
    #[arg(long)]
    pub tune_epochs: Option<usize>,
    /// Tuning step size [default: 1.0].
    #[arg(long)]
    pub tune_lr: Option<f64>,
    /// Tokens sampled per tuning epoch [default: 64].
    #[arg(long)]
    pub tune_context: Option<usize>,
    /// Stop after this many epochs without improvement.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Decoder width for a fresh decoder.
    #[arg(long)]
    pub embed_dim: Option<usize>,
}
