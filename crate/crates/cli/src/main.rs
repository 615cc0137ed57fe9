//! `relex` — cross-sentence n-ary relation extraction with graph LSTMs.
//!
//! Subcommands: `build-dataset`, `train`, `eval`, `crossval`, `extract`,
//! `gradcheck`. All commands are deterministic for fixed inputs and flags.

mod checkpoint;
mod commands;
mod formats;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use relex_core::docgraph::EdgePolicy;
use relex_core::graph_lstm::Variant;
use relex_core::train_eval::TrainConfig;

#[derive(Parser)]
#[command(
    name = "relex",
    version,
    about = "Cross-sentence n-ary relation extraction with graph LSTMs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Encoder parametrization, mirrored from the core library for clap.
#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    /// One weight set per coarse edge type.
    Full,
    /// Shared weight tensors contracted with learned edge-label embeddings.
    Embed,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => Variant::Full,
            VariantArg::Embed => Variant::Embed,
        }
    }
}

/// Which edges enter the document graph.
#[derive(Clone, Copy, ValueEnum)]
enum EdgesArg {
    /// Adjacent-word chain only (a sequential BiLSTM).
    Chain,
    /// Chain plus dependency arcs within each sentence.
    Tree,
    /// Chain restricted to tokens on shortest dependency paths between
    /// entity mentions, plus the dependency arcs on those paths.
    ShortestPath,
    /// Everything: chain, dependencies, sentence links, coreference and
    /// discourse arcs.
    Full,
}

impl From<EdgesArg> for EdgePolicy {
    fn from(e: EdgesArg) -> Self {
        match e {
            EdgesArg::Chain => EdgePolicy::ChainOnly,
            EdgesArg::Tree => EdgePolicy::TreeOnly,
            EdgesArg::ShortestPath => EdgePolicy::ShortestPath,
            EdgesArg::Full => EdgePolicy::FullGraph,
        }
    }
}

/// Hyperparameters shared by `train` and `crossval`.
#[derive(Args)]
struct TrainOpts {
    /// Encoder parametrization.
    #[arg(long, value_enum, default_value_t = VariantArg::Full)]
    variant: VariantArg,
    /// Which edges enter the document graph.
    #[arg(long, value_enum, default_value_t = EdgesArg::Full)]
    edges: EdgesArg,
    /// Drop coreference edges even under --edges full.
    #[arg(long)]
    no_coref: bool,
    /// Drop discourse edges even under --edges full.
    #[arg(long)]
    no_discourse: bool,
    /// LSTM hidden state width per direction.
    #[arg(long, default_value_t = 150)]
    hidden_dim: usize,
    /// Word embedding width.
    #[arg(long, default_value_t = 100)]
    word_dim: usize,
    /// Edge-label embedding width (embed variant only).
    #[arg(long, default_value_t = 3)]
    edge_dim: usize,
    /// Instances per gradient step.
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    /// SGD learning rate.
    #[arg(long, default_value_t = 0.02)]
    learning_rate: f64,
    /// Upper bound on training epochs.
    #[arg(long, default_value_t = 30)]
    max_epochs: usize,
    /// Epochs without dev improvement before stopping.
    #[arg(long, default_value_t = 3)]
    patience: usize,
    /// Fraction of documents held out for early stopping.
    #[arg(long, default_value_t = 0.1)]
    dev_fraction: f64,
    /// Maximum sentence window an instance may span.
    #[arg(long, default_value_t = 3)]
    k_sentences: usize,
    /// Seed for initialization, shuffling and subsampling.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Keep pretrained word vectors fixed during training.
    #[arg(long)]
    freeze_embeddings: bool,
    /// Clamp every gradient component to [-c, c].
    #[arg(long)]
    grad_clip: Option<f64>,
    /// Pretrained word vectors (text format: word then components).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Comma-separated task list; first entry is the main task.
    #[arg(long, value_delimiter = ',')]
    multitask: Vec<String>,
}

impl TrainOpts {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            variant: self.variant.into(),
            policy: self.edges.into(),
            include_coref: !self.no_coref,
            include_discourse: !self.no_discourse,
            hidden_dim: self.hidden_dim,
            word_dim: self.word_dim,
            edge_dim: self.edge_dim,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            patience: self.patience,
            dev_fraction: self.dev_fraction,
            k_sentences: self.k_sentences,
            seed: self.seed,
            freeze_word_embeddings: self.freeze_embeddings,
            grad_clip: self.grad_clip,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Scan a corpus for entity tuples, label them against a knowledge
    /// base, and write a fold-tagged instance file.
    BuildDataset {
        /// Parsed corpus (one JSON document per line).
        #[arg(long)]
        corpus: PathBuf,
        /// Knowledge base of known tuples (tab-separated).
        #[arg(long)]
        kb: PathBuf,
        /// Output instance file.
        #[arg(long)]
        out: PathBuf,
        /// Maximum sentence window a candidate may span.
        #[arg(long, default_value_t = 3)]
        k_sentences: usize,
        /// Negatives sampled per positive.
        #[arg(long, default_value_t = 1.0)]
        neg_ratio: f64,
        /// Cross-validation folds to tag instances with.
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Seed for negative sampling and fold assignment.
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Train a model and write a checkpoint.
    Train {
        /// Parsed corpus (one JSON document per line).
        #[arg(long)]
        corpus: PathBuf,
        /// Labeled instance file.
        #[arg(long)]
        instances: PathBuf,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: TrainOpts,
    },
    /// Score labeled instances with a checkpoint and report metrics.
    Eval {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Parsed corpus (one JSON document per line).
        #[arg(long)]
        corpus: PathBuf,
        /// Labeled instance file.
        #[arg(long)]
        instances: PathBuf,
        /// Task to evaluate (default: the checkpoint's first task).
        #[arg(long)]
        task: Option<String>,
        /// Probability cutoff for a positive prediction.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Document-level k-fold cross-validation.
    Crossval {
        /// Parsed corpus (one JSON document per line).
        #[arg(long)]
        corpus: PathBuf,
        /// Labeled instance file with fold tags.
        #[arg(long)]
        instances: PathBuf,
        /// Number of folds.
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[command(flatten)]
        opts: TrainOpts,
    },
    /// Run a trained model over a corpus and print scored tuples.
    Extract {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Parsed corpus (one JSON document per line).
        #[arg(long)]
        corpus: PathBuf,
        /// Task to extract (default: the checkpoint's first task).
        #[arg(long)]
        task: Option<String>,
        /// Probability cutoff for emitting a tuple.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Compare analytic gradients against finite differences.
    Gradcheck {
        /// Check a single parametrization (default: both).
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        /// Number of random instances to sweep.
        #[arg(long, default_value_t = 20)]
        instances: usize,
        /// Seed for instance generation.
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::BuildDataset { corpus, kb, out, k_sentences, neg_ratio, folds, seed } => {
            commands::cmd_build_dataset(&corpus, &kb, &out, k_sentences, neg_ratio, folds, seed)
        }
        Command::Train { corpus, instances, out, opts } => commands::cmd_train(
            &corpus,
            &instances,
            &out,
            opts.config(),
            opts.embeddings.as_deref(),
            &opts.multitask,
        ),
        Command::Eval { checkpoint, corpus, instances, task, threshold } => {
            commands::cmd_eval(&checkpoint, &corpus, &instances, task.as_deref(), threshold)
        }
        Command::Crossval { corpus, instances, folds, opts } => commands::cmd_crossval(
            &corpus,
            &instances,
            folds,
            opts.config(),
            opts.embeddings.as_deref(),
            &opts.multitask,
        ),
        Command::Extract { checkpoint, corpus, task, threshold } => {
            commands::cmd_extract(&checkpoint, &corpus, task.as_deref(), threshold)
        }
        Command::Gradcheck { variant, instances, seed } => {
            commands::cmd_gradcheck(variant.map(Into::into), instances, seed)
        }
    }
}
