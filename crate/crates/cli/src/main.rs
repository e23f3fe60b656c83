//! `adaptnmt`: vocabularies, corpus statistics, training, continue training,
//! ensemble translation, scoring, learning curves and the human evaluation
//! service.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, Exit};

#[derive(Debug, Parser)]
#[command(name = "adaptnmt", version, about = "Desk-scale NMT with continue training and ensemble decoding")]
pub struct Cli {
    /// TOML config file; flags override it, it overrides defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest (default: next to the main output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a top-N vocabulary from one side of a corpus.
    BuildVocab(BuildVocabArgs),
    /// Print sentence, running-word and vocabulary counts of a parallel corpus.
    Stats(StatsArgs),
    /// Train a model from scratch (or resume an interrupted run).
    Train(TrainArgs),
    /// Continue training a baseline checkpoint on in-domain data only.
    Continue(ContinueArgs),
    /// Translate with one model or an ensemble.
    Translate(TranslateArgs),
    /// Corpus BLEU, TER and (TER-BLEU)/2 of a hypothesis file.
    Score(ScoreArgs),
    /// Score a checkpoint series on test sets, one CSV row per epoch and set.
    Curve(CurveArgs),
    /// Serve the human evaluation HTTP API.
    ServeEval(ServeArgs),
}

#[derive(Debug, Args)]
pub struct BuildVocabArgs {
    /// Tokenized text, one sentence per line; repeat to concatenate files.
    #[arg(long, required = true)]
    pub corpus: Vec<PathBuf>,
    /// Keep the N most frequent tokens [default: 100000].
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// `SRC,TGT` file pair.
    #[arg(long)]
    pub corpus: String,
    /// Also count pairs a trainer would skip as too long [default: 50].
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub lr: Option<f64>,
    /// Global gradient-norm clip; 0 disables [default: 5].
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Skip pairs with a side longer than this [default: 50].
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `SRC,TGT` file pair; repeat to train on the concatenation.
    #[arg(long, required = true)]
    pub corpus: Vec<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Use this source vocabulary instead of building one.
    #[arg(long, requires = "tgt_vocab")]
    pub src_vocab: Option<PathBuf>,
    #[arg(long, requires = "src_vocab")]
    pub tgt_vocab: Option<PathBuf>,
    /// Vocabulary size per side when building [default: 100000].
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub attention_hidden: Option<usize>,
    #[arg(long)]
    pub readout_hidden: Option<usize>,
    #[arg(long)]
    pub max_decode_len: Option<usize>,
    /// Pick up an interrupted run from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct ContinueArgs {
    #[arg(long)]
    pub baseline: PathBuf,
    /// `SRC,TGT` in-domain file pair.
    #[arg(long)]
    pub in_domain: String,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Rebuild vocabularies from the in-domain data with this size.
    #[arg(long)]
    pub rebuild_vocab: Option<usize>,
    /// Pick up an interrupted continue run from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args, Default)]
pub struct DecodeFlags {
    /// [default: 8]
    #[arg(long)]
    pub beam: Option<usize>,
    /// Longest output in tokens [default: the model's limit].
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Rank finished hypotheses by score per token.
    #[arg(long)]
    pub length_normalize: bool,
    /// Decode lines in parallel; output is unchanged.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// Comma-separated checkpoints; more than one decodes as an ensemble.
    #[arg(long, value_delimiter = ',', required = true)]
    pub models: Vec<PathBuf>,
    /// Source file [default: stdin].
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output file [default: stdout].
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Combine ensemble distributions by geometric instead of arithmetic mean.
    #[arg(long)]
    pub geometric: bool,
    /// Comma-separated ensemble weights, one per model.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// `source<TAB>target` dictionary for UNK replacement.
    #[arg(long)]
    pub dict: Option<PathBuf>,
    /// Write `t-i` alignment lines here.
    #[arg(long)]
    pub alignments: Option<PathBuf>,
    #[command(flatten)]
    pub decode: DecodeFlags,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Add-one smoothing of n-gram precisions.
    #[arg(long)]
    pub smooth: bool,
    /// Per-sentence details as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long)]
    pub baseline: PathBuf,
    /// Directory of `epoch-NNN.ckpt` files.
    #[arg(long)]
    pub epochs_dir: PathBuf,
    /// Comma-separated test set prefixes; each reads PREFIX.src and PREFIX.tgt.
    #[arg(long, value_delimiter = ',', required = true)]
    pub tests: Vec<PathBuf>,
    /// Decode every epoch as an ensemble with the baseline.
    #[arg(long)]
    pub ensemble: bool,
    #[arg(long)]
    pub smooth: bool,
    /// CSV output [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub decode: DecodeFlags,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Session store directory [default: eval-sessions].
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// [default: 127.0.0.1:8080]
    #[arg(long)]
    pub addr: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Exit::Usage as u8 } else { 0 });
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { exit, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(exit as u8)
        }
    }
}
