//! SGD training: fresh runs, resumption from a checkpoint, and continue
//! training of a baseline on in-domain data.

mod checkpoint;

pub use checkpoint::{summary_path, Checkpoint, CheckpointError, RngState, FORMAT_VERSION, MAGIC};

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    make_batches, tokenize, CorpusError, ParallelCorpus, SentencePair, Vocabulary,
    DEFAULT_BATCH_SIZE, DEFAULT_MAX_LEN,
};
use crate::model::{batch_nll_grad, token_count, ModelConfig, ModelError, ModelParams};
use crate::nn::{sgd_update, NnError, ParamSet};

pub const DEFAULT_LR: f64 = 0.1;
pub const DEFAULT_CLIP_NORM: f64 = 5.0;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training corpus is empty after filtering")]
    EmptyCorpus,
    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),
    #[error("non-finite loss in epoch {epoch}, batch {batch}; parameters rolled back to epoch {last_good_epoch}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        last_good_epoch: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("metrics log: {0}")]
    Metrics(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub batch_size: usize,
    /// Total epochs of the phase (a resumed run continues up to this count).
    pub epochs: usize,
    pub seed: u64,
    /// Emit a checkpoint every this many epochs (the last epoch always emits).
    pub checkpoint_every: usize,
    /// Pairs with a side longer than this are dropped.
    pub max_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: DEFAULT_LR,
            clip_norm: Some(DEFAULT_CLIP_NORM),
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: 10,
            seed: 1,
            checkpoint_every: 1,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, allow_zero_epochs: bool) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("clip_norm must be positive, got {c}"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.epochs == 0 && !allow_zero_epochs {
            return bad("epochs must be at least 1".into());
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be at least 1".into());
        }
        if self.max_len == 0 {
            return bad("max_len must be at least 1".into());
        }
        Ok(())
    }
}

/// How a run obtains its starting parameters.
#[derive(Debug, Clone)]
pub enum TrainMode {
    /// Random initialisation over the given vocabularies.
    Fresh {
        model: ModelConfig,
        src_vocab: Vocabulary,
        tgt_vocab: Vocabulary,
    },
    /// Start a new phase from a trained baseline; epochs count from 1.
    Continue {
        baseline: Box<Checkpoint>,
        /// Rebuild both vocabularies from the new corpus with this cutoff,
        /// carrying over rows of tokens the baseline already knew.
        rebuild_vocab: Option<usize>,
    },
    /// Pick an interrupted phase up where its checkpoint left it.
    Resume(Box<Checkpoint>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean per-token negative log-likelihood over the epoch's updates.
    pub mean_loss: f64,
    pub tokens: usize,
    pub wall_seconds: f64,
}

impl EpochMetrics {
    pub fn perplexity(&self) -> f64 {
        self.mean_loss.exp()
    }
}

/// Checks that `ckpt` matches the vocabularies and dimensions a caller
/// expects to continue with.
pub fn check_compatible(
    ckpt: &Checkpoint,
    src_vocab: Option<&Vocabulary>,
    tgt_vocab: Option<&Vocabulary>,
    dims: Option<&ModelConfig>,
) -> Result<(), TrainError> {
    if !ckpt.params.matches(&ckpt.config) {
        return Err(TrainError::IncompatibleCheckpoint(
            "parameter shapes disagree with the stored config".into(),
        ));
    }
    if src_vocab.is_some_and(|v| v != &ckpt.src_vocab) {
        return Err(TrainError::IncompatibleCheckpoint(
            "source vocabulary differs from the checkpoint's".into(),
        ));
    }
    if tgt_vocab.is_some_and(|v| v != &ckpt.tgt_vocab) {
        return Err(TrainError::IncompatibleCheckpoint(
            "target vocabulary differs from the checkpoint's".into(),
        ));
    }
    if let Some(d) = dims {
        let c = &ckpt.config;
        let same = (
            d.embedding_dim,
            d.hidden_dim,
            d.attention_hidden,
            d.readout_hidden,
        ) == (
            c.embedding_dim,
            c.hidden_dim,
            c.attention_hidden,
            c.readout_hidden,
        );
        if !same {
            return Err(TrainError::IncompatibleCheckpoint(format!(
                "dimensions {}/{}/{}/{} differ from the checkpoint's {}/{}/{}/{}",
                d.embedding_dim,
                d.hidden_dim,
                d.attention_hidden,
                d.readout_hidden,
                c.embedding_dim,
                c.hidden_dim,
                c.attention_hidden,
                c.readout_hidden
            )));
        }
    }
    Ok(())
}

pub struct Trainer {
    cfg: TrainConfig,
    config: ModelConfig,
    params: ModelParams,
    grads: ModelParams,
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    pairs: Vec<SentencePair>,
    epoch: usize,
    rng: ChaCha8Rng,
    rng_seed: u64,
    wall_seconds: f64,
}

impl Trainer {
    pub fn new(
        cfg: TrainConfig,
        mode: TrainMode,
        corpus: &ParallelCorpus,
    ) -> Result<Self, TrainError> {
        let resuming = matches!(mode, TrainMode::Resume(_));
        let continuing = matches!(mode, TrainMode::Continue { .. });
        cfg.validate(continuing || resuming)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let rng_seed = cfg.seed;

        let (config, params, src_vocab, tgt_vocab, epoch, wall_seconds) = match mode {
            TrainMode::Fresh {
                model,
                src_vocab,
                tgt_vocab,
            } => {
                if model.src_vocab_size != src_vocab.len()
                    || model.tgt_vocab_size != tgt_vocab.len()
                {
                    return Err(TrainError::InvalidConfig(
                        "model vocabulary sizes differ from the vocabularies".into(),
                    ));
                }
                let params = ModelParams::init(&model, &mut rng)?;
                (model, params, src_vocab, tgt_vocab, 0, 0.0)
            }
            TrainMode::Continue {
                baseline,
                rebuild_vocab,
            } => {
                check_compatible(&baseline, None, None, None)?;
                let base = *baseline;
                match rebuild_vocab {
                    None => (
                        base.config,
                        base.params,
                        base.src_vocab,
                        base.tgt_vocab,
                        0,
                        0.0,
                    ),
                    Some(cutoff) => {
                        let src = Vocabulary::build(corpus.source.iter(), cutoff)?;
                        let tgt = Vocabulary::build(corpus.target.iter(), cutoff)?;
                        let mut config = base.config.clone();
                        config.src_vocab_size = src.len();
                        config.tgt_vocab_size = tgt.len();
                        let fresh = ModelParams::init(&config, &mut rng)?;
                        let params = base.params.remap_vocabularies(
                            &base.src_vocab,
                            &base.tgt_vocab,
                            &src,
                            &tgt,
                            &fresh,
                        );
                        (config, params, src, tgt, 0, 0.0)
                    }
                }
            }
            TrainMode::Resume(ckpt) => {
                check_compatible(&ckpt, None, None, None)?;
                let c = *ckpt;
                if c.rng.seed != cfg.seed {
                    return Err(TrainError::IncompatibleCheckpoint(format!(
                        "checkpoint was trained with seed {}, config says {}",
                        c.rng.seed, cfg.seed
                    )));
                }
                rng.set_word_pos(c.rng.word_pos);
                (
                    c.config,
                    c.params,
                    c.src_vocab,
                    c.tgt_vocab,
                    c.epoch,
                    c.wall_seconds,
                )
            }
        };
        config.validate()?;

        let (pairs, _) = corpus.encode(&src_vocab, &tgt_vocab, cfg.max_len);
        if pairs.is_empty() && cfg.epochs > epoch {
            return Err(TrainError::EmptyCorpus);
        }
        let grads = ModelParams::zeros(&config);
        Ok(Trainer {
            cfg,
            config,
            params,
            grads,
            src_vocab,
            tgt_vocab,
            pairs,
            epoch,
            rng,
            rng_seed,
            wall_seconds,
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model_config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn pairs(&self) -> &[SentencePair] {
        &self.pairs
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.cfg.epochs
    }

    /// Snapshot of the current state.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            params: self.params.clone(),
            src_vocab: self.src_vocab.clone(),
            tgt_vocab: self.tgt_vocab.clone(),
            epoch: self.epoch,
            rng: RngState {
                seed: self.rng_seed,
                word_pos: self.rng.get_word_pos(),
            },
            wall_seconds: self.wall_seconds,
        }
    }

    /// One shuffled pass over the corpus. On a non-finite loss or gradient
    /// the parameters are restored to their state at the start of the epoch.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics, TrainError> {
        let start = Instant::now();
        let epoch = self.epoch + 1;
        let batches = make_batches(
            &self.pairs,
            self.cfg.batch_size,
            self.cfg.seed,
            epoch as u64,
        )?;
        let snapshot = self.params.clone();
        let mut total = 0.0;
        let mut tokens = 0;
        for (b, batch) in batches.iter().enumerate() {
            let step = batch_nll_grad(&self.params, &batch.pairs, &mut self.grads)
                .map_err(TrainError::from)
                .and_then(|mean| {
                    if !mean.is_finite() {
                        return Err(TrainError::Nn(NnError::NonFiniteScores));
                    }
                    sgd_update(
                        &mut self.params,
                        &mut self.grads,
                        self.cfg.lr,
                        self.cfg.clip_norm,
                    )?;
                    Ok(mean)
                });
            let mean = match step {
                Ok(mean) => mean,
                Err(e) if !is_non_finite(&e) => return Err(e),
                Err(_) => {
                    self.params = snapshot;
                    self.grads.zero_all();
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        batch: b + 1,
                        last_good_epoch: self.epoch,
                    });
                }
            };
            total += mean * batch.len() as f64;
            tokens += batch.pairs.iter().map(token_count).sum::<usize>();
        }
        let wall = start.elapsed().as_secs_f64();
        self.wall_seconds += wall;
        self.epoch = epoch;
        let metrics = EpochMetrics {
            epoch,
            mean_loss: if tokens > 0 {
                total / tokens as f64
            } else {
                0.0
            },
            tokens,
            wall_seconds: wall,
        };
        log::info!(
            "epoch {epoch}: mean token loss {:.4}, perplexity {:.3}, {:.2}s",
            metrics.mean_loss,
            metrics.perplexity(),
            wall
        );
        Ok(metrics)
    }

    /// Trains up to the configured epoch count. `sink` sees every epoch's
    /// metrics and, on checkpoint epochs, the checkpoint.
    pub fn run<F>(&mut self, mut sink: F) -> Result<Vec<EpochMetrics>, TrainError>
    where
        F: FnMut(&EpochMetrics, Option<&Checkpoint>) -> Result<(), TrainError>,
    {
        let mut all = Vec::new();
        while !self.is_done() {
            let m = self.run_epoch()?;
            let emit = m.epoch % self.cfg.checkpoint_every == 0 || self.is_done();
            let ckpt = emit.then(|| self.checkpoint());
            sink(&m, ckpt.as_ref())?;
            all.push(m);
        }
        Ok(all)
    }
}

fn is_non_finite(e: &TrainError) -> bool {
    matches!(
        e,
        TrainError::Nn(NnError::NonFiniteScores | NnError::NonFiniteGradient { .. })
            | TrainError::Model(ModelError::Nn(
                NnError::NonFiniteScores | NnError::NonFiniteGradient { .. }
            ))
    )
}

/// Runs a full training phase, returning the final checkpoint and the
/// per-epoch metrics.
pub fn train<F>(
    cfg: TrainConfig,
    mode: TrainMode,
    corpus: &ParallelCorpus,
    sink: F,
) -> Result<(Checkpoint, Vec<EpochMetrics>), TrainError>
where
    F: FnMut(&EpochMetrics, Option<&Checkpoint>) -> Result<(), TrainError>,
{
    let mut trainer = Trainer::new(cfg, mode, corpus)?;
    let metrics = trainer.run(sink)?;
    Ok((trainer.checkpoint(), metrics))
}

/// Continue training `baseline` on `in_domain` only, keeping its
/// vocabularies. Returns one checkpoint per epoch, epoch 1 first.
pub fn continue_train(
    baseline: &Checkpoint,
    in_domain: &ParallelCorpus,
    cfg: TrainConfig,
) -> Result<Vec<Checkpoint>, TrainError> {
    let mut out = Vec::new();
    let mode = TrainMode::Continue {
        baseline: Box::new(baseline.clone()),
        rebuild_vocab: None,
    };
    let every_epoch = TrainConfig {
        checkpoint_every: 1,
        ..cfg
    };
    train(every_epoch, mode, in_domain, |_, c| {
        out.extend(c.cloned());
        Ok(())
    })?;
    Ok(out)
}

/// Tokenises raw line pairs into a corpus; convenience for callers holding
/// text in memory.
pub fn corpus_from_pairs<S: AsRef<str>>(pairs: &[(S, S)]) -> ParallelCorpus {
    ParallelCorpus {
        source: pairs.iter().map(|(s, _)| tokenize(s.as_ref())).collect(),
        target: pairs.iter().map(|(_, t)| tokenize(t.as_ref())).collect(),
    }
}

pub const METRICS_HEADER: &str = "epoch,mean_loss,wall_seconds";

/// Appends `epoch,mean_loss,wall_seconds` rows, writing the header when the
/// file is new or empty.
pub struct MetricsLog {
    file: File,
}

impl MetricsLog {
    pub fn open(path: &Path) -> io::Result<Self> {
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if file.metadata()?.len() == 0 {
            writeln!(file, "{METRICS_HEADER}")?;
        }
        Ok(MetricsLog { file })
    }

    pub fn append(&mut self, m: &EpochMetrics) -> io::Result<()> {
        writeln!(self.file, "{},{},{}", m.epoch, m.mean_loss, m.wall_seconds)?;
        self.file.flush()
    }
}

/// Parses a metrics CSV into `(epoch, mean_loss, wall_seconds)` rows.
pub fn read_metrics(path: &Path) -> io::Result<Vec<(usize, f64, f64)>> {
    let bad = |line: &str| {
        io::Error::new(
            io::ErrorKind::InvalidData,
            format!("bad metrics row: {line}"),
        )
    };
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line != METRICS_HEADER {
                return Err(bad(&line));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(bad(&line));
        }
        let parse = || -> Option<(usize, f64, f64)> {
            Some((f[0].parse().ok()?, f[1].parse().ok()?, f[2].parse().ok()?))
        };
        rows.push(parse().ok_or_else(|| bad(&line))?);
    }
    Ok(rows)
}
