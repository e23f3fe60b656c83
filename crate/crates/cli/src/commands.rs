use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use adaptnmt_core::corpus::{corpus_stats, read_lines, tokenize, ParallelCorpus, Vocabulary};
use adaptnmt_core::decoder::{
    translate_corpus, Combination, TranslateOptions, TranslationDictionary, DEFAULT_BEAM,
};
use adaptnmt_core::eval::{bleu, learning_curve, score, ter, write_curve_csv, TestSet};
use adaptnmt_core::model::ModelConfig;
use adaptnmt_core::trainer::{
    train, Checkpoint, EpochMetrics, MetricsLog, TrainConfig, TrainError, TrainMode,
};
use serde::Serialize;

use crate::config::{pick, pick_switch, DecodeSection, FileConfig, TrainSection};
use crate::error::{CliError, Exit};
use crate::manifest::{beside, RunManifest};
use crate::{
    BuildVocabArgs, Cli, Command, ContinueArgs, CurveArgs, DecodeFlags, ScoreArgs, ServeArgs,
    StatsArgs, TrainArgs, TrainFlags, TranslateArgs,
};

pub const DEFAULT_VOCAB_SIZE: usize = 100_000;
pub const METRICS_FILE: &str = "metrics.csv";
pub const RUN_FILE: &str = "run.json";

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let manifest_path = cli.manifest.clone();
    let (manifest, default_path) = match cli.command {
        Command::BuildVocab(a) => build_vocab(a, &file)?,
        Command::Stats(a) => stats(a, &file)?,
        Command::Train(a) => train_cmd(a, &file)?,
        Command::Continue(a) => continue_cmd(a, &file)?,
        Command::Translate(a) => translate(a, &file)?,
        Command::Score(a) => score_cmd(a, &file)?,
        Command::Curve(a) => curve(a, &file)?,
        Command::ServeEval(a) => serve(a, &file)?,
    };
    match manifest_path.or(default_path) {
        Some(p) => manifest.write(&p),
        None => {
            log::info!("output went to stdout; pass --manifest to record this run");
            Ok(())
        }
    }
}

/// A run's manifest and where it goes by default.
type Ran = (RunManifest, Option<PathBuf>);

fn log_resolved<C: Serialize>(name: &str, c: &C) {
    log::info!(
        "{name} config: {}",
        serde_json::to_string(c).expect("config serializes")
    );
}

fn parse_pair(s: &str) -> Result<(PathBuf, PathBuf), CliError> {
    match s.split_once(',') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() && !b.contains(',') => {
            Ok((PathBuf::from(a), PathBuf::from(b)))
        }
        _ => Err(CliError::new(
            Exit::Usage,
            format!("expected SRC,TGT file pair, got {s:?}"),
        )),
    }
}

fn load_pair(s: &str, m: &mut RunManifest) -> Result<ParallelCorpus, CliError> {
    let (src, tgt) = parse_pair(s)?;
    m.input(&src);
    m.input(&tgt);
    Ok(ParallelCorpus::load(&src, &tgt)?)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::output(path, e))
}

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch-{epoch:03}.ckpt")
}

fn build_vocab(a: BuildVocabArgs, file: &FileConfig) -> Result<Ran, CliError> {
    #[derive(Serialize)]
    struct Resolved {
        size: usize,
    }
    let r = Resolved {
        size: pick(a.size, file.build_vocab.size, DEFAULT_VOCAB_SIZE),
    };
    log_resolved("build-vocab", &r);
    let mut m = RunManifest::new("build-vocab", None, &r);
    let mut sentences = Vec::new();
    for p in &a.corpus {
        m.input(p);
        sentences.extend(read_lines(p)?.iter().map(|l| tokenize(l)));
    }
    let vocab = Vocabulary::build(&sentences, r.size)?;
    vocab.save(&a.out).map_err(|e| match e {
        adaptnmt_core::corpus::CorpusError::Io { source, .. } => CliError::output(&a.out, source),
        other => other.into(),
    })?;
    log::info!("{} entries written to {}", vocab.len(), a.out.display());
    m.output(&a.out);
    Ok((m, Some(beside(&a.out))))
}

fn stats(a: StatsArgs, file: &FileConfig) -> Result<Ran, CliError> {
    #[derive(Serialize)]
    struct Resolved {
        max_len: usize,
    }
    let r = Resolved {
        max_len: pick(a.max_len, file.stats.max_len, adaptnmt_core::corpus::DEFAULT_MAX_LEN),
    };
    log_resolved("stats", &r);
    let mut m = RunManifest::new("stats", None, &r);
    let corpus = load_pair(&a.corpus, &mut m)?;
    let s = corpus_stats(&corpus);
    let too_long = corpus
        .source
        .iter()
        .zip(&corpus.target)
        .filter(|(x, y)| x.len() > r.max_len || y.len() > r.max_len)
        .count();
    print!("{}", s.to_table("Source", "Target"));
    println!("{:<14}{:>24}", format!("> {} tokens", r.max_len), too_long);
    Ok((m, None))
}

fn train_config(flags: &TrainFlags, file: &TrainSection) -> TrainConfig {
    let d = TrainConfig::default();
    let clip = pick(flags.clip_norm, file.clip_norm, d.clip_norm.unwrap_or(0.0));
    TrainConfig {
        lr: pick(flags.lr, file.lr, d.lr),
        clip_norm: (clip != 0.0).then_some(clip),
        batch_size: pick(flags.batch_size, file.batch_size, d.batch_size),
        epochs: pick(flags.epochs, file.epochs, d.epochs),
        seed: pick(flags.seed, file.seed, d.seed),
        checkpoint_every: pick(flags.checkpoint_every, file.checkpoint_every, d.checkpoint_every),
        max_len: pick(flags.max_len, file.max_len, d.max_len),
    }
}

/// Runs the trainer, writing `epoch-NNN.ckpt` files and appending to
/// `metrics.csv` in `out_dir`.
fn run_training(
    cfg: TrainConfig,
    mode: TrainMode,
    corpus: &ParallelCorpus,
    out_dir: &Path,
    fresh_log: bool,
    m: &mut RunManifest,
) -> Result<Vec<EpochMetrics>, CliError> {
    create_dir(out_dir)?;
    let metrics_path = out_dir.join(METRICS_FILE);
    if fresh_log && metrics_path.exists() {
        fs::remove_file(&metrics_path).map_err(|e| CliError::output(&metrics_path, e))?;
    }
    let mut log = MetricsLog::open(&metrics_path).map_err(|e| CliError::output(&metrics_path, e))?;
    let mut written = Vec::new();
    let result = train(cfg, mode, corpus, |metrics, ckpt| {
        log.append(metrics)?;
        log::info!(
            "epoch {} loss {:.4} ppl {:.3} ({:.1}s)",
            metrics.epoch,
            metrics.mean_loss,
            metrics.perplexity(),
            metrics.wall_seconds
        );
        if let Some(c) = ckpt {
            let path = out_dir.join(checkpoint_name(c.epoch));
            c.save(&path).map_err(TrainError::from)?;
            written.push(path);
        }
        Ok(())
    });
    m.output(&metrics_path);
    for p in &written {
        m.output(p);
    }
    let (_, metrics) = result.map_err(|e| match e {
        TrainError::Checkpoint(adaptnmt_core::trainer::CheckpointError::Io { path, source }) => {
            CliError::output(Path::new(&path), source)
        }
        other => other.into(),
    })?;
    Ok(metrics)
}

fn train_cmd(a: TrainArgs, file: &FileConfig) -> Result<Ran, CliError> {
    let f = &file.train;
    let cfg = train_config(&a.train, f);
    let mut corpus = ParallelCorpus::default();
    let mut m_inputs = RunManifest::new("train", None, &());
    for pair in &a.corpus {
        corpus.extend(load_pair(pair, &mut m_inputs)?);
    }

    #[derive(Serialize)]
    struct Resolved {
        train: TrainConfig,
        model: Option<ModelConfig>,
        vocab_size: Option<usize>,
        resume: Option<PathBuf>,
    }
    let (mode, resolved) = if let Some(path) = &a.resume {
        m_inputs.input(path);
        let ckpt = Checkpoint::load(path)?;
        let r = Resolved {
            train: cfg.clone(),
            model: Some(ckpt.config.clone()),
            vocab_size: None,
            resume: Some(path.clone()),
        };
        (TrainMode::Resume(Box::new(ckpt)), r)
    } else {
        let (src_vocab, tgt_vocab, size) = match (&a.src_vocab, &a.tgt_vocab) {
            (Some(s), Some(t)) => {
                m_inputs.input(s);
                m_inputs.input(t);
                (Vocabulary::load(s)?, Vocabulary::load(t)?, None)
            }
            _ => {
                let n = pick(a.vocab_size, f.vocab_size, DEFAULT_VOCAB_SIZE);
                (
                    Vocabulary::build(&corpus.source, n)?,
                    Vocabulary::build(&corpus.target, n)?,
                    Some(n),
                )
            }
        };
        let d = ModelConfig::desk(src_vocab.len(), tgt_vocab.len());
        let model = ModelConfig {
            embedding_dim: pick(a.embedding_dim, f.embedding_dim, d.embedding_dim),
            hidden_dim: pick(a.hidden_dim, f.hidden_dim, d.hidden_dim),
            attention_hidden: pick(a.attention_hidden, f.attention_hidden, d.attention_hidden),
            readout_hidden: pick(a.readout_hidden, f.readout_hidden, d.readout_hidden),
            max_decode_len: pick(a.max_decode_len, f.max_decode_len, d.max_decode_len),
            ..d
        };
        model.validate().map_err(|e| CliError::config(e.to_string()))?;
        let r = Resolved {
            train: cfg.clone(),
            model: Some(model.clone()),
            vocab_size: size,
            resume: None,
        };
        let mode = TrainMode::Fresh {
            model,
            src_vocab,
            tgt_vocab,
        };
        (mode, r)
    };
    log_resolved("train", &resolved);
    let mut m = RunManifest::new("train", Some(cfg.seed), &resolved);
    m.inputs = m_inputs.inputs;

    if let TrainMode::Fresh {
        src_vocab,
        tgt_vocab,
        ..
    } = &mode
    {
        create_dir(&a.out_dir)?;
        for (name, v) in [("src.vocab", src_vocab), ("tgt.vocab", tgt_vocab)] {
            let p = a.out_dir.join(name);
            v.save(&p).map_err(|e| CliError::output(&p, e))?;
            m.output(&p);
        }
    }
    let fresh = a.resume.is_none();
    run_training(cfg, mode, &corpus, &a.out_dir, fresh, &mut m)?;
    Ok((m, Some(a.out_dir.join(RUN_FILE))))
}

fn continue_cmd(a: ContinueArgs, file: &FileConfig) -> Result<Ran, CliError> {
    let f = &file.continue_;
    let cfg = train_config(&a.train, f);
    #[derive(Serialize)]
    struct Resolved {
        train: TrainConfig,
        rebuild_vocab: Option<usize>,
        resume: Option<PathBuf>,
    }
    let resolved = Resolved {
        train: cfg.clone(),
        rebuild_vocab: a.rebuild_vocab.or(f.rebuild_vocab),
        resume: a.resume.clone(),
    };
    log_resolved("continue", &resolved);
    let mut m = RunManifest::new("continue", Some(cfg.seed), &resolved);
    m.input(&a.baseline);
    let baseline = Checkpoint::load(&a.baseline)?;
    let corpus = load_pair(&a.in_domain, &mut m)?;
    let mode = match &a.resume {
        Some(p) => {
            m.input(p);
            let ckpt = Checkpoint::load(p)?;
            if resolved.rebuild_vocab.is_none() {
                // the interrupted phase must have started from this baseline
                adaptnmt_core::trainer::check_compatible(
                    &ckpt,
                    Some(&baseline.src_vocab),
                    Some(&baseline.tgt_vocab),
                    Some(&baseline.config),
                )?;
            }
            TrainMode::Resume(Box::new(ckpt))
        }
        None => TrainMode::Continue {
            baseline: Box::new(baseline),
            rebuild_vocab: resolved.rebuild_vocab,
        },
    };
    let fresh = a.resume.is_none();
    run_training(cfg, mode, &corpus, &a.out_dir, fresh, &mut m)?;
    Ok((m, Some(a.out_dir.join(RUN_FILE))))
}

#[derive(Debug, Serialize)]
struct ResolvedDecode {
    beam: usize,
    max_len: Option<usize>,
    length_normalize: bool,
    parallel: bool,
}

fn decode_options(flags: &DecodeFlags, beam: Option<usize>, max_len: Option<usize>, ln: Option<bool>, par: Option<bool>) -> ResolvedDecode {
    ResolvedDecode {
        beam: pick(flags.beam, beam, DEFAULT_BEAM),
        max_len: flags.max_len.or(max_len),
        length_normalize: pick_switch(flags.length_normalize, ln),
        parallel: pick_switch(flags.parallel, par),
    }
}

fn load_models(paths: &[PathBuf], m: &mut RunManifest) -> Result<Vec<Checkpoint>, CliError> {
    paths
        .iter()
        .map(|p| {
            m.input(p);
            Checkpoint::load(p).map_err(CliError::from)
        })
        .collect()
}

fn read_source(input: Option<&Path>) -> Result<Vec<String>, CliError> {
    match input {
        Some(p) => Ok(read_lines(p)?),
        None => io::stdin()
            .lock()
            .lines()
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::input(Path::new("<stdin>"), e)),
    }
}

fn translate(a: TranslateArgs, file: &FileConfig) -> Result<Ran, CliError> {
    let f: &DecodeSection = &file.translate;
    #[derive(Serialize)]
    struct Resolved {
        #[serde(flatten)]
        decode: ResolvedDecode,
        combination: &'static str,
        weights: Option<Vec<f64>>,
        dict: Option<PathBuf>,
    }
    let combination = match (a.geometric, f.combination.as_deref()) {
        (true, _) | (false, Some("geometric")) => Combination::Geometric,
        (false, None | Some("arithmetic")) => Combination::Arithmetic,
        (false, Some(other)) => {
            return Err(CliError::config(format!(
                "combination must be \"arithmetic\" or \"geometric\", got {other:?}"
            )))
        }
    };
    let r = Resolved {
        decode: decode_options(&a.decode, f.beam, f.max_len, f.length_normalize, f.parallel),
        combination: match combination {
            Combination::Arithmetic => "arithmetic",
            Combination::Geometric => "geometric",
        },
        weights: a.weights.clone().or_else(|| f.weights.clone()),
        dict: a.dict.clone(),
    };
    log_resolved("translate", &r);
    let mut m = RunManifest::new("translate", None, &r);
    let models = load_models(&a.models, &mut m)?;
    let dict = match &a.dict {
        Some(p) => {
            m.input(p);
            Some(TranslationDictionary::load(p).map_err(|e| CliError::input(p, e))?)
        }
        None => None,
    };
    if let Some(p) = &a.input {
        m.input(p);
    }
    let lines = read_source(a.input.as_deref())?;
    let opts = TranslateOptions {
        beam: r.decode.beam,
        max_len: r.decode.max_len,
        length_normalize: r.decode.length_normalize,
        combination,
        weights: r.weights.clone(),
        parallel: r.decode.parallel,
    };
    let out = translate_corpus(&models, &lines, &opts, dict.as_ref())?;
    let mut text = String::new();
    for t in &out {
        text.push_str(&t.text());
        text.push('\n');
    }
    match &a.output {
        Some(p) => {
            write_file(p, &text)?;
            m.output(p);
        }
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::output(Path::new("<stdout>"), e))?,
    }
    if let Some(p) = &a.alignments {
        let mut al = String::new();
        for t in &out {
            al.push_str(&t.alignment_line());
            al.push('\n');
        }
        write_file(p, &al)?;
        m.output(p);
    }
    log::info!("translated {} lines with {} model(s)", out.len(), models.len());
    let place = a.output.as_deref().map(beside);
    Ok((m, place))
}

fn score_cmd(a: ScoreArgs, file: &FileConfig) -> Result<Ran, CliError> {
    #[derive(Serialize)]
    struct Resolved {
        smoothing: bool,
    }
    let r = Resolved {
        smoothing: pick_switch(a.smooth, file.score.smoothing),
    };
    log_resolved("score", &r);
    let mut m = RunManifest::new("score", None, &r);
    m.input(&a.hyp);
    m.input(&a.reference);
    let hyps: Vec<Vec<String>> = read_lines(&a.hyp)?.iter().map(|l| tokenize(l)).collect();
    let refs: Vec<Vec<String>> = read_lines(&a.reference)?.iter().map(|l| tokenize(l)).collect();
    let report = score(&hyps, &refs, r.smoothing)?;
    println!("{}", report.summary());
    let place = match &a.csv {
        Some(p) => {
            let mut csv = String::from("line,bleu,ter,edits,ref_words\n");
            for (i, (h, rf)) in hyps.iter().zip(&refs).enumerate() {
                let one_h = std::slice::from_ref(h);
                let one_r = std::slice::from_ref(rf);
                let b = bleu(one_h, one_r, r.smoothing)?.bleu;
                let (t, edits) = match ter(one_h, one_r) {
                    Ok(t) => (t.ter.to_string(), t.edits.total().to_string()),
                    // empty reference: TER undefined for this line
                    Err(_) => (String::new(), String::new()),
                };
                csv.push_str(&format!("{},{},{},{},{}\n", i + 1, b, t, edits, rf.len()));
            }
            write_file(p, &csv)?;
            m.output(p);
            Some(beside(p))
        }
        None => None,
    };
    Ok((m, place))
}

/// `epoch-NNN.ckpt` files of a directory, by epoch.
fn epoch_checkpoints(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::input(dir, e))? {
        let entry = entry.map_err(|e| CliError::input(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let epoch = name
            .strip_prefix("epoch-")
            .and_then(|s| s.strip_suffix(".ckpt"))
            .and_then(|s| s.parse::<usize>().ok());
        if let Some(e) = epoch {
            found.push((e, entry.path()));
        }
    }
    if found.is_empty() {
        return Err(CliError::input(dir, "no epoch-NNN.ckpt files"));
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

fn curve(a: CurveArgs, file: &FileConfig) -> Result<Ran, CliError> {
    let f = &file.curve;
    #[derive(Serialize)]
    struct Resolved {
        #[serde(flatten)]
        decode: ResolvedDecode,
        ensemble: bool,
        smoothing: bool,
    }
    let r = Resolved {
        decode: decode_options(&a.decode, f.beam, f.max_len, f.length_normalize, f.parallel),
        ensemble: pick_switch(a.ensemble, f.ensemble),
        smoothing: pick_switch(a.smooth, f.smoothing),
    };
    log_resolved("curve", &r);
    let mut m = RunManifest::new("curve", None, &r);
    m.input(&a.baseline);
    let baseline = Checkpoint::load(&a.baseline)?;
    let paths = epoch_checkpoints(&a.epochs_dir)?;
    let series = load_models(&paths, &mut m)?;
    let mut tests = Vec::new();
    for prefix in &a.tests {
        m.input(prefix);
        tests.push(TestSet::load(prefix)?);
    }
    let opts = TranslateOptions {
        beam: r.decode.beam,
        max_len: r.decode.max_len,
        length_normalize: r.decode.length_normalize,
        parallel: r.decode.parallel,
        ..TranslateOptions::default()
    };
    let rows = learning_curve(&baseline, &series, &tests, r.ensemble, &opts, r.smoothing)?;
    for row in &rows {
        log::info!(
            "epoch {} {}: BLEU {:.1} TER {:.1} (TER-BLEU)/2 {:.1}",
            row.epoch,
            row.testset,
            row.bleu,
            row.ter,
            row.combined
        );
    }
    let mut buf = Vec::new();
    write_curve_csv(&rows, &mut buf).expect("writing to memory");
    let place = match &a.out {
        Some(p) => {
            fs::write(p, &buf).map_err(|e| CliError::output(p, e))?;
            m.output(p);
            Some(beside(p))
        }
        None => {
            io::stdout()
                .write_all(&buf)
                .map_err(|e| CliError::output(Path::new("<stdout>"), e))?;
            None
        }
    };
    Ok((m, place))
}

fn serve(a: ServeArgs, file: &FileConfig) -> Result<Ran, CliError> {
    #[derive(Serialize)]
    struct Resolved {
        addr: String,
        store: PathBuf,
    }
    let f = &file.serve_eval;
    let r = Resolved {
        addr: pick(a.addr, f.addr.clone(), "127.0.0.1:8080".to_string()),
        store: pick(a.store, f.store.clone(), PathBuf::from("eval-sessions")),
    };
    log_resolved("serve-eval", &r);
    let addr: std::net::SocketAddr = r
        .addr
        .parse()
        .map_err(|e| CliError::config(format!("bad address {:?}: {e}", r.addr)))?;
    let state = adaptnmt_server::AppState::open(&r.store)?;
    let mut m = RunManifest::new("serve-eval", None, &r);
    m.output(&r.store);
    // record the run before blocking on the server
    let place = r.store.join("serve-eval.run.json");
    m.write(&place)?;
    let rt = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::new(Exit::Internal, e.to_string()))?;
    rt.block_on(adaptnmt_server::serve(state, addr))
        .map_err(|e| CliError::new(Exit::Internal, format!("server on {addr}: {e}")))?;
    Ok((m, Some(place)))
}
