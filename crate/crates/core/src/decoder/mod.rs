//! Beam search over a single model or an ensemble, and attention-based UNK
//! replacement.

mod unk;

pub use unk::{replace_unks, TranslationDictionary};

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, Vocabulary, BOS, EOS};
use crate::model::{decoder_step, encode, initial_state, EncoderStates, ModelError, ModelParams};
use crate::trainer::Checkpoint;

pub const DEFAULT_BEAM: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("no models given")]
    NoModels,
    #[error("beam size must be at least 1")]
    InvalidBeam,
    #[error("models disagree on the {0} vocabulary")]
    VocabularyMismatch(&'static str),
    #[error("ensemble weights must be finite, non-negative, one per model, and not all zero")]
    InvalidWeights,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// What one decoding step produces.
#[derive(Debug, Clone)]
pub struct StepOutput<S> {
    pub probs: Vec<f64>,
    pub alpha: Vec<f64>,
    pub state: S,
}

/// A left-to-right next-token distribution over a fixed target vocabulary.
pub trait Scorer {
    /// Per-sentence data shared by every hypothesis (the encoded source).
    type Context;
    type State: Clone;

    fn vocab_size(&self) -> usize;
    fn begin(&self, source: &[usize]) -> Result<(Self::Context, Self::State), DecodeError>;
    fn step(
        &self,
        ctx: &Self::Context,
        state: &Self::State,
        prev: usize,
    ) -> Result<StepOutput<Self::State>, DecodeError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combination {
    /// Weighted mean of the model posteriors.
    #[default]
    Arithmetic,
    /// Weighted mean of log posteriors, renormalised.
    Geometric,
}

/// Models combined at every step; a single model is an ensemble of one.
pub struct Ensemble<'a> {
    models: Vec<&'a ModelParams>,
    weights: Vec<f64>,
    combination: Combination,
}

impl<'a> Ensemble<'a> {
    pub fn new(
        models: Vec<&'a ModelParams>,
        weights: Option<Vec<f64>>,
        combination: Combination,
    ) -> Result<Self, DecodeError> {
        let first = models.first().ok_or(DecodeError::NoModels)?;
        let (sv, tv) = (first.src_vocab_size(), first.tgt_vocab_size());
        if models.iter().any(|m| m.tgt_vocab_size() != tv) {
            return Err(DecodeError::VocabularyMismatch("target"));
        }
        if models.iter().any(|m| m.src_vocab_size() != sv) {
            return Err(DecodeError::VocabularyMismatch("source"));
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; models.len()]);
        let total: f64 = weights.iter().sum();
        if weights.len() != models.len()
            || weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || total <= 0.0
        {
            return Err(DecodeError::InvalidWeights);
        }
        Ok(Ensemble {
            weights: weights.iter().map(|w| w / total).collect(),
            models,
            combination,
        })
    }

    pub fn single(model: &'a ModelParams) -> Self {
        Ensemble {
            models: vec![model],
            weights: vec![1.0],
            combination: Combination::Arithmetic,
        }
    }

    /// Builds an ensemble over checkpoints that share both vocabularies.
    pub fn from_checkpoints(
        ckpts: &'a [Checkpoint],
        weights: Option<Vec<f64>>,
        combination: Combination,
    ) -> Result<Self, DecodeError> {
        let first = ckpts.first().ok_or(DecodeError::NoModels)?;
        if ckpts.iter().any(|c| c.tgt_vocab != first.tgt_vocab) {
            return Err(DecodeError::VocabularyMismatch("target"));
        }
        if ckpts.iter().any(|c| c.src_vocab != first.src_vocab) {
            return Err(DecodeError::VocabularyMismatch("source"));
        }
        Self::new(ckpts.iter().map(|c| &c.params).collect(), weights, combination)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

impl Scorer for Ensemble<'_> {
    type Context = Vec<EncoderStates>;
    type State = Vec<Vec<f64>>;

    fn vocab_size(&self) -> usize {
        self.models[0].tgt_vocab_size()
    }

    fn begin(&self, source: &[usize]) -> Result<(Self::Context, Self::State), DecodeError> {
        let mut encs = Vec::with_capacity(self.models.len());
        let mut states = Vec::with_capacity(self.models.len());
        for m in &self.models {
            let enc = encode(m, source)?;
            states.push(initial_state(m, &enc));
            encs.push(enc);
        }
        Ok((encs, states))
    }

    fn step(
        &self,
        ctx: &Self::Context,
        state: &Self::State,
        prev: usize,
    ) -> Result<StepOutput<Self::State>, DecodeError> {
        let v = self.vocab_size();
        let mut acc = vec![0.0; v];
        let mut alpha = vec![0.0; ctx[0].len()];
        let mut next = Vec::with_capacity(self.models.len());
        for (k, m) in self.models.iter().enumerate() {
            let out = decoder_step(m, &state[k], prev, &ctx[k], None)?;
            let w = self.weights[k];
            match self.combination {
                Combination::Arithmetic => {
                    acc.iter_mut().zip(&out.probs).for_each(|(a, p)| *a += w * p)
                }
                Combination::Geometric => {
                    acc.iter_mut().zip(&out.probs).for_each(|(a, p)| *a += w * p.ln())
                }
            }
            alpha.iter_mut().zip(&out.alpha).for_each(|(a, x)| *a += w * x);
            next.push(out.s);
        }
        // a lone arithmetic model passes its distribution through untouched
        if self.models.len() > 1 || self.combination == Combination::Geometric {
            if self.combination == Combination::Geometric {
                let max = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                acc.iter_mut().for_each(|a| *a = (*a - max).exp());
            }
            let sum: f64 = acc.iter().sum();
            acc.iter_mut().for_each(|a| *a /= sum);
        }
        Ok(StepOutput {
            probs: acc,
            alpha,
            state: next,
        })
    }
}

/// A decoded target sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    /// Generated ids; ends in EOS when `complete`.
    pub tokens: Vec<usize>,
    /// Σ_t log p(tokens[t]).
    pub score: f64,
    /// Per-step attention over the source.
    pub attention: Vec<Vec<f64>>,
    /// Per-step argmax source position, 1-based.
    pub alignment: Vec<usize>,
    pub complete: bool,
}

impl Hypothesis {
    /// Output words without the final EOS.
    pub fn words(&self) -> &[usize] {
        match self.tokens.last() {
            Some(&EOS) if self.complete => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }

    /// Space-separated `t-i` pairs (both 1-based) for every output word.
    pub fn alignment_line(&self) -> String {
        self.alignment[..self.words().len()]
            .iter()
            .enumerate()
            .map(|(t, i)| format!("{}-{}", t + 1, i))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn normalized_score(&self) -> f64 {
        self.score / self.tokens.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub beam: usize,
    pub max_len: usize,
    /// Rank finished hypotheses by score per token.
    pub length_normalize: bool,
}

impl SearchOptions {
    pub fn new(beam: usize, max_len: usize) -> Self {
        SearchOptions {
            beam,
            max_len,
            length_normalize: false,
        }
    }
}

struct Live<S> {
    tokens: Vec<usize>,
    score: f64,
    attention: Vec<Vec<f64>>,
    state: S,
}

/// Lowest index of the maximum; `NaN` never wins.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn finish<S>(live: Live<S>, complete: bool) -> Hypothesis {
    let alignment = live.attention.iter().map(|a| argmax(a) + 1).collect();
    Hypothesis {
        tokens: live.tokens,
        score: live.score,
        attention: live.attention,
        alignment,
        complete,
    }
}

/// Beam search. Candidates are ranked by score, ties going to the lower
/// parent index and then the lower token id. A hypothesis completes when it
/// emits EOS; if none completes within `max_len` steps the best incomplete
/// one is returned.
pub fn beam_search<S: Scorer>(
    scorer: &S,
    source: &[usize],
    opts: SearchOptions,
) -> Result<Hypothesis, DecodeError> {
    if opts.beam == 0 {
        return Err(DecodeError::InvalidBeam);
    }
    let (ctx, state) = scorer.begin(source)?;
    let mut live = vec![Live {
        tokens: Vec::new(),
        score: 0.0,
        attention: Vec::new(),
        state,
    }];
    let mut done: Vec<Hypothesis> = Vec::new();

    for _ in 0..opts.max_len {
        let mut outputs = Vec::with_capacity(live.len());
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (hi, h) in live.iter().enumerate() {
            let prev = h.tokens.last().copied().unwrap_or(BOS);
            let out = scorer.step(&ctx, &h.state, prev)?;
            cands.extend(out.probs.iter().enumerate().map(|(w, p)| (h.score + p.ln(), hi, w)));
            outputs.push(out);
        }
        cands.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        cands.truncate(opts.beam);

        let mut next = Vec::with_capacity(cands.len());
        for (score, hi, w) in cands {
            let parent = &live[hi];
            let out = &outputs[hi];
            let mut tokens = parent.tokens.clone();
            tokens.push(w);
            let mut attention = parent.attention.clone();
            attention.push(out.alpha.clone());
            let h = Live {
                tokens,
                score,
                attention,
                state: out.state.clone(),
            };
            if w == EOS {
                done.push(finish(h, true));
            } else {
                next.push(h);
            }
        }
        live = next;
        if live.is_empty() {
            break;
        }
        if !opts.length_normalize {
            let best_done = done.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
            if best_done >= live[0].score {
                break;
            }
        }
    }

    let key = |h: &Hypothesis| {
        if opts.length_normalize {
            h.normalized_score()
        } else {
            h.score
        }
    };
    let best = |hs: Vec<Hypothesis>| {
        hs.into_iter().reduce(|a, b| match key(&b).total_cmp(&key(&a)) {
            Ordering::Greater => b,
            _ => a,
        })
    };
    if let Some(h) = best(done) {
        return Ok(h);
    }
    let fallback = live.into_iter().map(|l| finish(l, false)).collect();
    Ok(best(fallback).expect("beam keeps at least one live hypothesis"))
}

/// Step-wise argmax decoding.
pub fn greedy_decode<S: Scorer>(
    scorer: &S,
    source: &[usize],
    max_len: usize,
) -> Result<Hypothesis, DecodeError> {
    let (ctx, mut state) = scorer.begin(source)?;
    let mut h = Live {
        tokens: Vec::new(),
        score: 0.0,
        attention: Vec::new(),
        state: (),
    };
    for _ in 0..max_len {
        let prev = h.tokens.last().copied().unwrap_or(BOS);
        let out = scorer.step(&ctx, &state, prev)?;
        let w = argmax(&out.probs);
        h.score += out.probs[w].ln();
        h.tokens.push(w);
        h.attention.push(out.alpha);
        state = out.state;
        if w == EOS {
            return Ok(finish(h, true));
        }
    }
    Ok(finish(h, false))
}

/// Log-probability of a given token sequence under forced decoding.
pub fn forced_score<S: Scorer>(
    scorer: &S,
    source: &[usize],
    tokens: &[usize],
) -> Result<f64, DecodeError> {
    let (ctx, mut state) = scorer.begin(source)?;
    let mut prev = BOS;
    let mut score = 0.0;
    for &w in tokens {
        let out = scorer.step(&ctx, &state, prev)?;
        score += out.probs[w].ln();
        state = out.state;
        prev = w;
    }
    Ok(score)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslateOptions {
    pub beam: usize,
    /// Defaults to the first model's configured decode limit.
    pub max_len: Option<usize>,
    pub length_normalize: bool,
    pub combination: Combination,
    pub weights: Option<Vec<f64>>,
    /// Decode sentences on the rayon pool; output order is unchanged.
    pub parallel: bool,
}

impl Default for TranslateOptions {
    fn default() -> Self {
        TranslateOptions {
            beam: DEFAULT_BEAM,
            max_len: None,
            length_normalize: false,
            combination: Combination::Arithmetic,
            weights: None,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Translation {
    /// Output words after optional UNK replacement.
    pub words: Vec<String>,
    /// `None` for an empty source line.
    pub hypothesis: Option<Hypothesis>,
}

impl Translation {
    pub fn text(&self) -> String {
        self.words.join(" ")
    }

    pub fn alignment_line(&self) -> String {
        self.hypothesis
            .as_ref()
            .map(Hypothesis::alignment_line)
            .unwrap_or_default()
    }
}

fn translate_line(
    ensemble: &Ensemble<'_>,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
    line: &str,
    search: SearchOptions,
    dict: Option<&TranslationDictionary>,
) -> Result<Translation, DecodeError> {
    let tokens = tokenize(line);
    if tokens.is_empty() {
        return Ok(Translation {
            words: Vec::new(),
            hypothesis: None,
        });
    }
    let hyp = beam_search(ensemble, &src_vocab.encode(&tokens), search)?;
    let words = match dict {
        Some(d) => replace_unks(&hyp, tgt_vocab, &tokens, d),
        None => tgt_vocab.decode(hyp.words()),
    };
    Ok(Translation {
        words,
        hypothesis: Some(hyp),
    })
}

/// Translates `lines` with the ensemble of `models`. With a dictionary,
/// generated UNKs are replaced through the attention alignment.
pub fn translate_corpus(
    models: &[Checkpoint],
    lines: &[String],
    opts: &TranslateOptions,
    dict: Option<&TranslationDictionary>,
) -> Result<Vec<Translation>, DecodeError> {
    let ensemble = Ensemble::from_checkpoints(models, opts.weights.clone(), opts.combination)?;
    if opts.beam == 0 {
        return Err(DecodeError::InvalidBeam);
    }
    let first = &models[0];
    let search = SearchOptions {
        beam: opts.beam,
        max_len: opts.max_len.unwrap_or(first.config.max_decode_len),
        length_normalize: opts.length_normalize,
    };
    let run = |line: &String| {
        translate_line(&ensemble, &first.src_vocab, &first.tgt_vocab, line, search, dict)
    };
    if opts.parallel {
        lines.par_iter().map(run).collect()
    } else {
        lines.iter().map(run).collect()
    }
}
