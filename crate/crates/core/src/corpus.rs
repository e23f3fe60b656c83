//! Parallel corpus ingestion, frequency-cutoff vocabularies and batching.
//!
//! Input is pre-tokenized UTF-8 text, one sentence per line; tokens are
//! separated by whitespace.

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const UNK: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const PAD: usize = 3;
pub const NUM_SPECIALS: usize = 4;
pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<unk>", "<s>", "</s>", "<pad>"];

pub const DEFAULT_MAX_LEN: usize = 50;
pub const DEFAULT_BATCH_SIZE: usize = 64;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("source has {source_lines} lines but target has {target_lines}")]
    LineMismatch {
        source_lines: usize,
        target_lines: usize,
    },
    #[error("malformed vocabulary file at line {line}: {reason}")]
    BadVocabFile { line: usize, reason: String },
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
    #[error("vocabulary cutoff must be at least 1")]
    ZeroCutoff,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_string).collect()
}

/// Token ↔ id map. Ids `0..4` are the specials `UNK, BOS, EOS, PAD`; the rest
/// are sorted by descending frequency, ties broken by first occurrence.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    entries: Vec<(String, u64)>,
    cutoff: usize,
    index: HashMap<String, usize>,
}

/// Two vocabularies are equal when they map the same tokens to the same ids
/// with the same counts; the requested cutoff is not part of the identity.
impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Eq for Vocabulary {}

impl Vocabulary {
    /// Builds a vocabulary holding the `cutoff` most frequent tokens.
    pub fn build<I, S>(sentences: I, cutoff: usize) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[String]>,
    {
        if cutoff == 0 {
            return Err(CorpusError::ZeroCutoff);
        }
        // (count, first occurrence)
        let mut counts: HashMap<&str, (u64, usize)> = HashMap::new();
        let sentences: Vec<S> = sentences.into_iter().collect();
        let mut order = 0usize;
        for s in &sentences {
            for tok in s.as_ref() {
                let e = counts.entry(tok.as_str()).or_insert((0, order));
                e.0 += 1;
                order += 1;
            }
        }
        let mut ranked: Vec<(&str, u64, usize)> =
            counts.into_iter().map(|(t, (c, f))| (t, c, f)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        ranked.truncate(cutoff);
        let entries = ranked
            .into_iter()
            .map(|(t, c, _)| (t.to_string(), c))
            .collect();
        Ok(Self::from_entries(entries, cutoff))
    }

    /// Non-special entries in id order; specials are implicit.
    pub fn from_entries(entries: Vec<(String, u64)>, cutoff: usize) -> Self {
        let mut all: Vec<(String, u64)> =
            SPECIAL_TOKENS.iter().map(|s| (s.to_string(), 0)).collect();
        all.extend(entries);
        let mut v = Vocabulary {
            entries: all,
            cutoff,
            index: HashMap::new(),
        };
        v.reindex();
        v
    }

    fn reindex(&mut self) {
        self.index = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.len() <= NUM_SPECIALS
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.entries.get(id).map(|(t, _)| t.as_str())
    }

    pub fn frequency(&self, id: usize) -> Option<u64> {
        self.entries.get(id).map(|(_, c)| *c)
    }

    /// Non-special `(token, frequency)` pairs in id order.
    pub fn entries(&self) -> &[(String, u64)] {
        &self.entries[NUM_SPECIALS..]
    }

    /// Maps tokens to ids; unknown tokens become [`UNK`].
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(UNK))
            .collect()
    }

    /// Inverse of [`encode`](Self::encode); ids out of range render as UNK.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(SPECIAL_TOKENS[UNK]).to_string())
            .collect()
    }

    /// Serializes as `token<TAB>frequency` lines in id order; the first four
    /// lines are the specials.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (tok, freq) in &self.entries {
            writeln!(w, "{tok}\t{freq}")?;
        }
        Ok(())
    }

    /// Reads the format written by [`write_to`](Self::write_to). The cutoff
    /// is not stored and is taken to be the number of non-special entries.
    pub fn read_from<R: BufRead>(r: R) -> Result<Self, CorpusError> {
        let bad = |line: usize, reason: &str| CorpusError::BadVocabFile {
            line,
            reason: reason.to_string(),
        };
        let mut entries = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| bad(i + 1, &e.to_string()))?;
            let (tok, freq) = line
                .split_once('\t')
                .ok_or_else(|| bad(i + 1, "missing tab separator"))?;
            let freq: u64 = freq.parse().map_err(|_| bad(i + 1, "bad frequency"))?;
            entries.push((tok.to_string(), freq));
        }
        if entries.len() < NUM_SPECIALS {
            return Err(bad(entries.len() + 1, "missing special tokens"));
        }
        for (i, (tok, _)) in entries.iter().take(NUM_SPECIALS).enumerate() {
            if tok != SPECIAL_TOKENS[i] {
                return Err(bad(i + 1, "special tokens out of order"));
            }
        }
        let rest = entries.split_off(NUM_SPECIALS);
        let cutoff = rest.len().max(1);
        Ok(Self::from_entries(rest, cutoff))
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let f = fs::File::create(path).map_err(io_err(path))?;
        let mut w = io::BufWriter::new(f);
        self.write_to(&mut w).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let f = fs::File::open(path).map_err(io_err(path))?;
        Self::read_from(BufReader::new(f))
    }
}

/// One training example as id sequences (no BOS/EOS).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentencePair {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

/// Tokenized parallel text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParallelCorpus {
    pub source: Vec<Vec<String>>,
    pub target: Vec<Vec<String>>,
}

impl ParallelCorpus {
    pub fn new(source: Vec<Vec<String>>, target: Vec<Vec<String>>) -> Result<Self, CorpusError> {
        if source.len() != target.len() {
            return Err(CorpusError::LineMismatch {
                source_lines: source.len(),
                target_lines: target.len(),
            });
        }
        Ok(ParallelCorpus { source, target })
    }

    pub fn from_lines<S: AsRef<str>>(source: &[S], target: &[S]) -> Result<Self, CorpusError> {
        Self::new(
            source.iter().map(|l| tokenize(l.as_ref())).collect(),
            target.iter().map(|l| tokenize(l.as_ref())).collect(),
        )
    }

    pub fn load(source: &Path, target: &Path) -> Result<Self, CorpusError> {
        let src = read_lines(source)?;
        let tgt = read_lines(target)?;
        Self::from_lines(&src, &tgt)
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn extend(&mut self, other: ParallelCorpus) {
        self.source.extend(other.source);
        self.target.extend(other.target);
    }

    /// Encodes every pair, skipping pairs with an empty side or a side longer
    /// than `max_len`. Returns the pairs and the number skipped.
    pub fn encode(
        &self,
        src_vocab: &Vocabulary,
        tgt_vocab: &Vocabulary,
        max_len: usize,
    ) -> (Vec<SentencePair>, usize) {
        let mut skipped = 0;
        let pairs = self
            .source
            .iter()
            .zip(&self.target)
            .filter_map(|(s, t)| {
                if s.is_empty() || t.is_empty() || s.len() > max_len || t.len() > max_len {
                    skipped += 1;
                    return None;
                }
                Some(SentencePair {
                    source: src_vocab.encode(s),
                    target: tgt_vocab.encode(t),
                })
            })
            .collect();
        if skipped > 0 {
            log::warn!("skipped {skipped} sentence pairs that are empty or longer than {max_len}");
        }
        (pairs, skipped)
    }
}

pub fn read_lines(path: &Path) -> Result<Vec<String>, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text.lines().map(str::to_string).collect())
}

/// A padded mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub pairs: Vec<SentencePair>,
    pub source_pad_mask: Vec<Vec<bool>>,
    pub target_pad_mask: Vec<Vec<bool>>,
    pub padded_len_src: usize,
    pub padded_len_tgt: usize,
}

impl Batch {
    pub fn new(pairs: Vec<SentencePair>) -> Self {
        let padded_len_src = pairs.iter().map(|p| p.source.len()).max().unwrap_or(0);
        let padded_len_tgt = pairs.iter().map(|p| p.target.len()).max().unwrap_or(0);
        let mask = |len: usize, padded: usize| (0..padded).map(|i| i < len).collect();
        Batch {
            source_pad_mask: pairs
                .iter()
                .map(|p| mask(p.source.len(), padded_len_src))
                .collect(),
            target_pad_mask: pairs
                .iter()
                .map(|p| mask(p.target.len(), padded_len_tgt))
                .collect(),
            pairs,
            padded_len_src,
            padded_len_tgt,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Source ids of row `i` padded with [`PAD`].
    pub fn padded_source(&self, i: usize) -> Vec<usize> {
        let mut ids = self.pairs[i].source.clone();
        ids.resize(self.padded_len_src, PAD);
        ids
    }
}

/// The shuffle permutation for `(seed, epoch)`.
pub fn epoch_permutation(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    order
}

/// Shuffles `pairs` with the `(seed, epoch)` permutation and cuts batches.
pub fn make_batches(
    pairs: &[SentencePair],
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Batch>, CorpusError> {
    if batch_size == 0 {
        return Err(CorpusError::ZeroBatchSize);
    }
    let order = epoch_permutation(pairs.len(), seed, epoch);
    Ok(order
        .chunks(batch_size)
        .map(|chunk| Batch::new(chunk.iter().map(|&i| pairs[i].clone()).collect()))
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub running_words_src: usize,
    pub running_words_tgt: usize,
    pub vocab_size_src: usize,
    pub vocab_size_tgt: usize,
}

impl CorpusStats {
    /// Renders the statistics as a two-column table.
    pub fn to_table(&self, src_label: &str, tgt_label: &str) -> String {
        format!(
            "{:<14}{:>12}{:>12}\n{:<14}{:>24}\n{:<14}{:>12}{:>12}\n{:<14}{:>12}{:>12}\n",
            "",
            src_label,
            tgt_label,
            "Sentences",
            self.sentences,
            "Running Words",
            self.running_words_src,
            self.running_words_tgt,
            "Vocabulary",
            self.vocab_size_src,
            self.vocab_size_tgt,
        )
    }
}

pub fn corpus_stats(corpus: &ParallelCorpus) -> CorpusStats {
    let distinct = |side: &[Vec<String>]| {
        side.iter()
            .flatten()
            .map(String::as_str)
            .collect::<std::collections::HashSet<_>>()
            .len()
    };
    CorpusStats {
        sentences: corpus.len(),
        running_words_src: corpus.source.iter().map(Vec::len).sum(),
        running_words_tgt: corpus.target.iter().map(Vec::len).sum(),
        vocab_size_src: distinct(&corpus.source),
        vocab_size_tgt: distinct(&corpus.target),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| tokenize(l)).collect()
    }

    /// Counts by brute force and sorts by (-count, first position).
    fn brute_force_top(lines: &[&str], n: usize) -> Vec<(String, u64)> {
        let all: Vec<&str> = lines.iter().flat_map(|l| l.split_whitespace()).collect();
        let mut seen: Vec<&str> = Vec::new();
        for t in &all {
            if !seen.contains(t) {
                seen.push(t);
            }
        }
        let mut ranked: Vec<(String, u64, usize)> = seen
            .iter()
            .map(|t| {
                let c = all.iter().filter(|x| *x == t).count() as u64;
                let first = all.iter().position(|x| x == t).unwrap();
                (t.to_string(), c, first)
            })
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        ranked.into_iter().take(n).map(|(t, c, _)| (t, c)).collect()
    }

    #[test]
    fn top_n_with_first_occurrence_tie_break() {
        let lines = ["a b a", "a c"];
        let v = Vocabulary::build(toks(&lines), 2).unwrap();
        assert_eq!(v.entries(), brute_force_top(&lines, 2).as_slice());
        assert_eq!(v.entries(), &[("a".to_string(), 3), ("b".to_string(), 1)]);
        assert_eq!(v.len(), 6);
        assert_eq!(v.id("a"), Some(4));
        assert_eq!(v.id("c"), None);
    }

    #[test]
    fn cutoff_above_distinct_count_keeps_everything() {
        let v = Vocabulary::build(toks(&["x y"]), 10).unwrap();
        assert_eq!(v.len(), 6);
        assert!(v.id("x").is_some() && v.id("y").is_some());
    }

    #[test]
    fn empty_corpus_gives_specials_only() {
        let v = Vocabulary::build(Vec::<Vec<String>>::new(), 5).unwrap();
        assert_eq!(v.len(), NUM_SPECIALS);
        for (i, s) in SPECIAL_TOKENS.iter().enumerate() {
            assert_eq!(v.id(s), Some(i));
        }
    }

    #[test]
    fn zero_cutoff_is_rejected() {
        assert!(matches!(
            Vocabulary::build(toks(&["a"]), 0),
            Err(CorpusError::ZeroCutoff)
        ));
    }

    #[test]
    fn encode_maps_unknowns_to_unk() {
        let v = Vocabulary::build(toks(&["a b"]), 5).unwrap();
        let a = v.id("a").unwrap();
        assert_eq!(v.encode(&["a", "c"]), vec![a, UNK]);
        assert_eq!(v.encode::<&str>(&[]), Vec::<usize>::new());
        assert_eq!(v.encode(&["a", "a"]), vec![a, a]);
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let v = Vocabulary::build(toks(&["der die das das", "die die"]), 2).unwrap();
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("<unk>\t0\n<s>\t0\n</s>\t0\n<pad>\t0\ndie\t3\n"));
        let back = Vocabulary::read_from(io::Cursor::new(buf)).unwrap();
        assert_eq!(back.entries(), v.entries());
        assert_eq!(back.id("die"), v.id("die"));
    }

    #[test]
    fn malformed_vocabulary_file_is_rejected() {
        let text = "<s>\t0\n<unk>\t0\n</s>\t0\n<pad>\t0\n";
        assert!(Vocabulary::read_from(io::Cursor::new(text)).is_err());
        let text = "<unk>\t0\n<s>\t0\n</s>\t0\n<pad>\t0\nfoo 3\n";
        assert!(Vocabulary::read_from(io::Cursor::new(text)).is_err());
    }

    fn numbered_pairs(n: usize) -> Vec<SentencePair> {
        (0..n)
            .map(|i| SentencePair {
                source: vec![i + 4],
                target: vec![i + 4, 5],
            })
            .collect()
    }

    #[test]
    fn batch_sizes_for_130_pairs() {
        let batches = make_batches(&numbered_pairs(130), 64, 1, 1).unwrap();
        let sizes: Vec<usize> = batches.iter().map(Batch::len).collect();
        assert_eq!(sizes, vec![64, 64, 2]);
    }

    #[test]
    fn shuffle_is_deterministic_per_seed_and_epoch() {
        let pairs = numbered_pairs(20);
        let a = make_batches(&pairs, 4, 9, 3).unwrap();
        let b = make_batches(&pairs, 4, 9, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_epochs_give_different_permutations() {
        // oracle: the permutations themselves, straight from the seeded shuffle
        let p1 = epoch_permutation(10, 42, 1);
        let p2 = epoch_permutation(10, 42, 2);
        assert_ne!(p1, p2);
        let pairs = numbered_pairs(10);
        let b1 = make_batches(&pairs, 10, 42, 1).unwrap();
        let order1: Vec<usize> = b1[0].pairs.iter().map(|p| p.source[0] - 4).collect();
        assert_eq!(order1, p1);
    }

    #[test]
    fn empty_pairs_give_no_batches() {
        assert!(make_batches(&[], 8, 0, 0).unwrap().is_empty());
        assert!(matches!(
            make_batches(&numbered_pairs(3), 0, 0, 0),
            Err(CorpusError::ZeroBatchSize)
        ));
    }

    #[test]
    fn pad_masks_mark_real_tokens() {
        let b = Batch::new(vec![
            SentencePair {
                source: vec![4, 5, 6],
                target: vec![4],
            },
            SentencePair {
                source: vec![4],
                target: vec![4, 5],
            },
        ]);
        assert_eq!(b.padded_len_src, 3);
        assert_eq!(b.source_pad_mask[1], vec![true, false, false]);
        assert_eq!(b.target_pad_mask[0], vec![true, false]);
        assert_eq!(b.padded_source(1), vec![4, PAD, PAD]);
    }

    #[test]
    fn stats_hand_count() {
        let c = ParallelCorpus::from_lines(&["a b"], &["c"]).unwrap();
        assert_eq!(
            corpus_stats(&c),
            CorpusStats {
                sentences: 1,
                running_words_src: 2,
                running_words_tgt: 1,
                vocab_size_src: 2,
                vocab_size_tgt: 1,
            }
        );
        assert_eq!(
            corpus_stats(&ParallelCorpus::default()),
            CorpusStats::default()
        );
    }

    #[test]
    fn stats_vocabulary_counts_distinct_tokens() {
        let c = ParallelCorpus::from_lines(&["a a b", "b c"], &["x", "x y"]).unwrap();
        let s = corpus_stats(&c);
        assert_eq!((s.vocab_size_src, s.vocab_size_tgt), (3, 2));
    }

    #[test]
    fn misaligned_corpus_is_an_error() {
        assert!(matches!(
            ParallelCorpus::from_lines(&["a", "b"], &["c"]),
            Err(CorpusError::LineMismatch {
                source_lines: 2,
                target_lines: 1
            })
        ));
    }

    #[test]
    fn overlong_pairs_are_skipped() {
        let c = ParallelCorpus::from_lines(&["a b c", "a", ""], &["x", "y z w", "q"]).unwrap();
        let v = Vocabulary::build(c.source.iter(), 10).unwrap();
        let (pairs, skipped) = c.encode(&v, &v, 2);
        assert_eq!(pairs.len(), 0);
        assert_eq!(skipped, 3);
    }

    proptest! {
        #[test]
        fn round_trip_when_in_vocabulary(words in proptest::collection::vec("[a-e]{1,3}", 0..20)) {
            let v = Vocabulary::build([words.clone()], 1000).unwrap();
            prop_assert_eq!(v.decode(&v.encode(&words)), words);
        }

        #[test]
        fn batches_partition_the_pairs(n in 0usize..200, bs in 1usize..70, seed: u64, epoch in 0u64..5) {
            let pairs = numbered_pairs(n);
            let batches = make_batches(&pairs, bs, seed, epoch).unwrap();
            let mut seen: Vec<SentencePair> = batches.into_iter().flat_map(|b| b.pairs).collect();
            seen.sort_by_key(|p| p.source[0]);
            prop_assert_eq!(seen, pairs);
        }

        #[test]
        fn vocabulary_build_is_deterministic(lines in proptest::collection::vec("[a-f ]{0,12}", 0..10), n in 1usize..8) {
            let t: Vec<Vec<String>> = lines.iter().map(|l| tokenize(l)).collect();
            let a = Vocabulary::build(t.iter(), n).unwrap();
            let b = Vocabulary::build(t.iter(), n).unwrap();
            prop_assert!(a.len() <= n + NUM_SPECIALS);
            prop_assert_eq!(a, b);
        }
    }
}
