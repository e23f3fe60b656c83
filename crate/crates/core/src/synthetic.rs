//! Synthetic two-domain parallel data for adaptation experiments.
//!
//! Sentences are sequences of chunks, each a function word plus a content
//! word, translated word by word. The general domain keeps the function word
//! first. The specialised domain expresses a fraction of the content
//! concepts with their own terms (rare in the general domain), puts the
//! function word after a term, and draws from a narrower set of the
//! remaining concepts.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub function_words: usize,
    pub concepts: usize,
    /// Fraction of concepts that get a domain-specific term.
    pub swap_fraction: f64,
    /// Probability that a general sentence uses a specialised term for a
    /// swapped concept.
    pub term_leak: f64,
    pub min_chunks: usize,
    pub max_chunks: usize,
    /// Zipf exponent over concept frequency.
    pub zipf: f64,
    pub reorder: Reorder,
    /// Reordered chunks also put the source function word last.
    pub reorder_source: bool,
    /// Fraction of the unswapped concepts that occur in the specialised
    /// domain at all.
    pub special_coverage: f64,
}

/// Which chunks of a specialised sentence put the function word last.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reorder {
    AllChunks,
    /// Only chunks whose content word is a domain term.
    TermChunks,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 7,
            function_words: 8,
            concepts: 120,
            swap_fraction: 0.3,
            term_leak: 0.02,
            min_chunks: 2,
            max_chunks: 4,
            zipf: 0.8,
            reorder: Reorder::TermChunks,
            reorder_source: true,
            special_coverage: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    General,
    Special,
}

/// Word-level lexicons of both sides.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pub src_function: Vec<String>,
    pub tgt_function: Vec<String>,
    pub src_general: Vec<String>,
    pub tgt_general: Vec<String>,
    /// `Some` for swapped concepts.
    pub src_term: Vec<Option<String>>,
    pub tgt_term: Vec<Option<String>>,
    weights: WeightedIndex<f64>,
    special_weights: WeightedIndex<f64>,
}

pub type Pair = (String, String);

/// Distinct pronounceable words; `prefix` keeps the two sides disjoint.
fn words(rng: &mut ChaCha8Rng, prefix: &str, n: usize, taken: &mut std::collections::HashSet<String>) -> Vec<String> {
    const ONSET: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
    const NUCLEUS: [&str; 5] = ["a", "e", "i", "o", "u"];
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.gen_range(2..=3);
        let mut w = prefix.to_string();
        for _ in 0..syllables {
            w.push_str(ONSET.choose(rng).unwrap());
            w.push_str(NUCLEUS.choose(rng).unwrap());
        }
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

impl Lexicon {
    pub fn generate(cfg: &SyntheticConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut taken = std::collections::HashSet::new();
        let src_function = words(&mut rng, "", cfg.function_words, &mut taken);
        let tgt_function = words(&mut rng, "x", cfg.function_words, &mut taken);
        let src_general = words(&mut rng, "", cfg.concepts, &mut taken);
        let tgt_general = words(&mut rng, "x", cfg.concepts, &mut taken);
        let n_swap = (cfg.concepts as f64 * cfg.swap_fraction).round() as usize;
        let mut swapped: Vec<usize> = (0..cfg.concepts).collect();
        swapped.shuffle(&mut rng);
        swapped.truncate(n_swap);
        let src_terms = words(&mut rng, "", n_swap, &mut taken);
        let tgt_terms = words(&mut rng, "x", n_swap, &mut taken);
        let mut src_term = vec![None; cfg.concepts];
        let mut tgt_term = vec![None; cfg.concepts];
        for (k, &c) in swapped.iter().enumerate() {
            src_term[c] = Some(src_terms[k].clone());
            tgt_term[c] = Some(tgt_terms[k].clone());
        }
        let mut general: Vec<usize> = (0..cfg.concepts).filter(|&c| src_term[c].is_none()).collect();
        general.shuffle(&mut rng);
        let keep = ((general.len() as f64 * cfg.special_coverage).round() as usize).min(general.len());
        let mut in_special: Vec<bool> = src_term.iter().map(Option::is_some).collect();
        for &c in &general[..keep] {
            in_special[c] = true;
        }
        let zipf: Vec<f64> = (1..=cfg.concepts).map(|r| (r as f64).powf(-cfg.zipf)).collect();
        let special = zipf.iter().zip(&in_special).map(|(w, &k)| if k { *w } else { 0.0 });
        Lexicon {
            src_function,
            tgt_function,
            src_general,
            tgt_general,
            src_term,
            tgt_term,
            // an empty specialised set falls back to every concept
            special_weights: WeightedIndex::new(special)
                .unwrap_or_else(|_| WeightedIndex::new(&zipf).expect("positive weights")),
            weights: WeightedIndex::new(&zipf).expect("positive weights"),
        }
    }

    fn sentence<R: Rng>(&self, cfg: &SyntheticConfig, domain: Domain, rng: &mut R) -> Pair {
        let chunks = rng.gen_range(cfg.min_chunks..=cfg.max_chunks);
        let mut src = Vec::with_capacity(2 * chunks);
        let mut tgt = Vec::with_capacity(2 * chunks);
        for _ in 0..chunks {
            let f = rng.gen_range(0..self.src_function.len());
            let c = match domain {
                Domain::General => self.weights.sample(rng),
                Domain::Special => self.special_weights.sample(rng),
            };
            let use_term = self.src_term[c].is_some()
                && match domain {
                    Domain::Special => true,
                    Domain::General => rng.gen_bool(cfg.term_leak),
                };
            let (sc, tc) = if use_term {
                (self.src_term[c].as_deref().unwrap(), self.tgt_term[c].as_deref().unwrap())
            } else {
                (self.src_general[c].as_str(), self.tgt_general[c].as_str())
            };
            let function_last = domain == Domain::Special
                && (cfg.reorder == Reorder::AllChunks || use_term);
            if function_last && cfg.reorder_source {
                src.push(sc);
                src.push(self.src_function[f].as_str());
            } else {
                src.push(self.src_function[f].as_str());
                src.push(sc);
            }
            if function_last {
                tgt.push(tc);
                tgt.push(self.tgt_function[f].as_str());
            } else {
                tgt.push(self.tgt_function[f].as_str());
                tgt.push(tc);
            }
        }
        (src.join(" "), tgt.join(" "))
    }
}

/// Training and test splits for both domains.
#[derive(Debug, Clone)]
pub struct TwoDomainData {
    pub lexicon: Lexicon,
    pub general_train: Vec<Pair>,
    pub special_train: Vec<Pair>,
    pub general_test: Vec<Pair>,
    pub special_test: Vec<Pair>,
}

/// Draws all four splits from one seeded stream. Test sentences may repeat
/// training sentences, as short synthetic sentences collide.
pub fn two_domain(
    cfg: &SyntheticConfig,
    general_train: usize,
    special_train: usize,
    test_size: usize,
) -> TwoDomainData {
    let lexicon = Lexicon::generate(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut draw = |domain, n| -> Vec<Pair> {
        (0..n).map(|_| lexicon.sentence(cfg, domain, &mut rng)).collect()
    };
    let general_train_v = draw(Domain::General, general_train);
    let special_train_v = draw(Domain::Special, special_train);
    let general_test = draw(Domain::General, test_size);
    let special_test = draw(Domain::Special, test_size);
    TwoDomainData {
        general_train: general_train_v,
        special_train: special_train_v,
        general_test,
        special_test,
        lexicon,
    }
}
