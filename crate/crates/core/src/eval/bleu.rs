use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{check_lengths, EvalError};

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics for corpus BLEU; they add across sentences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    pub fn sentence<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> Self {
        let mut st = BleuStats {
            hyp_len: hyp.len() as u64,
            ref_len: reference.len() as u64,
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let ref_counts = ngram_counts(reference, n);
            let hyp_counts = ngram_counts(hyp, n);
            st.totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
            st.matches[n - 1] = hyp_counts
                .iter()
                .map(|(g, c)| (*c).min(ref_counts.get(g).copied().unwrap_or(0)))
                .sum();
        }
        st
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    pub fn score(&self, smoothing: bool) -> BleuScore {
        let mut precisions = [0.0; MAX_ORDER];
        for n in 0..MAX_ORDER {
            let (m, t) = (self.matches[n] as f64, self.totals[n] as f64);
            precisions[n] = if smoothing && n > 0 {
                (m + 1.0) / (t + 1.0)
            } else if t > 0.0 {
                m / t
            } else {
                0.0
            };
        }
        let brevity_penalty = if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        };
        let bleu = if precisions.iter().any(|&p| p == 0.0) {
            0.0
        } else {
            let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
            100.0 * brevity_penalty * log_mean.exp()
        };
        BleuScore {
            bleu: bleu.min(100.0),
            precisions,
            brevity_penalty,
            hyp_len: self.hyp_len,
            ref_len: self.ref_len,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    /// Percentage in `[0, 100]`.
    pub bleu: f64,
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: u64,
    pub ref_len: u64,
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

/// Case-sensitive corpus BLEU-4 against a single reference per line.
/// `smoothing` adds one to numerator and denominator of `p_2..p_4`.
pub fn bleu<S: AsRef<str>>(
    hyps: &[Vec<S>],
    refs: &[Vec<S>],
    smoothing: bool,
) -> Result<BleuScore, EvalError> {
    Ok(bleu_stats(hyps, refs)?.score(smoothing))
}

pub fn bleu_stats<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>]) -> Result<BleuStats, EvalError> {
    check_lengths(hyps.len(), refs.len())?;
    let mut total = BleuStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        total.add(&BleuStats::sentence(h, r));
    }
    Ok(total)
}
