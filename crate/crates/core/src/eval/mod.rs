//! Case-sensitive corpus BLEU and TER, the combined `(TER - BLEU) / 2`
//! curve metric, and learning curves over checkpoint series.

mod bleu;
mod curve;
mod ter;

pub use bleu::{bleu, bleu_stats, BleuScore, BleuStats, MAX_ORDER};
pub use curve::{
    learning_curve, read_curve_csv, write_curve_csv, CurveError, CurveRow, TestSet, CURVE_HEADER,
};
pub use ter::{
    edit_distance, exhaustive_edits, sentence_edits, ter, EditCounts, TerScore, MAX_SHIFT_DIST,
    MAX_SHIFT_SIZE,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("{hyps} hypotheses but {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("no sentences to score")]
    Empty,
    #[error("reference corpus has no words")]
    EmptyReference,
}

fn check_lengths(hyps: usize, refs: usize) -> Result<(), EvalError> {
    if hyps != refs {
        return Err(EvalError::LengthMismatch { hyps, refs });
    }
    if hyps == 0 {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// `(ter - bleu) / 2`; lower is better.
pub fn combined(bleu: f64, ter: f64) -> f64 {
    (ter - bleu) / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub bleu: BleuScore,
    pub ter: TerScore,
    pub combined: f64,
}

impl ScoreReport {
    /// One-line summary with scores to one decimal.
    pub fn summary(&self) -> String {
        format!(
            "BLEU {:.1} TER {:.1} (TER-BLEU)/2 {:.1} BP {:.3} ratio {}/{}",
            self.bleu.bleu,
            self.ter.ter,
            self.combined,
            self.bleu.brevity_penalty,
            self.bleu.hyp_len,
            self.bleu.ref_len
        )
    }
}

pub fn score<S: AsRef<str>>(
    hyps: &[Vec<S>],
    refs: &[Vec<S>],
    smoothing: bool,
) -> Result<ScoreReport, EvalError> {
    let b = bleu(hyps, refs, smoothing)?;
    let t = ter(hyps, refs)?;
    Ok(ScoreReport {
        combined: combined(b.bleu, t.ter),
        bleu: b,
        ter: t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn combined_matches_reported_rows() {
        assert!((combined(24.8, 56.0) - 15.6).abs() < 1e-9);
        assert!((combined(33.6, 46.3) - 6.35).abs() < 1e-9);
        assert_eq!(combined(100.0, 0.0), -50.0);
    }

    #[test]
    fn report_is_consistent() {
        let h = vec![vec!["a", "b", "c", "d"]];
        let r = vec![vec!["a", "b", "c", "e"]];
        let s = score(&h, &r, true).unwrap();
        assert!((s.combined - (s.ter.ter - s.bleu.bleu) / 2.0).abs() < 1e-9);
        assert!(s.summary().starts_with("BLEU "));
    }

    proptest! {
        #[test]
        fn combined_is_linear(b in 0.0f64..100.0, t in 0.0f64..200.0) {
            prop_assert!((combined(b + 2.0, t) - (combined(b, t) - 1.0)).abs() < 1e-9);
        }
    }
}
