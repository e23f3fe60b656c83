use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{read_lines, tokenize, CorpusError};
use crate::decoder::{translate_corpus, DecodeError, TranslateOptions};
use crate::trainer::Checkpoint;

use super::{combined, score, EvalError};

pub const CURVE_HEADER: &str = "epoch,testset,bleu,ter,combined";

#[derive(Debug, Error)]
pub enum CurveError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("test set {name}: {src} source lines but {tgt} reference lines")]
    TestSetMismatch { name: String, src: usize, tgt: usize },
    #[error("curve csv line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Source sentences with one reference each.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub name: String,
    pub sources: Vec<String>,
    pub references: Vec<Vec<String>>,
}

impl TestSet {
    pub fn new(name: &str, sources: Vec<String>, references: &[String]) -> Result<Self, CurveError> {
        if sources.len() != references.len() {
            return Err(CurveError::TestSetMismatch {
                name: name.to_string(),
                src: sources.len(),
                tgt: references.len(),
            });
        }
        Ok(TestSet {
            name: name.to_string(),
            sources,
            references: references.iter().map(|r| tokenize(r)).collect(),
        })
    }

    /// Reads `PREFIX.src` and `PREFIX.tgt`; the name is the prefix's file name.
    pub fn load(prefix: &Path) -> Result<Self, CurveError> {
        let with_ext = |ext: &str| {
            let mut p = prefix.as_os_str().to_os_string();
            p.push(ext);
            std::path::PathBuf::from(p)
        };
        let name = prefix
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| prefix.display().to_string());
        let src = read_lines(&with_ext(".src"))?;
        let tgt = read_lines(&with_ext(".tgt"))?;
        Self::new(&name, src, &tgt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub testset: String,
    pub bleu: f64,
    pub ter: f64,
    pub combined: f64,
}

/// Scores the baseline (epoch 0) and every checkpoint of `series` on every
/// test set. With `ensemble`, each epoch decodes with the baseline and that
/// epoch's checkpoint together. Rows are grouped by test set in input order,
/// then sorted by epoch.
pub fn learning_curve(
    baseline: &Checkpoint,
    series: &[Checkpoint],
    tests: &[TestSet],
    ensemble: bool,
    opts: &TranslateOptions,
    smoothing: bool,
) -> Result<Vec<CurveRow>, CurveError> {
    let mut order: Vec<&Checkpoint> = series.iter().collect();
    order.sort_by_key(|c| c.epoch);
    let mut rows = Vec::new();
    for test in tests {
        let mut eval_at = |epoch: usize, models: &[Checkpoint]| -> Result<(), CurveError> {
            let out = translate_corpus(models, &test.sources, opts, None)?;
            let hyps: Vec<Vec<String>> = out.into_iter().map(|t| t.words).collect();
            let s = score(&hyps, &test.references, smoothing)?;
            rows.push(CurveRow {
                epoch,
                testset: test.name.clone(),
                bleu: s.bleu.bleu,
                ter: s.ter.ter,
                combined: combined(s.bleu.bleu, s.ter.ter),
            });
            Ok(())
        };
        eval_at(0, std::slice::from_ref(baseline))?;
        for ckpt in &order {
            if ensemble {
                eval_at(ckpt.epoch, &[baseline.clone(), (*ckpt).clone()])?;
            } else {
                eval_at(ckpt.epoch, std::slice::from_ref(*ckpt))?;
            }
        }
    }
    Ok(rows)
}

pub fn write_curve_csv<W: Write>(rows: &[CurveRow], mut w: W) -> io::Result<()> {
    writeln!(w, "{CURVE_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.epoch, r.testset, r.bleu, r.ter, r.combined)?;
    }
    Ok(())
}

pub fn read_curve_csv<R: BufRead>(r: R) -> Result<Vec<CurveRow>, CurveError> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let err = |reason: &str| CurveError::Parse {
            line: i + 1,
            reason: reason.to_string(),
        };
        if i == 0 {
            if line != CURVE_HEADER {
                return Err(err("unexpected header"));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(err("expected 5 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err("bad number"));
        rows.push(CurveRow {
            epoch: f[0].parse().map_err(|_| err("bad epoch"))?,
            testset: f[1].to_string(),
            bleu: num(f[2])?,
            ter: num(f[3])?,
            combined: num(f[4])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_losslessly() {
        let rows = vec![
            CurveRow {
                epoch: 0,
                testset: "indom".into(),
                bleu: 12.345678901234567,
                ter: 70.0 / 3.0,
                combined: combined(12.345678901234567, 70.0 / 3.0),
            },
            CurveRow {
                epoch: 1,
                testset: "indom".into(),
                bleu: 0.1,
                ter: 100.0,
                combined: 49.95,
            },
        ];
        let mut buf = Vec::new();
        write_curve_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("epoch,testset,bleu,ter,combined\n"));
        assert_eq!(read_curve_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn bad_header_is_rejected() {
        assert!(read_curve_csv(&b"epoch,bleu\n"[..]).is_err());
    }

    #[test]
    fn mismatched_test_set_is_rejected() {
        assert!(TestSet::new("x", vec!["a".into()], &[]).is_err());
    }
}
