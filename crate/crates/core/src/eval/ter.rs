use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{check_lengths, EvalError};

/// Longest span considered for a shift.
pub const MAX_SHIFT_SIZE: usize = 10;
/// Largest distance between a span's hypothesis and reference positions.
pub const MAX_SHIFT_DIST: usize = 50;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    /// Hypothesis words with no reference counterpart.
    pub insertions: u64,
    /// Reference words missing from the hypothesis.
    pub deletions: u64,
    pub substitutions: u64,
    pub shifts: u64,
}

impl EditCounts {
    pub fn total(&self) -> u64 {
        self.insertions + self.deletions + self.substitutions + self.shifts
    }

    pub fn add(&mut self, o: &EditCounts) {
        self.insertions += o.insertions;
        self.deletions += o.deletions;
        self.substitutions += o.substitutions;
        self.shifts += o.shifts;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerScore {
    /// Percentage; can exceed 100.
    pub ter: f64,
    pub edits: EditCounts,
    pub ref_words: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Match,
    Sub,
    /// Consumes a hypothesis word only.
    Ins,
    /// Consumes a reference word only.
    Del,
}

/// Levenshtein distance with a trace. Ties prefer the diagonal, then
/// consuming a hypothesis word.
fn edit_trace<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> (usize, Vec<Op>) {
    let (n, m) = (hyp.len(), reference.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let same = hyp[i - 1].as_ref() == reference[j - 1].as_ref();
            let diag = d[(i - 1) * w + j - 1] + usize::from(!same);
            let ins = d[(i - 1) * w + j] + 1;
            let del = d[i * w + j - 1] + 1;
            d[i * w + j] = diag.min(ins).min(del);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let cur = d[i * w + j];
        if i > 0 && j > 0 {
            let same = hyp[i - 1].as_ref() == reference[j - 1].as_ref();
            if d[(i - 1) * w + j - 1] + usize::from(!same) == cur {
                ops.push(if same { Op::Match } else { Op::Sub });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == cur {
            ops.push(Op::Ins);
            i -= 1;
        } else {
            ops.push(Op::Del);
            j -= 1;
        }
    }
    ops.reverse();
    (d[n * w + m], ops)
}

/// Plain word-level Levenshtein distance.
pub fn edit_distance<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> usize {
    edit_trace(hyp, reference).0
}

struct Alignment {
    /// For each reference position, the hypothesis position it aligns to
    /// (or the last hypothesis position before it, `-1` for none).
    align: Vec<isize>,
    hyp_err: Vec<bool>,
    ref_err: Vec<bool>,
}

fn alignment(ops: &[Op], n_hyp: usize, n_ref: usize) -> Alignment {
    let (mut ph, mut pr) = (-1isize, -1isize);
    let mut a = Alignment {
        align: vec![-1; n_ref],
        hyp_err: Vec::with_capacity(n_hyp),
        ref_err: Vec::with_capacity(n_ref),
    };
    for op in ops {
        match op {
            Op::Match | Op::Sub => {
                ph += 1;
                pr += 1;
                a.align[pr as usize] = ph;
                let err = *op == Op::Sub;
                a.hyp_err.push(err);
                a.ref_err.push(err);
            }
            Op::Ins => {
                ph += 1;
                a.hyp_err.push(true);
            }
            Op::Del => {
                pr += 1;
                a.align[pr as usize] = ph;
                a.ref_err.push(true);
            }
        }
    }
    a
}

/// Moves `words[start..start + len]` so that it begins before the word that
/// was at index `target`.
fn perform_shift<S: Clone>(words: &[S], start: usize, len: usize, target: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(words.len());
    if target < start {
        out.extend_from_slice(&words[..target]);
        out.extend_from_slice(&words[start..start + len]);
        out.extend_from_slice(&words[target..start]);
        out.extend_from_slice(&words[start + len..]);
    } else if target > start + len {
        out.extend_from_slice(&words[..start]);
        out.extend_from_slice(&words[start + len..target]);
        out.extend_from_slice(&words[start..start + len]);
        out.extend_from_slice(&words[target..]);
    } else {
        let end = (len + target).min(words.len());
        out.extend_from_slice(&words[..start]);
        out.extend_from_slice(&words[start + len..end]);
        out.extend_from_slice(&words[start..start + len]);
        out.extend_from_slice(&words[end..]);
    }
    out
}

/// The best single shift of a span of `hyp` that exactly matches a
/// reference span, if it lowers the edit distance. Returns the gain and the
/// shifted hypothesis.
fn best_shift<'a>(hyp: &[&'a str], reference: &[&'a str]) -> Option<(usize, Vec<&'a str>)> {
    let (pre, ops) = edit_trace(hyp, reference);
    let al = alignment(&ops, hyp.len(), reference.len());
    // (gain, len, -start_h, -idx) compared lexicographically, largest wins
    let mut best: Option<((usize, usize, isize, isize), Vec<&str>)> = None;

    for start_h in 0..hyp.len() {
        for start_r in 0..reference.len() {
            if start_h.abs_diff(start_r) > MAX_SHIFT_DIST {
                continue;
            }
            let mut len = 0;
            while start_h + len < hyp.len()
                && start_r + len < reference.len()
                && len < MAX_SHIFT_SIZE
                && hyp[start_h + len] == reference[start_r + len]
            {
                len += 1;
                if al.hyp_err[start_h..start_h + len].iter().all(|e| !e) {
                    continue;
                }
                if al.ref_err[start_r..start_r + len].iter().all(|e| !e) {
                    continue;
                }
                let a = al.align[start_r];
                if a >= start_h as isize && a < (start_h + len) as isize {
                    continue;
                }
                let mut prev_idx = None;
                for offset in -1isize..len as isize {
                    let pos = start_r as isize + offset;
                    let idx = if pos == -1 {
                        0
                    } else {
                        (al.align[pos as usize] + 1) as usize
                    };
                    if prev_idx == Some(idx) {
                        continue;
                    }
                    prev_idx = Some(idx);
                    let shifted = perform_shift(hyp, start_h, len, idx);
                    let post = edit_distance(&shifted, reference);
                    let gain = pre.saturating_sub(post);
                    if post >= pre {
                        continue;
                    }
                    let key = (gain, len, -(start_h as isize), -(idx as isize));
                    if best.as_ref().is_none_or(|(k, _)| key > *k) {
                        best = Some((key, shifted));
                    }
                }
            }
        }
    }
    best.map(|(k, s)| (k.0, s))
}

/// Edits for one sentence pair: greedy shifts while they reduce the edit
/// distance, then Levenshtein on the shifted hypothesis.
pub fn sentence_edits<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> EditCounts {
    let reference: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let mut current: Vec<&str> = hyp.iter().map(AsRef::as_ref).collect();
    let mut shifts = 0;
    if !reference.is_empty() {
        while let Some((_, shifted)) = best_shift(&current, &reference) {
            current = shifted;
            shifts += 1;
        }
    }
    let (_, ops) = edit_trace(&current, &reference);
    let mut e = EditCounts {
        shifts,
        ..Default::default()
    };
    for op in ops {
        match op {
            Op::Match => {}
            Op::Sub => e.substitutions += 1,
            Op::Ins => e.insertions += 1,
            Op::Del => e.deletions += 1,
        }
    }
    e
}

/// Corpus TER: total edits over total reference words, times 100.
pub fn ter<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>]) -> Result<TerScore, EvalError> {
    check_lengths(hyps.len(), refs.len())?;
    let ref_words: u64 = refs.iter().map(|r| r.len() as u64).sum();
    if ref_words == 0 {
        return Err(EvalError::EmptyReference);
    }
    let mut edits = EditCounts::default();
    for (h, r) in hyps.iter().zip(refs) {
        edits.add(&sentence_edits(h, r));
    }
    Ok(TerScore {
        ter: 100.0 * edits.total() as f64 / ref_words as f64,
        edits,
        ref_words,
    })
}

/// Minimum over every arrangement reachable by block moves of
/// `moves + edit_distance(arrangement, reference)`, by breadth-first search.
/// Exponential; intended for sentences of a handful of words.
pub fn exhaustive_edits<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> usize {
    let start: Vec<&str> = hyp.iter().map(AsRef::as_ref).collect();
    let reference: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let mut dist: HashMap<Vec<&str>, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    dist.insert(start.clone(), 0);
    queue.push_back(start);
    let mut best = usize::MAX;
    while let Some(cur) = queue.pop_front() {
        let moves = dist[&cur];
        if moves >= best {
            continue;
        }
        best = best.min(moves + edit_distance(&cur, &reference));
        let n = cur.len();
        for start in 0..n {
            for len in 1..=n - start {
                for target in 0..=n {
                    if target >= start && target <= start + len {
                        continue;
                    }
                    let next = perform_shift(&cur, start, len, target);
                    if !dist.contains_key(&next) {
                        dist.insert(next.clone(), moves + 1);
                        queue.push_back(next);
                    }
                }
            }
        }
    }
    best
}
