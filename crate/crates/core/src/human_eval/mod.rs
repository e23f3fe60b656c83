//! Blind human evaluation: sessions that present shuffled (sentence, system)
//! items, collect 0-5 judgments, and aggregate them per system.

mod store;

pub use store::{SessionStore, StoreError};

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::tokenize;

pub const MAX_SCORE: u8 = 5;
pub const DEFAULT_SAMPLE_SIZE: usize = 50;
pub const MAX_SENTENCE_LEN: usize = 50;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SessionError {
    #[error("no source sentences")]
    NoSources,
    #[error("no systems")]
    NoSystems,
    #[error("system {system} has {found} translations for {expected} sources")]
    CoverageGap {
        system: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate system name {0}")]
    DuplicateSystem(String),
    #[error("sample size {requested} exceeds the {available} eligible sentences")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("sample size must be at least 1")]
    ZeroSample,
    #[error("unknown item {0}")]
    UnknownItem(u32),
    #[error("score {0} outside 0..=5")]
    ScoreOutOfRange(i64),
    #[error("item {item_id} already judged with score {existing}; resubmit with overwrite to change it")]
    AlreadyJudged { item_id: u32, existing: u8 },
    #[error("session incomplete: {judged} of {total} items judged")]
    Incomplete { judged: usize, total: usize },
    #[error("no judgments recorded")]
    NoJudgments,
}

/// Whether the annotator sees one translation per screen or all of a
/// sentence's translations together.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisplayMode {
    #[default]
    Single,
    SideBySide,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemOutput {
    pub name: String,
    /// One translation per source line.
    pub translations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub sources: Vec<String>,
    pub systems: Vec<SystemOutput>,
    pub seed: u64,
    pub sample_size: usize,
    #[serde(default)]
    pub display: DisplayMode,
    #[serde(default)]
    pub annotator: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: u32,
    /// Index into the session's sampled sentences.
    pub sentence: usize,
    /// Index into the session's systems.
    pub system: usize,
}

/// Everything fixed at creation time. Stored server-side only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub id: String,
    pub token: String,
    pub annotator: Option<String>,
    pub seed: u64,
    pub display: DisplayMode,
    /// Line numbers (0-based) of the sampled sentences in the input.
    pub source_lines: Vec<usize>,
    pub sources: Vec<String>,
    pub systems: Vec<String>,
    /// `translations[system][sentence]`.
    pub translations: Vec<Vec<String>>,
    /// Presentation order; `items[k].id == k`.
    pub items: Vec<Item>,
}

impl Manifest {
    /// Samples sentences of at most [`MAX_SENTENCE_LEN`] tokens and orders
    /// every (sentence, system) pair by a seeded permutation.
    pub fn build(id: String, token: String, spec: &SessionSpec) -> Result<Self, SessionError> {
        if spec.sources.is_empty() {
            return Err(SessionError::NoSources);
        }
        if spec.systems.is_empty() {
            return Err(SessionError::NoSystems);
        }
        if spec.sample_size == 0 {
            return Err(SessionError::ZeroSample);
        }
        for (k, s) in spec.systems.iter().enumerate() {
            if s.translations.len() != spec.sources.len() {
                return Err(SessionError::CoverageGap {
                    system: s.name.clone(),
                    expected: spec.sources.len(),
                    found: s.translations.len(),
                });
            }
            if spec.systems[..k].iter().any(|o| o.name == s.name) {
                return Err(SessionError::DuplicateSystem(s.name.clone()));
            }
        }
        let eligible: Vec<usize> = spec
            .sources
            .iter()
            .enumerate()
            .filter(|(_, s)| {
                let n = tokenize(s).len();
                n > 0 && n <= MAX_SENTENCE_LEN
            })
            .map(|(i, _)| i)
            .collect();
        if spec.sample_size > eligible.len() {
            return Err(SessionError::SampleTooLarge {
                requested: spec.sample_size,
                available: eligible.len(),
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut source_lines: Vec<usize> = index::sample(&mut rng, eligible.len(), spec.sample_size)
            .into_iter()
            .map(|k| eligible[k])
            .collect();
        source_lines.sort_unstable();

        let mut pairs: Vec<(usize, usize)> = (0..source_lines.len())
            .flat_map(|s| (0..spec.systems.len()).map(move |y| (s, y)))
            .collect();
        pairs.shuffle(&mut rng);
        let items = pairs
            .into_iter()
            .enumerate()
            .map(|(k, (sentence, system))| Item {
                id: k as u32,
                sentence,
                system,
            })
            .collect();

        Ok(Manifest {
            id,
            token,
            annotator: spec.annotator.clone(),
            seed: spec.seed,
            display: spec.display,
            sources: source_lines.iter().map(|&i| spec.sources[i].clone()).collect(),
            translations: spec
                .systems
                .iter()
                .map(|s| source_lines.iter().map(|&i| s.translations[i].clone()).collect())
                .collect(),
            systems: spec.systems.iter().map(|s| s.name.clone()).collect(),
            source_lines,
            items,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub judged: usize,
    pub total: usize,
}

/// Annotator-facing view of one item. Carries no system identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemView {
    pub item_id: u32,
    pub source_text: String,
    pub translation_text: String,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationView {
    pub item_id: u32,
    pub translation_text: String,
}

/// Annotator-facing view of all unjudged translations of one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupView {
    pub source_text: String,
    pub items: Vec<TranslationView>,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NextView {
    Single(ItemView),
    SideBySide(GroupView),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub item_id: u32,
    /// Wide so out-of-range submissions reach validation instead of failing
    /// to parse.
    pub score: i64,
    #[serde(default)]
    pub overwrite: bool,
}

/// Outcome of a judgment submission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub item_id: u32,
    pub score: u8,
    pub progress: Progress,
    /// The same score was already stored; nothing changed.
    pub duplicate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemReport {
    pub system: String,
    /// `counts[k]` = number of items scored `k`.
    pub counts: [u64; 6],
    pub judged: u64,
    /// `Σ k · counts[k]`.
    pub score_sum: u64,
    /// Average rounded half-up to two decimals, as text.
    pub average: String,
}

impl SystemReport {
    pub fn from_counts(system: &str, counts: [u64; 6]) -> Self {
        let judged: u64 = counts.iter().sum();
        let score_sum: u64 = counts.iter().enumerate().map(|(k, c)| k as u64 * c).sum();
        SystemReport {
            system: system.to_string(),
            counts,
            judged,
            score_sum,
            average: format_hundredths(average_hundredths(score_sum, judged)),
        }
    }

    /// Exact average as a float; `average_value() * judged == score_sum` up
    /// to the float conversion.
    pub fn average_value(&self) -> f64 {
        if self.judged == 0 {
            0.0
        } else {
            self.score_sum as f64 / self.judged as f64
        }
    }
}

/// `sum / n` in hundredths, rounded half up, in integer arithmetic.
pub fn average_hundredths(sum: u64, n: u64) -> u64 {
    if n == 0 {
        return 0;
    }
    (sum * 200 + n) / (2 * n)
}

pub fn format_hundredths(h: u64) -> String {
    format!("{}.{:02}", h / 100, h % 100)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub session_id: String,
    pub annotator: Option<String>,
    /// Set when the report was requested before every item was judged.
    pub partial: bool,
    pub progress: Progress,
    pub systems: Vec<SystemReport>,
}

impl AggregateReport {
    /// Fixed-width text table: one row per system with counts 0..5 and the
    /// average.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        if self.partial {
            out.push_str(&format!(
                "PARTIAL REPORT: {} of {} items judged\n",
                self.progress.judged, self.progress.total
            ));
        }
        let width = self.systems.iter().map(|s| s.system.len()).max().unwrap_or(6).max(6);
        out.push_str(&format!("{:width$} {:>4} {:>4} {:>4} {:>4} {:>4} {:>4} {:>5}\n", "system", 0, 1, 2, 3, 4, 5, "avg"));
        for s in &self.systems {
            out.push_str(&format!("{:width$}", s.system));
            for c in s.counts {
                out.push_str(&format!(" {c:>4}"));
            }
            out.push_str(&format!(" {:>5}\n", s.average));
        }
        out
    }
}

/// A session plus its judgments, independent of storage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub manifest: Manifest,
    judgments: BTreeMap<u32, u8>,
}

impl Session {
    pub fn new(manifest: Manifest) -> Self {
        Session {
            manifest,
            judgments: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.manifest.id
    }

    pub fn progress(&self) -> Progress {
        Progress {
            judged: self.judgments.len(),
            total: self.manifest.items.len(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.judgments.len() == self.manifest.items.len()
    }

    pub fn judgments(&self) -> &BTreeMap<u32, u8> {
        &self.judgments
    }

    fn item(&self, id: u32) -> Result<&Item, SessionError> {
        self.manifest
            .items
            .get(id as usize)
            .ok_or(SessionError::UnknownItem(id))
    }

    /// The first unjudged item in presentation order, or `None` when done.
    pub fn next(&self) -> Option<NextView> {
        let item = self
            .manifest
            .items
            .iter()
            .find(|it| !self.judgments.contains_key(&it.id))?;
        let m = &self.manifest;
        let progress = self.progress();
        Some(match m.display {
            DisplayMode::Single => NextView::Single(ItemView {
                item_id: item.id,
                source_text: m.sources[item.sentence].clone(),
                translation_text: m.translations[item.system][item.sentence].clone(),
                progress,
            }),
            DisplayMode::SideBySide => NextView::SideBySide(GroupView {
                source_text: m.sources[item.sentence].clone(),
                items: m
                    .items
                    .iter()
                    .filter(|it| it.sentence == item.sentence && !self.judgments.contains_key(&it.id))
                    .map(|it| TranslationView {
                        item_id: it.id,
                        translation_text: m.translations[it.system][it.sentence].clone(),
                    })
                    .collect(),
                progress,
            }),
        })
    }

    /// Validates a judgment. `Ok(None)` means it repeats the stored score and
    /// needs no write.
    pub fn check(&self, j: &Judgment) -> Result<Option<()>, SessionError> {
        self.item(j.item_id)?;
        if !(0..=MAX_SCORE as i64).contains(&j.score) {
            return Err(SessionError::ScoreOutOfRange(j.score));
        }
        match self.judgments.get(&j.item_id) {
            Some(&s) if s as i64 == j.score => Ok(None),
            Some(&existing) if !j.overwrite => Err(SessionError::AlreadyJudged {
                item_id: j.item_id,
                existing,
            }),
            _ => Ok(Some(())),
        }
    }

    /// Applies an already-validated judgment.
    pub fn apply(&mut self, j: &Judgment) {
        self.judgments.insert(j.item_id, j.score as u8);
    }

    /// Validates and applies in memory; for storage-free use.
    pub fn record(&mut self, j: Judgment) -> Result<Ack, SessionError> {
        let fresh = self.check(&j)?.is_some();
        if fresh {
            self.apply(&j);
        }
        Ok(self.ack(&j, !fresh))
    }

    pub fn ack(&self, j: &Judgment, duplicate: bool) -> Ack {
        Ack {
            item_id: j.item_id,
            score: j.score as u8,
            progress: self.progress(),
            duplicate,
        }
    }

    /// Per-system histograms. Requires a complete session unless `partial`.
    pub fn report(&self, partial: bool) -> Result<AggregateReport, SessionError> {
        let progress = self.progress();
        if !self.is_complete() && !partial {
            return Err(SessionError::Incomplete {
                judged: progress.judged,
                total: progress.total,
            });
        }
        if self.judgments.is_empty() {
            return Err(SessionError::NoJudgments);
        }
        let mut counts = vec![[0u64; 6]; self.manifest.systems.len()];
        for (&id, &score) in &self.judgments {
            let item = self.manifest.items[id as usize];
            counts[item.system][score as usize] += 1;
        }
        Ok(AggregateReport {
            session_id: self.manifest.id.clone(),
            annotator: self.manifest.annotator.clone(),
            partial: !self.is_complete(),
            progress,
            systems: self
                .manifest
                .systems
                .iter()
                .zip(counts)
                .map(|(name, c)| SystemReport::from_counts(name, c))
                .collect(),
        })
    }
}
