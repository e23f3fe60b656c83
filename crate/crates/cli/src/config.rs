//! TOML config file. Each subcommand reads its own table; a key set on the
//! command line wins over the file, and the file wins over built-in defaults.
//!
//! ```toml
//! [train]
//! epochs = 10
//! lr = 0.1
//! clip_norm = 0      # 0 turns clipping off
//!
//! [translate]
//! beam = 4
//! combination = "geometric"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default, rename = "build-vocab")]
    pub build_vocab: VocabSection,
    #[serde(default)]
    pub stats: StatsSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default, rename = "continue")]
    pub continue_: TrainSection,
    #[serde(default)]
    pub translate: DecodeSection,
    #[serde(default)]
    pub score: ScoreSection,
    #[serde(default)]
    pub curve: CurveSection,
    #[serde(default, rename = "serve-eval")]
    pub serve_eval: ServeSection,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabSection {
    pub size: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsSection {
    pub max_len: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lr: Option<f64>,
    pub clip_norm: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub checkpoint_every: Option<usize>,
    pub max_len: Option<usize>,
    pub vocab_size: Option<usize>,
    pub embedding_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub attention_hidden: Option<usize>,
    pub readout_hidden: Option<usize>,
    pub max_decode_len: Option<usize>,
    pub rebuild_vocab: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeSection {
    pub beam: Option<usize>,
    pub max_len: Option<usize>,
    pub length_normalize: Option<bool>,
    /// `"arithmetic"` or `"geometric"`.
    pub combination: Option<String>,
    pub weights: Option<Vec<f64>>,
    pub parallel: Option<bool>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSection {
    pub smoothing: Option<bool>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSection {
    pub beam: Option<usize>,
    pub max_len: Option<usize>,
    pub length_normalize: Option<bool>,
    pub ensemble: Option<bool>,
    pub smoothing: Option<bool>,
    pub parallel: Option<bool>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeSection {
    pub addr: Option<String>,
    pub store: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        toml::from_str(&text)
            .map_err(|e| CliError::config(format!("config {}: {e}", path.display())))
    }
}

/// Flag, then config, then default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Like [`pick`] for switches, where an absent flag means "not given".
pub fn pick_switch(flag: bool, file: Option<bool>) -> bool {
    flag || file.unwrap_or(false)
}
